"""Level-set descent solvers and certificates for quadrature-surface free boundaries."""
from . import certificates, grid, oracle, pde, shapeopt

__version__ = "0.1.0"
__all__ = ["certificates", "grid", "oracle", "pde", "shapeopt"]
