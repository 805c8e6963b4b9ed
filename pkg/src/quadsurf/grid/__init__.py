"""Cartesian grid, level-set geometry, zero-set extraction and quadrature."""
from .core import (Disk, GeometryError, Grid, LevelSet, Polygon, ScalarField, SourceSpec,
                   bilinear, curvature, dump_field, ellipse_polygon, load_field, rectangle,
                   shape_from_json, signed_distance)
from .contour import BoundaryTrace, boundary_integral, extract_boundary, volume_integral
from .hull import convex_hull
from .reinit import reinitialize

__all__ = [
    "BoundaryTrace", "Disk", "GeometryError", "Grid", "LevelSet", "Polygon", "ScalarField",
    "SourceSpec", "bilinear", "boundary_integral", "convex_hull", "curvature", "dump_field",
    "ellipse_polygon", "extract_boundary", "load_field", "rectangle", "reinitialize",
    "shape_from_json", "signed_distance", "volume_integral",
]
