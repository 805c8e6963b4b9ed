"""Numerical certificates: existence conditions, Cauchy-Schwarz dichotomies, identities.

Every report compares two computed numbers. ``margin = (rhs - lhs) / |rhs|``;
a positive margin beyond ``tol_eq`` means the strict inequality holds
("fires"), a margin within ``tol_eq`` is an equality case (for the
dichotomies, the "or the domain is a ball" branch), anything else fails.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .grid import (BoundaryTrace, Disk, Grid, LevelSet, Polygon, ScalarField, SourceSpec,
                   extract_boundary, signed_distance, volume_integral)
from .pde import (PoissonSolution, boundary_gradient, extend_across, first_eigenvalue,
                  solve_cascade, solve_poisson)
from .shapeopt import GSpec

TOL_EQ = 0.02
GAUSS_POINTS = 8
Shape = Union[Disk, Polygon]


@dataclass
class CertificateReport:
    id: str
    lhs: float
    rhs: float
    tol_eq: float = TOL_EQ
    provenance: list[str] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        if not (math.isfinite(self.lhs) and math.isfinite(self.rhs)):
            raise ValueError(f"{self.id}: non-finite sides lhs={self.lhs} rhs={self.rhs}")

    @property
    def margin(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else -math.copysign(math.inf, self.lhs)
        return (self.rhs - self.lhs) / abs(self.rhs)

    @property
    def verdict(self) -> str:
        m = self.margin
        if abs(m) <= self.tol_eq:
            return "equality_case"
        return "fires" if m > 0 else "fails"

    @property
    def fires(self) -> bool:
        return self.verdict == "fires"

    def to_json(self) -> dict:
        return {"id": self.id, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "verdict": self.verdict, "tol_eq": self.tol_eq,
                "provenance": list(self.provenance), "notes": self.notes}


def reports_to_csv(reports: Sequence[CertificateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "lhs", "rhs", "margin", "verdict"])
    for r in reports:
        w.writerow([r.id, repr(r.lhs), repr(r.rhs), repr(r.margin), r.verdict])
    return buf.getvalue()


# -- exact boundary quadrature on the convex set -----------------------------------

def shape_boundary_integral(shape: Shape, func: Callable[[np.ndarray], np.ndarray]) -> float:
    """Gauss-Legendre per polygon edge; periodic trapezoid on circles."""
    if isinstance(shape, Disk):
        m = 4096
        t = 2 * np.pi * np.arange(m) / m
        pts = np.column_stack([shape.center[0] + shape.radius * np.cos(t),
                               shape.center[1] + shape.radius * np.sin(t)])
        return float(np.sum(func(pts)) * 2 * np.pi * shape.radius / m)
    x, w = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    s = 0.5 * (x + 1)
    V = shape.array
    total = 0.0
    for a, b in zip(V, np.roll(V, -1, axis=0)):
        pts = a + s[:, None] * (b - a)
        total += 0.5 * float(np.linalg.norm(b - a)) * float(np.dot(w, func(pts)))
    return total


def _perimeter(shape: Shape) -> float:
    return 2 * np.pi * shape.radius if isinstance(shape, Disk) else shape.perimeter()


def hull_grid(shape: Shape, n: int = 256) -> Grid:
    """Square grid around ``shape`` with a 10% margin, never thinner than 6 cells."""
    x0, y0, x1, y1 = shape.bounds()
    half = 0.5 * max(x1 - x0, y1 - y0)
    half = max(1.1 * half, half * n / (n - 12))
    return Grid.square(half, n, ((x0 + x1) / 2, (y0 + y1) / 2))


@dataclass
class _Solves:
    """Solves on a fixed convex set, shared by all reports of one registry call."""
    shape: Shape
    f: object
    grid: Grid
    ls: LevelSet = field(init=False)
    _cache: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        self.ls = signed_distance(self.shape, self.grid)

    def trace(self) -> BoundaryTrace:
        if "trace" not in self._cache:
            self._cache["trace"] = extract_boundary(self.ls)
        return self._cache["trace"]

    def cascade(self, unit: bool = False) -> list[PoissonSolution]:
        key = "unit" if unit else "f"
        if key not in self._cache:
            self._cache[key] = solve_cascade(self.ls, 1.0 if unit else self.f, 2)
        return self._cache[key]

    def grads(self, unit: bool = False):
        key = "grads_unit" if unit else "grads_f"
        if key not in self._cache:
            u, v = self.cascade(unit)
            self._cache[key] = (boundary_gradient(u, self.trace()), boundary_gradient(v, self.trace()))
        return self._cache[key]

    def provenance(self, unit: bool = False) -> list[str]:
        out = []
        for name, s in zip(("u", "v"), self.cascade(unit)):
            src = "1" if unit else "f"
            out.append(f"{name}: poisson on C (n={self.grid.nx}, source {src if name == 'u' else 'u'}) "
                       f"iterations={s.iterations} residual={s.linear_residual:.2e}")
        return out

    def integral(self, values: np.ndarray) -> float:
        return volume_integral(self.ls, ScalarField(self.grid, values))


# -- sufficient conditions ---------------------------------------------------------

def cert_qs_sufficient(f: SourceSpec, g: GSpec, tol_eq: float = TOL_EQ) -> CertificateReport:
    """int_{dC} g < int_C f on the hull C of the support of f."""
    lhs = shape_boundary_integral(f.hull, g)
    rhs = f.total()
    return CertificateReport("qs_sufficient", lhs, rhs, tol_eq,
                             ["boundary quadrature on hull polygon", "exact piece areas"],
                             {"hull_vertices": len(f.hull.vertices)})


def cert_bilap_sufficient(f: SourceSpec, g: GSpec, grid: Optional[Grid] = None,
                          tol_eq: float = TOL_EQ, n: int = 256,
                          _solves: Optional[_Solves] = None) -> CertificateReport:
    """(int_{dC} sqrt g)^2 / int_C u_C < int_C f."""
    S = _solves or _Solves(f.hull, f, grid or hull_grid(f.hull, n))
    u = S.cascade()[0]
    phi_sqrt = shape_boundary_integral(f.hull, g.sqrt)
    torsion = S.integral(u.u.values)
    return CertificateReport("bilap_sufficient", phi_sqrt ** 2 / torsion, f.total(), tol_eq,
                             S.provenance()[:1],
                             {"phi_sqrt_g": phi_sqrt, "int_u": torsion})


# -- means ---------------------------------------------------------------------------

MEAN_ORDER = ("m", "H", "G", "A", "sqrtQ", "M")


@dataclass
class MeansReport:
    means: dict
    ordered: bool
    order: tuple = MEAN_ORDER

    def to_json(self) -> dict:
        return {"means": self.means, "ordered": self.ordered, "order": list(self.order),
                "propagation": "a solution for the source given by an earlier mean implies "
                               "one for every later mean"}


def means_chain(values, rtol: float = 1e-12) -> MeansReport:
    """Minimum, harmonic, geometric, arithmetic, root-mean-square and maximum.

    ``values`` is a sequence of positive numbers, or an (n, ...) array of
    pointwise samples (means taken along the first axis, ordering checked
    everywhere).
    """
    a = np.asarray(values, dtype=float)
    if a.ndim == 0 or a.shape[0] < 1:
        raise ValueError("need at least one value")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError("means need positive finite values")
    n = a.shape[0]
    means = {
        "m": a.min(axis=0),
        "H": n / np.sum(1.0 / a, axis=0),
        "G": np.exp(np.mean(np.log(a), axis=0)),
        "A": np.mean(a, axis=0),
        "sqrtQ": np.sqrt(np.mean(a * a, axis=0)),
        "M": a.max(axis=0),
    }
    seq = [means[k] for k in MEAN_ORDER]
    ordered = all(np.all(lo <= hi * (1 + rtol)) for lo, hi in zip(seq, seq[1:]))
    out = {k: (float(v) if np.ndim(v) == 0 else np.asarray(v).tolist()) for k, v in means.items()}
    out["Q"] = out["sqrtQ"] ** 2 if np.ndim(means["sqrtQ"]) == 0 else (means["sqrtQ"] ** 2).tolist()
    return MeansReport(out, bool(ordered))


# -- Cauchy-Schwarz family ------------------------------------------------------------

def default_test_function(shape: Shape) -> Callable[[np.ndarray], np.ndarray]:
    """phi = 1 + (rho^2 - |x - c|^2) / 4: positive on the shape, Laplacian -1."""
    if isinstance(shape, Disk):
        c = np.asarray(shape.center, dtype=float)
        rho = shape.radius
    else:
        V = shape.array
        c = V.mean(axis=0)
        rho = float(np.max(np.hypot(*(V - c).T)))

    def phi(pts):
        pts = np.atleast_2d(pts)
        return 1.0 + (rho * rho - np.sum((pts - c) ** 2, axis=1)) / 4.0
    return phi


def check_superharmonic(phi: Callable, S: _Solves, tol: float = 1e-8) -> tuple[bool, float]:
    """5-point Laplacian of phi at interior nodes of C (one-cell margin)."""
    grid = S.grid
    vals = phi(grid.points()).reshape(grid.shape)
    lap = np.zeros_like(vals)
    lap[1:-1, 1:-1] = ((vals[1:-1, 2:] - 2 * vals[1:-1, 1:-1] + vals[1:-1, :-2]) / grid.hx ** 2
                       + (vals[2:, 1:-1] - 2 * vals[1:-1, 1:-1] + vals[:-2, 1:-1]) / grid.hy ** 2)
    interior = S.ls.phi < -grid.h
    scale = max(1.0, float(np.abs(vals[interior]).max())) / grid.h ** 2
    worst = float(lap[interior].max())
    positive = float(vals[S.ls.phi < 0].min()) > 0
    return bool(worst <= tol * scale and positive), worst


def _green_test_function(S: _Solves, phi: Callable, tol_eq: float) -> CertificateReport:
    ok, worst = check_superharmonic(phi, S)
    if not ok:
        raise ValueError(f"test function must be positive with Laplacian <= 0 on C (max {worst:.3e})")
    bu, _ = S.grads()
    tr = bu.trace
    lhs = bu.integrate(bu.values * phi(tr.points))
    fphi = lambda p: np.asarray(S.f(p) if callable(S.f) else S.f, dtype=float) * phi(p)
    rhs = volume_integral(S.ls, fphi)
    return CertificateReport("green_test_function", lhs, rhs, tol_eq, S.provenance()[:1],
                             {"max_laplacian": worst, "flagged": bu.n_flagged})


def cert_cs_family(f: SourceSpec, g: GSpec, C: Optional[Shape] = None, grid: Optional[Grid] = None,
                   test_function: Optional[Callable] = None, tol_eq: float = TOL_EQ, n: int = 256,
                   _solves: Optional[_Solves] = None) -> list[CertificateReport]:
    """One report per Cauchy-Schwarz inequality evaluated on C (default: hull of f)."""
    C = C if C is not None else f.hull
    S = _solves or _Solves(C, f, grid or hull_grid(C, n))
    u, v = S.cascade()
    bu, bv = S.grads()
    tr = S.trace()
    pts = tr.points
    w = tr.weights
    ok = ~(bu.flagged | bv.flagged)
    wk = np.where(ok, w, 0.0)
    sg = g.sqrt(pts)
    gv = g(pts)
    phi_sqrt = float(np.dot(w, sg))
    phi_g = float(np.dot(w, gv))
    perim = tr.length
    int_f = f.total() if C is f.hull else S.integral(S.grid.sample(f).values)
    int_u = S.integral(u.u.values)
    prov = S.provenance()
    reports = []

    phi = test_function or default_test_function(C)
    reports.append(_green_test_function(S, phi, tol_eq))

    fu = np.sqrt(np.maximum(S.grid.sample(f).values * u.u.values, 0.0))
    reports.append(CertificateReport("sqrt_source_flux", phi_sqrt, S.integral(fu), tol_eq, prov[:1]))

    reports.append(CertificateReport(
        "cs_qs_boundary", phi_sqrt ** 2, perim * int_f, tol_eq, prov[:1],
        {"hypothesis_grad_u_ge_g": bool(np.all(bu.values[ok] >= gv[ok]))}))

    reports.append(CertificateReport(
        "cs_cascade_boundary", phi_sqrt ** 2, perim * int_u, tol_eq, prov,
        {"hypothesis_grad_v_ge_g": bool(np.all(bv.values[ok] >= gv[ok]))}))

    # u/v stays bounded at the boundary (ratio of normal derivatives); use the
    # extended fields so cut cells see the limit instead of a 0/0
    ue = extend_across(S.ls, u.u)
    ve = extend_across(S.ls, v.u)
    band = S.ls.phi < 3 * S.grid.h
    ratio = np.zeros(S.grid.shape)
    good = band & (ve > 0)
    ratio[good] = ue[good] / ve[good]
    int_uv = S.integral(u.u.values * v.u.values)
    int_ratio = S.integral(ratio)
    reports.append(CertificateReport(
        "cs_product_split", phi_g, math.sqrt(int_uv * int_ratio), tol_eq, prov,
        {"int_uv": int_uv, "int_u_over_v": int_ratio,
         "hypothesis_g_le_grad_v": bool(np.all(gv[ok] <= bv.values[ok]))}))

    u1, v1 = S.cascade(unit=True)
    bu1, bv1 = S.grads(unit=True)
    ok1 = ~(bu1.flagged | bv1.flagged) & (bv1.values > 0)
    w1 = np.where(ok1, w, 0.0)
    gv1 = bv1.values
    inv = np.where(ok1, 1.0 / np.where(ok1, gv1, 1.0), 0.0)
    reports.append(CertificateReport(
        "cs_inverse_gradient", float(np.sum(w1)) ** 2,
        float(np.dot(w1, gv1)) * float(np.dot(w1, inv)), tol_eq, S.provenance(unit=True),
        {"grad_v_spread": float(np.ptp(gv1[ok1]) / np.mean(gv1[ok1])) if ok1.any() else None}))

    area = volume_integral(S.ls)
    int_u1 = S.integral(u1.u.values)
    reports.append(CertificateReport(
        "cs_unit_cascade", phi_sqrt ** 2, area * int_u1, tol_eq, S.provenance(unit=True),
        {"hypothesis_g_le_sqrt_product": bool(np.all(gv[ok1] <= np.sqrt(bu1.values * bv1.values)[ok1]))}))
    return reports


# -- eigenvalue and identities -----------------------------------------------------------

def cert_lambda1(C: Shape, g: Optional[GSpec] = None, grid: Optional[Grid] = None,
                 tol_eq: float = TOL_EQ, n: int = 256, band_cells: float = 2.0) -> CertificateReport:
    """lambda_1(C) int_C u_C <= |C| with u_C the torsion function (source 1).

    With ``g`` also reports int_{dC} g against (1/lambda_1) int 1/u_C, the
    latter truncated to {phi < -band_cells h} because 1/u_C is not integrable
    up to the boundary.
    """
    grid = grid or hull_grid(C, n)
    ls = signed_distance(C, grid)
    sol = solve_poisson(ls, 1.0)
    lam = first_eigenvalue(ls)
    int_u = volume_integral(ls, sol.u)
    area = volume_integral(ls)
    notes = {"lambda1": lam, "int_u": int_u, "area": area}
    if g is not None:
        deep = LevelSet(grid, ls.phi + band_cells * grid.h)
        inv = np.where(deep.phi < 0, 1.0 / np.where(sol.u.values > 0, sol.u.values, 1.0), 0.0)
        notes.update({
            "boundary_g": shape_boundary_integral(C, g),
            "inverse_torsion_bound": volume_integral(deep, ScalarField(grid, inv)) / lam,
            "truncation": band_cells * grid.h,
        })
    return CertificateReport("lambda1_torsion", lam * int_u, area, tol_eq,
                             [f"poisson on C (n={grid.nx}) iterations={sol.iterations}",
                              "inverse iteration for lambda_1"], notes)


def pohozaev_check(ls: LevelSet, sol: PoissonSolution, tol_eq: float = TOL_EQ) -> CertificateReport:
    """int_{dOmega} |grad u|^2 x.nu against 4 int u, for the unit-source solution."""
    bg = boundary_gradient(sol)
    tr = bg.trace
    xn = np.einsum("ij,ij->i", tr.points, tr.normals)
    lhs = bg.integrate(bg.values ** 2 * xn)
    rhs = 4.0 * volume_integral(ls, sol.u)
    notes = {"flagged": bg.n_flagged}
    if np.any(xn <= 0):
        notes["warning"] = "not star-shaped: x.nu <= 0 at some boundary vertex"
    return CertificateReport("pohozaev", lhs, rhs, tol_eq,
                             [f"poisson iterations={sol.iterations} residual={sol.linear_residual:.2e}"],
                             notes)


SUFFICIENT = ("qs_sufficient", "bilap_sufficient", "sqrt_source_flux")


def registry(f: SourceSpec, g: GSpec, grid: Optional[Grid] = None, n: int = 256,
             tol_eq: float = TOL_EQ, test_function: Optional[Callable] = None) -> list[CertificateReport]:
    """Every certificate computable from (f, g) and solves on the hull of f."""
    S = _Solves(f.hull, f, grid or hull_grid(f.hull, n))
    out = [cert_qs_sufficient(f, g, tol_eq), cert_bilap_sufficient(f, g, tol_eq=tol_eq, _solves=S)]
    out += cert_cs_family(f, g, tol_eq=tol_eq, test_function=test_function, _solves=S)
    out.append(cert_lambda1(f.hull, g, S.grid, tol_eq))
    return out


def any_sufficient_fires(reports: Sequence[CertificateReport]) -> bool:
    return any(r.fires for r in reports if r.id in SUFFICIENT)
