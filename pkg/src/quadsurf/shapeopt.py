"""Level-set descent for the quadrature-surface and bi-Laplacian free boundaries.

Both problems are posed as minimization over domains containing the source
hull. Each iteration solves on the current domain, samples the boundary
gradients, turns the shape derivative into a normal speed, and takes an
upwind advection step guarded by a backtracking line search on the energy.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .grid import (BoundaryTrace, GeometryError, Grid, LevelSet, Polygon, ScalarField, SourceSpec,
                   extract_boundary, reinitialize, signed_distance, volume_integral)
from .pde import (BoundaryGradient, PoissonSolution, SolverError, assemble, boundary_gradient,
                  sample_source, solve_poisson)

BAND_CELLS = 6.0
FREE_CELLS = 2.0
J_SLACK = 1e-12


# -- boundary data ------------------------------------------------------------

@dataclass(frozen=True)
class GSpec:
    """Positive boundary datum: constant, k |x|^alpha, or a tabulated field."""
    kind: str
    k: float = 1.0
    alpha: float = 0.0
    table: Optional[ScalarField] = None
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("constant", "radial_power", "tabulated"):
            raise ValueError(f"unknown g kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated g needs a field")
        elif not self.k > 0:
            raise ValueError("g needs k > 0")

    @classmethod
    def constant(cls, k: float) -> "GSpec":
        return cls("constant", float(k))

    @classmethod
    def radial_power(cls, k: float, alpha: float) -> "GSpec":
        return cls("radial_power", float(k), float(alpha))

    def raw(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.kind == "constant":
            return np.full(len(pts), self.k)
        if self.kind == "radial_power":
            return self.k * np.hypot(pts[:, 0], pts[:, 1]) ** self.alpha
        return self.table.interpolate(pts)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        vals = self.raw(pts)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("g must be positive and finite at every evaluated point")
        return vals

    def squared(self, pts: np.ndarray) -> np.ndarray:
        return self.raw(pts) ** 2

    def sqrt(self, pts: np.ndarray) -> np.ndarray:
        return np.sqrt(self(pts))

    def scaled(self, factor: float) -> "GSpec":
        if self.kind == "tabulated":
            return GSpec("tabulated", table=ScalarField(self.table.grid, self.table.values * factor),
                         path=self.path)
        return GSpec(self.kind, self.k * factor, self.alpha)

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "k": self.k}
        if self.kind == "radial_power":
            return {"kind": "radial_power", "k": self.k, "alpha": self.alpha}
        return {"kind": "tabulated", "path": self.path}


@dataclass(frozen=True)
class DescentParams:
    cfl: float = 0.5
    max_iters: int = 500
    tol_residual: float = 0.05
    reinit_every: int = 5
    backtrack_max: int = 8

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iters < 0 or self.reinit_every < 1 or self.backtrack_max < 0:
            raise ValueError("iteration counts out of range")

    def to_json(self) -> dict:
        return asdict(self)


# -- functionals ----------------------------------------------------------------

def _cell(ls: LevelSet) -> float:
    return ls.grid.hx * ls.grid.hy


def functional_qs(ls: LevelSet, f, g: GSpec, sol: Optional[PoissonSolution] = None) -> float:
    """int g^2 + int |grad u|^2 - 2 int f u over the domain.

    The gradient term is the discrete Dirichlet energy of the solver's own
    operator, so at the discrete solution the first two terms collapse to
    ``-int f u`` exactly and the value varies continuously with phi.
    """
    sol = sol if sol is not None else solve_poisson(ls, f)
    fv = sample_source(f, ls.grid)
    energy = sol.operator.energy(sol.u)
    fu = float(np.sum(fv * sol.u.values)) * _cell(ls)
    return volume_integral(ls, g.squared) + energy - 2.0 * fu


def functional_bilap(ls: LevelSet, f, g: GSpec, sol: Optional[PoissonSolution] = None,
                     g_squared: bool = False) -> float:
    """int g - 1/2 int u^2, or int g^2 - 1/2 int u^2 with ``g_squared``."""
    sol = sol if sol is not None else solve_poisson(ls, f)
    u2 = float(np.sum(sol.u.values ** 2)) * _cell(ls)
    gterm = volume_integral(ls, g.squared if g_squared else g.raw)
    return gterm - 0.5 * u2


def shape_velocity_qs(bg: BoundaryGradient, g: GSpec) -> np.ndarray:
    """Normal speed |grad u|^2 - g^2 (outward), zero at flagged vertices."""
    gv = g(bg.trace.points)
    return np.where(bg.flagged, 0.0, bg.values ** 2 - gv ** 2)


def shape_velocity_bilap(bgU: BoundaryGradient, bgV: BoundaryGradient, g: GSpec,
                         g_squared: bool = False) -> np.ndarray:
    """Normal speed |grad u||grad v| - g (or - g^2)."""
    pts = bgU.trace.points
    target = g.squared(pts) if g_squared else g(pts)
    flagged = bgU.flagged | bgV.flagged
    return np.where(flagged, 0.0, bgU.values * bgV.values - target)


# -- level-set motion -----------------------------------------------------------

def extend_speed(ls: LevelSet, trace: BoundaryTrace, speed: np.ndarray,
                 band_cells: float = BAND_CELLS) -> np.ndarray:
    """Constant-along-normal extension: each band node takes the speed at its
    closest point on the polyline (linear along the nearest segment)."""
    grid = ls.grid
    out = np.zeros(grid.shape)
    band = np.abs(ls.phi) < band_cells * grid.h
    if not band.any():
        return out
    X, Y = grid.mesh()
    q = np.column_stack([X[band], Y[band]])
    pts = trace.points
    _, near = cKDTree(pts).query(q)
    prev, nxt = trace.neighbours()
    best_d = np.full(len(q), np.inf)
    best_s = np.zeros(len(q))
    for other in (prev[near], nxt[near]):
        a = pts[near]
        b = pts[other]
        ab = b - a
        L2 = np.einsum("ij,ij->i", ab, ab)
        t = np.where(L2 > 0, np.einsum("ij,ij->i", q - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.hypot(*(q - proj).T)
        s = (1 - t) * speed[near] + t * speed[other]
        better = d < best_d
        best_d = np.where(better, d, best_d)
        best_s = np.where(better, s, best_s)
    out[band] = best_s
    return out


def _upwind_norm(phi: np.ndarray, hx: float, hy: float, speed: np.ndarray) -> np.ndarray:
    """Godunov |grad phi| for phi_t + V |grad phi| = 0 (first order)."""
    P = np.pad(phi, 1, mode="edge")
    c = P[1:-1, 1:-1]
    dxm = (c - P[1:-1, :-2]) / hx
    dxp = (P[1:-1, 2:] - c) / hx
    dym = (c - P[:-2, 1:-1]) / hy
    dyp = (P[2:, 1:-1] - c) / hy
    grow = np.sqrt(np.maximum(dxm, 0) ** 2 + np.minimum(dxp, 0) ** 2
                   + np.maximum(dym, 0) ** 2 + np.minimum(dyp, 0) ** 2)
    shrink = np.sqrt(np.minimum(dxm, 0) ** 2 + np.maximum(dxp, 0) ** 2
                     + np.minimum(dym, 0) ** 2 + np.maximum(dyp, 0) ** 2)
    return np.where(speed > 0, grow, shrink)


def advect(ls: LevelSet, vext: np.ndarray, dt: float) -> LevelSet:
    grid = ls.grid
    phi = ls.phi - dt * vext * _upwind_norm(ls.phi, grid.hx, grid.hy, vext)
    return LevelSet(grid, phi)


def stable_dt(ls: LevelSet, speed: np.ndarray, cfl: float) -> float:
    vmax = float(np.max(np.abs(speed))) if len(speed) else 0.0
    return 0.0 if vmax == 0 else cfl * ls.grid.h / vmax


def extend_and_advect(ls: LevelSet, speed: np.ndarray, params: DescentParams = DescentParams(),
                      trace: Optional[BoundaryTrace] = None, dt: Optional[float] = None,
                      steps: int = 1) -> LevelSet:
    """Move the zero set with outward normal speed given per trace vertex.

    ``steps`` explicit steps of size ``dt`` (default cfl h / max|speed|), with
    reinitialization after every ``reinit_every`` steps.
    """
    speed = np.asarray(speed, dtype=float)
    if not np.all(np.isfinite(speed)):
        raise ValueError("non-finite speed")
    if np.max(np.abs(speed), initial=0.0) == 0:
        return ls.copy()
    trace = trace if trace is not None else extract_boundary(ls)
    dt = stable_dt(ls, speed, params.cfl) if dt is None else dt
    cur = ls
    for k in range(steps):
        if k > 0:
            trace = extract_boundary(cur)
        cur = advect(cur, extend_speed(cur, trace, speed if k == 0 else _resample(trace, ls, speed)), dt)
        if (k + 1) % params.reinit_every == 0:
            cur = reinitialize(cur)
    return cur


def _resample(trace: BoundaryTrace, ref: LevelSet, speed: np.ndarray) -> np.ndarray:
    # speeds stay attached to the original vertices; pick the nearest one
    src = extract_boundary(ref).points
    _, idx = cKDTree(src).query(trace.points)
    return speed[idx]


def project_containment(ls: LevelSet, hull_ls: LevelSet) -> LevelSet:
    """Union with the hull: phi <- min(phi, phi_hull)."""
    return LevelSet(ls.grid, np.minimum(ls.phi, hull_ls.phi))


# -- reports ---------------------------------------------------------------------

@dataclass
class SolveReport:
    problem: str
    status: str
    stop_reason: str
    history: list[dict]
    ls: LevelSet
    trace: Optional[BoundaryTrace]
    hull_ls: LevelSet
    iterations: int
    solves: list[dict] = field(default_factory=list)
    hull_check: dict = field(default_factory=dict)
    error: Optional[str] = None
    u: Optional[ScalarField] = None
    v: Optional[ScalarField] = None

    @property
    def final(self) -> dict:
        return self.history[-1] if self.history else {}

    @property
    def residual_inf(self) -> float:
        return self.final.get("residual_inf", math.nan)

    def radii(self) -> tuple[float, float, np.ndarray]:
        """Arclength-weighted centroid distance of the trace vertices."""
        t = self.trace
        w = t.weights
        c = (w[:, None] * t.points).sum(axis=0) / w.sum()
        r = np.hypot(*(t.points - c).T)
        return float(np.dot(w, r) / w.sum()), float(np.sqrt(np.dot(w, (r - np.dot(w, r) / w.sum()) ** 2) / w.sum())), c

    @property
    def mean_radius(self) -> float:
        return self.radii()[0]

    @property
    def radius_std(self) -> float:
        return self.radii()[1]

    def to_json(self) -> dict:
        keys = ("J", "area", "perimeter", "residual_inf", "residual_l2", "hull_uncovered",
                "dt", "backtracks")
        out = {
            "problem": self.problem,
            "status": self.status,
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "history": {k: [h.get(k) for h in self.history] for k in keys},
            "hull_check": self.hull_check,
            "solves": self.solves,
        }
        if self.error:
            out["error"] = self.error
        if self.trace is not None:
            mean, std, c = self.radii()
            out["final"] = {
                "J": self.final.get("J"), "area": self.final.get("area"),
                "perimeter": self.final.get("perimeter"),
                "residual_inf": self.final.get("residual_inf"),
                "residual_l2": self.final.get("residual_l2"),
                "mean_radius": mean, "radius_std": std, "centroid": [float(c[0]), float(c[1])],
                "loops": self.trace.n_loops,
            }
        return out


# -- descent driver ------------------------------------------------------------

@dataclass
class _State:
    ls: LevelSet
    sols: list[PoissonSolution]
    J: float


class _Problem:
    """Functional, solves and speeds of one of the two problems."""

    def __init__(self, kind: str, f, g: GSpec, g_squared: bool = False):
        self.kind = kind
        self.f = f
        self.g = g
        self.g_squared = g_squared

    def solve(self, ls: LevelSet, warm: Optional[list[PoissonSolution]] = None) -> list[PoissonSolution]:
        op = assemble(ls)
        x0 = warm[0].u if warm else None
        u = solve_poisson(ls, self.f, operator=op, x0=x0)
        if self.kind == "qs":
            return [u]
        v = solve_poisson(ls, u.u, operator=op, x0=warm[1].u if warm else None)
        return [u, v]

    def J(self, ls: LevelSet, sols: list[PoissonSolution]) -> float:
        if self.kind == "qs":
            return functional_qs(ls, self.f, self.g, sols[0])
        return functional_bilap(ls, self.f, self.g, sols[0], self.g_squared)

    def boundary(self, sols, trace):
        bgs = [boundary_gradient(s, trace) for s in sols]
        pts = trace.points
        if self.kind == "qs":
            measured = bgs[0].values
            target = self.g(pts)
            speed = shape_velocity_qs(bgs[0], self.g)
        else:
            measured = bgs[0].values * bgs[1].values
            target = self.g.squared(pts) if self.g_squared else self.g(pts)
            speed = shape_velocity_bilap(bgs[0], bgs[1], self.g, self.g_squared)
        flagged = np.zeros(len(pts), dtype=bool)
        for b in bgs:
            flagged |= b.flagged
        return bgs, measured, target, speed, flagged


def _default_init(f: SourceSpec, grid: Grid) -> LevelSet:
    hull = signed_distance(f.hull, grid)
    return LevelSet(grid, hull.phi - 4 * grid.h)


def _init_levelset(init, f: SourceSpec, grid: Grid) -> LevelSet:
    if init is None or init == "hull+margin":
        return _default_init(f, grid)
    if isinstance(init, LevelSet):
        return init.copy()
    return signed_distance(init, grid)


def descend(kind: str, f: SourceSpec, g: GSpec, grid: Grid, init=None,
            params: DescentParams = DescentParams(), g_squared: bool = False,
            snapshot=None) -> SolveReport:
    """Shared descent loop; ``snapshot(k, trace)`` is called on every accepted iterate."""
    prob = _Problem(kind, f, g, g_squared)
    hull_ls = signed_distance(f.hull, grid)
    h = grid.h
    ls = project_containment(_init_levelset(init, f, grid), hull_ls)
    history: list[dict] = []
    solves: list[dict] = []
    last = {"trace": None, "sols": None}

    def record_solves(sols, flagged=0):
        for s in sols:
            solves.append(s.to_json(flagged))

    def report(status, reason, it, err=None):
        sols = last["sols"]
        return SolveReport(kind, status, reason, history, ls, last["trace"], hull_ls, it,
                           solves, hull_check, err,
                           sols[0].u if sols else None,
                           sols[1].u if sols and len(sols) > 1 else None)

    hull_check: dict = {}
    try:
        sols = prob.solve(ls)
        state = _State(ls, sols, prob.J(ls, sols))
    except (SolverError, GeometryError) as exc:
        return report("aborted", "solver_failure", 0, str(exc))

    it = 0
    since_reinit = 0
    while True:
        ls = state.ls
        trace = extract_boundary(ls)
        bgs, measured, target, speed, flagged = prob.boundary(state.sols, trace)
        record_solves(state.sols, int(flagged.sum()))
        dist_hull = hull_ls(trace.points)
        free = (dist_hull > FREE_CELLS * h) & ~flagged
        rel = np.abs(measured - target) / target
        if free.any():
            r_inf = float(rel[free].max())
            w = trace.weights[free]
            r_l2 = float(np.sqrt(np.dot(w, rel[free] ** 2) / w.sum()))
        else:
            r_inf = r_l2 = 0.0
        on_hull = (~free) & ~flagged
        hull_check = {
            "vertices": int(on_hull.sum()),
            "max_ratio": float((measured[on_hull] / target[on_hull]).max()) if on_hull.any() else None,
            "satisfied": bool(np.all(measured[on_hull] <= target[on_hull])) if on_hull.any() else True,
        }
        trace.data["grad_u"] = bgs[0].values
        if len(bgs) > 1:
            trace.data["grad_v"] = bgs[1].values
        trace.data["g"] = target
        trace.data["speed"] = speed
        last["trace"], last["sols"] = trace, state.sols
        uncovered = volume_integral(LevelSet(grid, np.maximum(hull_ls.phi, -ls.phi)))
        entry = {"J": state.J, "area": volume_integral(ls), "perimeter": trace.length,
                 "hull_uncovered": uncovered,
                 "residual_inf": r_inf, "residual_l2": r_l2,
                 "dt": history[-1]["dt_next"] if history else 0.0,
                 "backtracks": history[-1]["bt_next"] if history else 0}
        if history:
            history[-1].pop("dt_next")
            history[-1].pop("bt_next")
        history.append(entry)
        if snapshot is not None:
            snapshot(it, trace)

        if free.any() and r_inf <= params.tol_residual:
            entry.update(dt_next=0.0, bt_next=0)
            return _finish(report("converged", "residual", it), history)
        if np.all(np.abs(dist_hull) <= h):
            entry.update(dt_next=0.0, bt_next=0)
            return _finish(report("constrained_at_hull", "boundary_on_hull", it), history)
        if it >= params.max_iters:
            entry.update(dt_next=0.0, bt_next=0)
            return _finish(report("max_iters", "max_iters", it), history)

        # blocked vertices (on the hull, pushed inward) cannot move
        move = np.where((dist_hull <= h) & (speed < 0), 0.0, speed)
        if np.max(np.abs(move), initial=0.0) == 0:
            entry.update(dt_next=0.0, bt_next=0)
            return _finish(report("constrained_at_hull", "no_admissible_motion", it), history)
        vext = extend_speed(ls, trace, move)
        dt = stable_dt(ls, move, params.cfl)
        accepted = None
        for bt in range(params.backtrack_max + 1):
            try:
                trial = project_containment(advect(ls, vext, dt), hull_ls)
                do_reinit = since_reinit + 1 >= params.reinit_every
                if do_reinit:
                    trial = project_containment(reinitialize(trial), hull_ls)
                tsols = prob.solve(trial, state.sols)
                tJ = prob.J(trial, tsols)
            except (SolverError, GeometryError) as exc:
                entry.update(dt_next=dt, bt_next=bt)
                return _finish(report("aborted", "solver_failure", it, str(exc)), history)
            if tJ <= state.J + J_SLACK * abs(state.J):
                accepted = (trial, tsols, tJ, bt, do_reinit)
                break
            dt *= 0.5
        if accepted is None:
            entry.update(dt_next=0.0, bt_next=params.backtrack_max)
            return _finish(report("max_iters", "line_search_failed", it), history)
        trial, tsols, tJ, bt, do_reinit = accepted
        since_reinit = 0 if do_reinit else since_reinit + 1
        entry.update(dt_next=dt, bt_next=bt)
        state = _State(trial, tsols, tJ)
        it += 1


def _finish(rep: SolveReport, history: list[dict]) -> SolveReport:
    for h in history:
        h.pop("dt_next", None)
        h.pop("bt_next", None)
    return rep


def solve_qs(f: SourceSpec, g: GSpec, init=None, params: DescentParams = DescentParams(),
             grid: Optional[Grid] = None, snapshot=None) -> SolveReport:
    """Minimize int(|grad u|^2 - 2 f u + g^2) over domains containing the hull of f."""
    grid = grid if grid is not None else _auto_grid(f)
    return descend("qs", f, g, grid, init, params, snapshot=snapshot)


def solve_bilap(f: SourceSpec, g: GSpec, init=None, params: DescentParams = DescentParams(),
                grid: Optional[Grid] = None, g_squared: bool = False, snapshot=None) -> SolveReport:
    """Minimize int g - 1/2 int u^2 (cascade pair u, v) over domains containing the hull."""
    grid = grid if grid is not None else _auto_grid(f)
    return descend("bilap", f, g, grid, init, params, g_squared, snapshot)


def _auto_grid(f: SourceSpec, n: int = 128) -> Grid:
    x0, y0, x1, y1 = f.hull.bounds()
    c = ((x0 + x1) / 2, (y0 + y1) / 2)
    half = 3 * max(x1 - x0, y1 - y0)
    return Grid.square(half, n, c)
