"""Marching-squares extraction of the zero set and boundary quadrature."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .core import GeometryError, LevelSet, ScalarField

# corner k of a cell: 0=(j,i) 1=(j,i+1) 2=(j+1,i+1) 3=(j+1,i)
# edge e of a cell:   0=bottom(0-1) 1=right(1-2) 2=top(3-2) 3=left(0-3)
_CORNER_EDGES = {0: (3, 0), 1: (0, 1), 2: (1, 2), 3: (2, 3)}


@dataclass
class BoundaryTrace:
    """Polylines of the zero set, inside (phi < 0) on the left of travel."""
    points: np.ndarray            # (N, 2)
    loop_id: np.ndarray           # (N,)
    closed: list[bool]
    weights: np.ndarray           # trapezoid arclength weights
    normals: np.ndarray           # outward unit normals
    data: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_loops(self) -> int:
        return len(self.closed)

    @property
    def clipped(self) -> bool:
        return not all(self.closed)

    @property
    def length(self) -> float:
        return float(np.sum(self.weights))

    def loops(self) -> list[np.ndarray]:
        return [self.points[self.loop_id == k] for k in range(self.n_loops)]

    def loop_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.loop_id == k)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def neighbours(self) -> tuple[np.ndarray, np.ndarray]:
        """Index of previous and next vertex along each polyline (self at open ends)."""
        n = len(self.points)
        prev = np.arange(n)
        nxt = np.arange(n)
        for k, closed in enumerate(self.closed):
            idx = self.loop_indices(k)
            if closed:
                prev[idx] = np.roll(idx, 1)
                nxt[idx] = np.roll(idx, -1)
            else:
                prev[idx[1:]] = idx[:-1]
                nxt[idx[:-1]] = idx[1:]
        return prev, nxt

    def signed_areas(self) -> list[float]:
        out = []
        for pts in self.loops():
            x, y = pts[:, 0], pts[:, 1]
            out.append(0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))
        return out

    def to_csv(self, path, extra: tuple[str, ...] = ()) -> None:
        cols = ["loop_id", "x", "y", *extra]
        rows = [",".join(cols)]
        for k in range(len(self.points)):
            vals = [str(int(self.loop_id[k])), repr(float(self.points[k, 0])),
                    repr(float(self.points[k, 1]))]
            vals += [repr(float(self.data[name][k])) for name in extra]
            rows.append(",".join(vals))
        Path(path).write_text("\n".join(rows) + "\n")


def _cell_segments(case: int, center_inside: bool) -> list[tuple[int, int]]:
    """Edge pairs crossed by the zero set inside one cell, unoriented."""
    inside = [(case >> k) & 1 for k in range(4)]
    n_in = sum(inside)
    if n_in in (0, 4):
        return []
    if n_in in (1, 3):
        odd = inside.index(1) if n_in == 1 else inside.index(0)
        return [_CORNER_EDGES[odd]]
    if inside[0] == inside[1]:          # bottom pair vs top pair
        return [(1, 3)]
    if inside[0] == inside[3]:          # left pair vs right pair
        return [(0, 2)]
    # saddle: corners 0,2 share a side and 1,3 the other
    group = (0, 2) if inside[0] != center_inside else (1, 3)
    return [_CORNER_EDGES[group[0]], _CORNER_EDGES[group[1]]]


def extract_boundary(ls: LevelSet) -> BoundaryTrace:
    """Zero set of ``ls`` as oriented polylines with vertices on grid edges."""
    grid = ls.grid
    phi = np.where(ls.phi == 0.0, 1e-12 * grid.h, ls.phi)
    inside = phi < 0
    if not (inside.any() and (~inside).any()):
        raise GeometryError("level set has no zero crossing")
    x, y = grid.x, grid.y

    vid: dict[tuple, int] = {}
    coords: list[tuple[float, float]] = []

    def vertex(kind: str, j: int, i: int) -> int:
        key = (kind, j, i)
        if key not in vid:
            if kind == "h":       # edge (j,i)-(j,i+1)
                a, b = phi[j, i], phi[j, i + 1]
                t = a / (a - b)
                coords.append((x[i] + t * grid.hx, y[j]))
            else:                 # edge (j,i)-(j+1,i)
                a, b = phi[j, i], phi[j + 1, i]
                t = a / (a - b)
                coords.append((x[i], y[j] + t * grid.hy))
            vid[key] = len(coords) - 1
        return vid[key]

    def edge_vertex(e: int, j: int, i: int) -> int:
        if e == 0:
            return vertex("h", j, i)
        if e == 1:
            return vertex("v", j, i + 1)
        if e == 2:
            return vertex("h", j + 1, i)
        return vertex("v", j, i)

    corners = np.stack([inside[:-1, :-1], inside[:-1, 1:], inside[1:, 1:], inside[1:, :-1]])
    case = (corners[0].astype(int) | corners[1] << 1 | corners[2] << 2 | corners[3] << 3)
    centre = 0.25 * (phi[:-1, :-1] + phi[:-1, 1:] + phi[1:, 1:] + phi[1:, :-1])
    cut_j, cut_i = np.nonzero((case != 0) & (case != 15))

    nxt: dict[int, int] = {}
    prv: dict[int, int] = {}
    for j, i in zip(cut_j.tolist(), cut_i.tolist()):
        c = int(case[j, i])
        for e1, e2 in _cell_segments(c, bool(centre[j, i] < 0)):
            # inside on the left of a -> b: walking the cell counterclockwise
            # from edge b to edge a passes the corners the segment cuts off,
            # first of them corner (b + 1) % 4. Combinatorial, so vertices that
            # sit on a node cannot flip it.
            if not (c >> ((e2 + 1) % 4)) & 1:
                e1, e2 = e2, e1
            a = edge_vertex(e1, j, i)
            b = edge_vertex(e2, j, i)
            nxt[a] = b
            prv[b] = a

    n = len(coords)
    P = np.asarray(coords)
    order: list[int] = []
    loop_of: list[int] = []
    closed: list[bool] = []
    seen = np.zeros(n, dtype=bool)
    # open chains first start where nothing leads in; then closed loops
    starts = [v for v in range(n) if v not in prv] + list(range(n))
    for s in starts:
        if seen[s]:
            continue
        k = len(closed)
        v = s
        is_closed = False
        while True:
            seen[v] = True
            order.append(v)
            loop_of.append(k)
            if v not in nxt:
                break
            v = nxt[v]
            if v == s:
                is_closed = True
                break
            if seen[v]:
                break
        closed.append(is_closed)

    pts = P[order]
    loop_id = np.asarray(loop_of)
    weights = np.zeros(len(pts))
    for k, is_closed in enumerate(closed):
        idx = np.flatnonzero(loop_id == k)
        q = pts[idx]
        if is_closed:
            seg = np.linalg.norm(np.roll(q, -1, axis=0) - q, axis=1)
            weights[idx] = 0.5 * (seg + np.roll(seg, 1))
        else:
            seg = np.linalg.norm(q[1:] - q[:-1], axis=1)
            w = np.zeros(len(q))
            w[:-1] += 0.5 * seg
            w[1:] += 0.5 * seg
            weights[idx] = w
    trace = BoundaryTrace(pts, loop_id, closed, weights, np.zeros_like(pts))
    trace.normals = _normals(ls, trace)
    return trace


def _normals(ls: LevelSet, trace: BoundaryTrace) -> np.ndarray:
    n = ls.normals_at(trace.points)
    # polyline fallback where the level-set gradient degenerates
    bad = np.hypot(n[:, 0], n[:, 1]) < 0.5
    if bad.any():
        prev, nxt = trace.neighbours()
        t = trace.points[nxt] - trace.points[prev]
        tn = np.hypot(t[:, 0], t[:, 1])
        tn[tn == 0] = 1.0
        n[bad, 0] = t[bad, 1] / tn[bad]
        n[bad, 1] = -t[bad, 0] / tn[bad]
    return n


Integrand = Union[float, ScalarField, Callable[[np.ndarray], np.ndarray], np.ndarray]


def _eval_on(integrand: Integrand, pts: np.ndarray) -> np.ndarray:
    if isinstance(integrand, ScalarField):
        return integrand.interpolate(pts)
    if callable(integrand):
        return np.broadcast_to(np.asarray(integrand(pts), dtype=float), (len(pts),))
    return np.broadcast_to(np.asarray(integrand, dtype=float), (len(pts),))


def boundary_integral(ls: Union[LevelSet, BoundaryTrace], integrand: Integrand) -> float:
    """Trapezoid rule of ``integrand`` over every polyline of the zero set.

    ``integrand`` may be a constant, a ScalarField (interpolated bilinearly),
    a callable of an (N, 2) array, or an array of per-vertex values.
    """
    trace = ls if isinstance(ls, BoundaryTrace) else extract_boundary(ls)
    if isinstance(integrand, np.ndarray) and integrand.shape == (len(trace.points),):
        vals = integrand
    else:
        vals = _eval_on(integrand, trace.points)
    return trace.integrate(vals)


# -- cut-cell volume quadrature ----------------------------------------------

def _tri_integral(p, hv, area):
    """Integral of the linear interpolant of ``hv`` over {p < 0} in each triangle.

    ``p`` and ``hv`` are (3, M) vertex values, ``area`` the triangle area.
    """
    neg = p < 0
    n_neg = neg.sum(axis=0)
    full = area * hv.sum(axis=0) / 3.0
    out = np.where(n_neg == 3, full, 0.0)
    partial = (n_neg == 1) | (n_neg == 2)
    if not partial.any():
        return out
    p = p[:, partial]
    hv = hv[:, partial]
    fullp = full[partial]
    # the odd vertex is the lone negative one (n_neg==1) or the lone positive one
    lone_neg = n_neg[partial] == 1
    odd_mask = np.where(lone_neg, neg[:, partial], ~neg[:, partial])
    odd = np.argmax(odd_mask, axis=0)
    cols = np.arange(p.shape[1])
    o1 = (odd + 1) % 3
    o2 = (odd + 2) % 3
    pv, p1, p2 = p[odd, cols], p[o1, cols], p[o2, cols]
    hv0, h1, h2 = hv[odd, cols], hv[o1, cols], hv[o2, cols]
    t1 = pv / (pv - p1)
    t2 = pv / (pv - p2)
    hp1 = hv0 + t1 * (h1 - hv0)
    hp2 = hv0 + t2 * (h2 - hv0)
    corner = area * t1 * t2 * (hv0 + hp1 + hp2) / 3.0
    out[partial] = np.where(lone_neg, corner, fullp - corner)
    return out


def volume_integral(ls: LevelSet, integrand: Integrand = 1.0) -> float:
    """Integral over {phi < 0} with cut-cell fractions.

    Each cell is split into four triangles around its centre (centre value is
    the corner mean); phi and the integrand are linear on every triangle, and
    the triangle part with phi < 0 is integrated exactly.
    """
    grid = ls.grid
    phi = ls.phi
    if isinstance(integrand, ScalarField):
        hn = integrand.values
        hc = None
    elif callable(integrand):
        hn = np.asarray(integrand(grid.points()), dtype=float)
        hn = np.broadcast_to(hn, (grid.shape[0] * grid.shape[1],)).reshape(grid.shape)
        xc = grid.x[:-1] + 0.5 * grid.hx
        yc = grid.y[:-1] + 0.5 * grid.hy
        Xc, Yc = np.meshgrid(xc, yc)
        hc = np.asarray(integrand(np.column_stack([Xc.ravel(), Yc.ravel()])), dtype=float)
        hc = np.broadcast_to(hc, (Xc.size,)).reshape(Xc.shape)
    else:
        hn = np.full(grid.shape, float(integrand))
        hc = None

    # only cells touching the domain contribute
    touch = ((phi[:-1, :-1] < 0) | (phi[:-1, 1:] < 0) | (phi[1:, 1:] < 0) | (phi[1:, :-1] < 0))
    jj, ii = np.nonzero(touch)
    c = [phi[jj, ii], phi[jj, ii + 1], phi[jj + 1, ii + 1], phi[jj + 1, ii]]
    hcorn = [hn[jj, ii], hn[jj, ii + 1], hn[jj + 1, ii + 1], hn[jj + 1, ii]]
    pc = 0.25 * (c[0] + c[1] + c[2] + c[3])
    if hc is None:
        hcc = 0.25 * (hcorn[0] + hcorn[1] + hcorn[2] + hcorn[3])
    else:
        hcc = hc[jj, ii]
    area = 0.25 * grid.hx * grid.hy
    total = np.zeros(len(jj))
    for k in range(4):
        m = (k + 1) % 4
        total += _tri_integral(np.stack([pc, c[k], c[m]]), np.stack([hcc, hcorn[k], hcorn[m]]), area)
    # fixed-order reduction keeps results bit-reproducible
    return float(np.sum(total))
