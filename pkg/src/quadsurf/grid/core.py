"""Cartesian grid, node-sampled fields and primitive shapes.

Conventions used across the package:

* nodes are indexed ``[j, i]`` with ``j`` along y (outer) and ``i`` along x;
* a grid with ``nx`` cells per row has ``nx + 1`` nodes per row;
* a level set is negative inside the domain it describes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np


class GeometryError(ValueError):
    """Raised for shapes or level sets that violate a geometric precondition."""


@dataclass(frozen=True)
class Grid:
    box: tuple[float, float, float, float]
    nx: int
    ny: int

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(f"degenerate box {self.box}")
        if self.nx < 16 or self.ny < 16:
            raise GeometryError("grid needs at least 16 cells per axis")

    @classmethod
    def square(cls, half_width: float, n: int, center=(0.0, 0.0)) -> "Grid":
        cx, cy = center
        return cls((cx - half_width, cy - half_width, cx + half_width, cy + half_width), n, n)

    @property
    def hx(self) -> float:
        return (self.box[2] - self.box[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.box[3] - self.box[1]) / self.ny

    @property
    def h(self) -> float:
        """Smallest spacing; the length unit for tolerances."""
        return min(self.hx, self.hy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny + 1, self.nx + 1)

    @property
    def x(self) -> np.ndarray:
        return self.box[0] + self.hx * np.arange(self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return self.box[1] + self.hy * np.arange(self.ny + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.column_stack([X.ravel(), Y.ravel()])

    def contains(self, pts: np.ndarray, margin: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        x0, y0, x1, y1 = self.box
        return ((pts[:, 0] >= x0 + margin) & (pts[:, 0] <= x1 - margin)
                & (pts[:, 1] >= y0 + margin) & (pts[:, 1] <= y1 - margin))

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        vals = np.asarray(func(self.points()), dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.shape, float(vals))
        return ScalarField(self, vals.reshape(self.shape))

    def to_json(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "box": list(self.box)}


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid nodes {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    def interpolate(self, pts: np.ndarray) -> np.ndarray:
        return bilinear(self.grid, self.values, pts)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.interpolate(pts)


def bilinear(grid: Grid, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of node values; points are clamped to the box."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    fx = (pts[:, 0] - grid.box[0]) / grid.hx
    fy = (pts[:, 1] - grid.box[1]) / grid.hy
    i = np.clip(np.floor(fx).astype(int), 0, grid.nx - 1)
    j = np.clip(np.floor(fy).astype(int), 0, grid.ny - 1)
    tx = np.clip(fx - i, 0.0, 1.0)
    ty = np.clip(fy - j, 0.0, 1.0)
    v = values
    return ((1 - tx) * (1 - ty) * v[j, i] + tx * (1 - ty) * v[j, i + 1]
            + (1 - tx) * ty * v[j + 1, i] + tx * ty * v[j + 1, i + 1])


# -- shapes -----------------------------------------------------------------

@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("disk radius must be positive")

    def distance(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        return np.hypot(d[:, 0], d[:, 1]) - self.radius

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return self.distance(pts) < 0

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    def area(self) -> float:
        return np.pi * self.radius ** 2

    def boundary_points(self, m: int = 512) -> np.ndarray:
        t = 2 * np.pi * np.arange(m) / m
        return np.column_stack([self.center[0] + self.radius * np.cos(t),
                                self.center[1] + self.radius * np.sin(t)])

    def to_json(self) -> dict:
        return {"shape": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Polygon:
    """Convex polygon, vertices stored counterclockwise."""
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise GeometryError("polygon needs at least 3 vertices in 2-D")
        area = _shoelace(v)
        if abs(area) < 1e-14:
            raise GeometryError("polygon has no interior")
        if area < 0:
            object.__setattr__(self, "vertices", tuple(map(tuple, v[::-1])))
            v = v[::-1]
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross < -1e-12 * np.max(np.abs(v)) ** 2):
            raise GeometryError("polygon is not convex")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def distance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        v = self.array
        w = np.roll(v, -1, axis=0)
        best = np.full(len(pts), np.inf)
        inside = np.ones(len(pts), dtype=bool)
        px, py = pts[:, 0], pts[:, 1]
        for (ax, ay), (bx, by) in zip(v, w):
            ex, ey = bx - ax, by - ay
            qx, qy = px - ax, py - ay
            t = np.clip((qx * ex + qy * ey) / (ex * ex + ey * ey), 0.0, 1.0)
            dx, dy = qx - t * ex, qy - t * ey
            np.minimum(best, dx * dx + dy * dy, out=best)
            inside &= (ex * qy - ey * qx) > 0
        d = np.sqrt(best)
        return np.where(inside, -d, d)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        v = self.array
        w = np.roll(v, -1, axis=0)
        inside = np.ones(len(pts), dtype=bool)
        for (ax, ay), (bx, by) in zip(v, w):
            inside &= ((bx - ax) * (pts[:, 1] - ay) - (by - ay) * (pts[:, 0] - ax)) > 0
        return inside

    def bounds(self):
        v = self.array
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def area(self) -> float:
        return _shoelace(self.array)

    def perimeter(self) -> float:
        v = self.array
        return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))

    def boundary_points(self, m: int = 512) -> np.ndarray:
        return self.array

    def to_json(self) -> dict:
        return {"shape": "polygon", "vertices": [list(p) for p in self.vertices]}


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ellipse_polygon(center, a: float, b: float, m: int = 1024) -> Polygon:
    """Convex polygon inscribed in an ellipse with semi-axes ``a`` (x) and ``b`` (y)."""
    t = 2 * np.pi * np.arange(m) / m
    pts = np.column_stack([center[0] + a * np.cos(t), center[1] + b * np.sin(t)])
    return Polygon(tuple(map(tuple, pts)))


def rectangle(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


Shape = Union[Disk, Polygon]
ShapeLike = Union[Shape, Sequence[Shape]]


def _as_shapes(shape: ShapeLike) -> list[Shape]:
    if isinstance(shape, (Disk, Polygon)):
        return [shape]
    shapes = list(shape)
    if not shapes:
        raise GeometryError("empty union of shapes")
    return shapes


def shape_from_json(obj: dict) -> Shape:
    kind = obj.get("shape")
    if kind == "disk":
        extra = set(obj) - {"shape", "center", "radius", "value"}
        if extra:
            raise ValueError(f"unknown disk keys {sorted(extra)}")
        return Disk(tuple(float(c) for c in obj["center"]), float(obj["radius"]))
    if kind == "polygon":
        extra = set(obj) - {"shape", "vertices", "value"}
        if extra:
            raise ValueError(f"unknown polygon keys {sorted(extra)}")
        return Polygon(tuple((float(x), float(y)) for x, y in obj["vertices"]))
    raise ValueError(f"unknown shape kind {kind!r}")


# -- level sets -------------------------------------------------------------

@dataclass
class LevelSet:
    grid: Grid
    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != self.grid.shape:
            raise ValueError(f"phi shape {self.phi.shape} != grid nodes {self.grid.shape}")

    @property
    def inside(self) -> np.ndarray:
        return self.phi < 0

    def is_empty(self) -> bool:
        return not np.any(self.phi < 0)

    def copy(self) -> "LevelSet":
        return LevelSet(self.grid, self.phi.copy())

    def union(self, other: "LevelSet") -> "LevelSet":
        return LevelSet(self.grid, np.minimum(self.phi, other.phi))

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """Centered differences (one-sided on the box edge)."""
        gy, gx = np.gradient(self.phi, self.grid.hy, self.grid.hx)
        return gx, gy

    def normals_at(self, pts: np.ndarray) -> np.ndarray:
        gx, gy = self.gradient()
        nx = bilinear(self.grid, gx, pts)
        ny = bilinear(self.grid, gy, pts)
        norm = np.hypot(nx, ny)
        out = np.zeros((len(nx), 2))
        ok = norm > 1e-12
        out[ok, 0] = nx[ok] / norm[ok]
        out[ok, 1] = ny[ok] / norm[ok]
        return out

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return bilinear(self.grid, self.phi, pts)


def signed_distance(shape: ShapeLike, grid: Grid, margin_cells: float = 5.0) -> LevelSet:
    """Exact signed distance for one primitive; pointwise min for a union.

    Every primitive must stay ``margin_cells`` spacings away from the box edge.
    """
    shapes = _as_shapes(shape)
    margin = margin_cells * max(grid.hx, grid.hy)
    x0, y0, x1, y1 = grid.box
    for s in shapes:
        bx0, by0, bx1, by1 = s.bounds()
        if bx0 < x0 + margin or by0 < y0 + margin or bx1 > x1 - margin or by1 > y1 - margin:
            raise GeometryError(f"{type(s).__name__} touches the box margin of {margin:.4g}")
    pts = grid.points()
    phi = shapes[0].distance(pts)
    for s in shapes[1:]:
        phi = np.minimum(phi, s.distance(pts))
    phi = phi.reshape(grid.shape)
    if not np.any(phi < 0):
        raise GeometryError("shape contains no grid node")
    return LevelSet(grid, phi)


# -- source term ------------------------------------------------------------

@dataclass
class SourceSpec:
    """Piecewise-constant positive source; overlapping pieces add up."""
    pieces: list[tuple[Shape, float]]
    hull_samples: int = 512
    hull: Polygon = field(init=False)

    def __post_init__(self):
        if not self.pieces:
            raise GeometryError("source needs at least one piece")
        for _, value in self.pieces:
            if not value > 0:
                raise GeometryError("source values must be positive")
        from .hull import convex_hull

        pts = np.vstack([s.boundary_points(self.hull_samples) for s, _ in self.pieces])
        self.hull = Polygon(tuple(map(tuple, convex_hull(pts))))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for s, value in self.pieces:
            out += value * s.contains(pts)
        return out

    def sample(self, grid: Grid) -> ScalarField:
        return grid.sample(self)

    def total(self) -> float:
        """Exact integral of the source (piece areas times values)."""
        return float(sum(value * s.area() for s, value in self.pieces))

    def scaled(self, factor: float) -> "SourceSpec":
        return SourceSpec([(s, value * factor) for s, value in self.pieces], self.hull_samples)

    def to_json(self) -> dict:
        return {"pieces": [dict(s.to_json(), value=v) for s, v in self.pieces]}

    @classmethod
    def from_json(cls, obj: dict) -> "SourceSpec":
        extra = set(obj) - {"pieces"}
        if extra:
            raise ValueError(f"unknown source keys {sorted(extra)}")
        pieces = []
        for p in obj["pieces"]:
            if "value" not in p:
                raise ValueError("source piece without value")
            pieces.append((shape_from_json(p), float(p["value"])))
        return cls(pieces)


# -- dumps ------------------------------------------------------------------

def dump_field(path, values: np.ndarray, grid: Grid) -> None:
    """Write ``path`` (raw little-endian float64, y-outer) and ``path.json``.

    The sidecar gives cell counts; the payload has ``(ny+1)*(nx+1)`` node values.
    """
    path = Path(path)
    np.ascontiguousarray(values, dtype="<f8").tofile(path)
    Path(str(path) + ".json").write_text(json.dumps(grid.to_json()))


def load_field(path) -> ScalarField:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    grid = Grid(tuple(meta["box"]), int(meta["nx"]), int(meta["ny"]))
    values = np.fromfile(path, dtype="<f8").reshape(grid.shape)
    return ScalarField(grid, values)


def curvature(ls: LevelSet, band_cells: float = 3.0) -> ScalarField:
    """div(grad phi / |grad phi|) by centered differences on |phi| < band.

    Zero away from the band. Raises when the gradient nearly vanishes inside it.
    """
    grid = ls.grid
    phi = ls.phi
    hx, hy = grid.hx, grid.hy
    py, px = np.gradient(phi, hy, hx)
    pxy = np.gradient(px, hy, axis=0)
    pxx = np.gradient(px, hx, axis=1)
    pyy = np.gradient(py, hy, axis=0)
    g2 = px * px + py * py
    band = np.abs(phi) < band_cells * grid.h
    g = np.sqrt(g2)
    if np.any(g[band] < 0.1):
        raise GeometryError("singular level-set gradient near the interface")
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (pxx * py * py - 2 * px * py * pxy + pyy * px * px) / (g2 * g)
    return ScalarField(grid, np.where(band, kappa, 0.0))
