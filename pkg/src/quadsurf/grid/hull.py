import numpy as np

from .core import GeometryError


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain.

    Returns the hull vertices counterclockwise, starting from the lowest-x
    (then lowest-y) point. Collinear boundary points are dropped.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        raise GeometryError("convex hull needs at least 3 distinct points")
    scale = float(np.max(np.abs(pts))) or 1.0
    eps = 1e-12 * scale * scale
    P = [tuple(p) for p in pts]  # np.unique sorts lexicographically

    lower: list = []
    for p in P:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= eps:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(P):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= eps:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise GeometryError("points are collinear; hull has no interior")
    return np.asarray(hull)
