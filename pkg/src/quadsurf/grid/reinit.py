"""Signed-distance reinitialization by pseudo-time relaxation.

Solves ``phi_t + sign(phi0) (|grad phi| - 1) = 0`` with fifth-order WENO
one-sided derivatives, Godunov's Hamiltonian and third-order TVD Runge-Kutta.
Nodes adjacent to the interface are pinned to ``phi0 / |grad phi0|`` (a
subcell fix in the spirit of Russo and Smereka) so the zero set does not
drift while the far field relaxes.
"""
import numpy as np
from scipy import ndimage

from .core import GeometryError, LevelSet

PAD = 3


def _pad(a: np.ndarray) -> np.ndarray:
    """Pad by linear extrapolation, which is exact for planar distance fields."""
    out = np.pad(a, PAD, mode="edge")
    n0, n1 = a.shape
    for k in range(1, PAD + 1):
        out[PAD - k, :] = 2 * out[PAD - k + 1, :] - out[PAD - k + 2, :]
        out[PAD + n0 - 1 + k, :] = 2 * out[PAD + n0 - 2 + k, :] - out[PAD + n0 - 3 + k, :]
    for k in range(1, PAD + 1):
        out[:, PAD - k] = 2 * out[:, PAD - k + 1] - out[:, PAD - k + 2]
        out[:, PAD + n1 - 1 + k] = 2 * out[:, PAD + n1 - 2 + k] - out[:, PAD + n1 - 3 + k]
    return out


def _weno(v1, v2, v3, v4, v5):
    p1 = v1 / 3 - 7 * v2 / 6 + 11 * v3 / 6
    p2 = -v2 / 6 + 5 * v3 / 6 + v4 / 3
    p3 = v3 / 3 + 5 * v4 / 6 - v5 / 6
    s1 = 13 / 12 * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - 4 * v2 + 3 * v3) ** 2
    s2 = 13 / 12 * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = 13 / 12 * (v3 - 2 * v4 + v5) ** 2 + 0.25 * (3 * v3 - 4 * v4 + v5) ** 2
    eps = 1e-6 * np.maximum.reduce([v1 * v1, v2 * v2, v3 * v3, v4 * v4, v5 * v5]) + 1e-99
    a1 = 0.1 / (eps + s1) ** 2
    a2 = 0.6 / (eps + s2) ** 2
    a3 = 0.3 / (eps + s3) ** 2
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


def weno_derivatives(phi: np.ndarray, hx: float, hy: float):
    """Return (dx_minus, dx_plus, dy_minus, dy_plus) at every node."""
    P = _pad(phi)
    n0, n1 = phi.shape
    dx = (P[:, 1:] - P[:, :-1]) / hx   # dx[:, k] = D+ at padded column k
    dy = (P[1:, :] - P[:-1, :]) / hy
    rows = slice(PAD, PAD + n0)
    cols = slice(PAD, PAD + n1)

    def xs(k):
        return dx[rows, PAD + k: PAD + k + n1]

    def ys(k):
        return dy[PAD + k: PAD + k + n0, cols]

    dxm = _weno(xs(-3), xs(-2), xs(-1), xs(0), xs(1))
    dxp = _weno(xs(2), xs(1), xs(0), xs(-1), xs(-2))
    dym = _weno(ys(-3), ys(-2), ys(-1), ys(0), ys(1))
    dyp = _weno(ys(2), ys(1), ys(0), ys(-1), ys(-2))
    return dxm, dxp, dym, dyp


def godunov_norm(dxm, dxp, dym, dyp, sign):
    """Upwind |grad phi| for a front moving with normal speed ``sign``."""
    pos = sign > 0
    ax = np.where(pos,
                  np.maximum(np.maximum(dxm, 0) ** 2, np.minimum(dxp, 0) ** 2),
                  np.maximum(np.minimum(dxm, 0) ** 2, np.maximum(dxp, 0) ** 2))
    ay = np.where(pos,
                  np.maximum(np.maximum(dym, 0) ** 2, np.minimum(dyp, 0) ** 2),
                  np.maximum(np.minimum(dym, 0) ** 2, np.maximum(dyp, 0) ** 2))
    return np.sqrt(ax + ay)


def interface_nodes(phi: np.ndarray) -> np.ndarray:
    """Nodes with a 4-neighbour of the opposite side (inside means phi < 0)."""
    inside = phi < 0
    mask = np.zeros_like(inside)
    dh = inside[:, 1:] != inside[:, :-1]
    dv = inside[1:, :] != inside[:-1, :]
    mask[:, 1:] |= dh
    mask[:, :-1] |= dh
    mask[1:, :] |= dv
    mask[:-1, :] |= dv
    return mask


def _interface_distance(phi0: np.ndarray, hx: float, hy: float) -> np.ndarray:
    P = _pad(phi0)
    n0, n1 = phi0.shape
    c = P[PAD:PAD + n0, PAD:PAD + n1]

    def at(dj, di):
        return P[PAD + dj:PAD + dj + n0, PAD + di:PAD + di + n1]

    gx4 = (-at(0, 2) + 8 * at(0, 1) - 8 * at(0, -1) + at(0, -2)) / (12 * hx)
    gy4 = (-at(2, 0) + 8 * at(1, 0) - 8 * at(-1, 0) + at(-2, 0)) / (12 * hy)
    gx2 = (at(0, 1) - at(0, -1)) / (2 * hx)
    gy2 = (at(1, 0) - at(-1, 0)) / (2 * hy)
    g4 = np.hypot(gx4, gy4)
    g2 = np.hypot(gx2, gy2)
    # one-sided slopes guard against near-kinks where centered estimates collapse
    gs = np.maximum.reduce([np.abs(at(0, 1) - c) / hx, np.abs(c - at(0, -1)) / hx,
                            np.abs(at(1, 0) - c) / hy, np.abs(c - at(-1, 0)) / hy])
    smooth = np.abs(g4 - g2) <= 0.1 * g2
    grad = np.where(smooth, g4, np.maximum(g2, gs))
    grad = np.maximum(grad, 1e-12)
    return c / grad


def _band_rhs(flat, base, width, hx, hy, sign):
    """Godunov/WENO residual at the band nodes ``base`` of a padded, flattened field."""
    def dx(k):
        return (flat[base + k + 1] - flat[base + k]) / hx

    def dy(k):
        return (flat[base + (k + 1) * width] - flat[base + k * width]) / hy

    X = [dx(k) for k in range(-3, 3)]
    Y = [dy(k) for k in range(-3, 3)]
    dxm = _weno(X[0], X[1], X[2], X[3], X[4])
    dxp = _weno(X[5], X[4], X[3], X[2], X[1])
    dym = _weno(Y[0], Y[1], Y[2], Y[3], Y[4])
    dyp = _weno(Y[5], Y[4], Y[3], Y[2], Y[1])
    return -sign * (godunov_norm(dxm, dxp, dym, dyp, sign) - 1.0)


def reinitialize(ls: LevelSet, sweeps: int = 20, cfl: float = 0.5) -> LevelSet:
    """Relax ``ls.phi`` toward the signed distance to its zero set.

    Only nodes the pseudo-time front can reach (about ``sweeps * cfl + 3``
    spacings from the interface) are relaxed. Farther nodes keep their sign
    and are pushed to at least that depth.
    """
    phi0 = ls.phi
    if not (np.any(phi0 < 0) and np.any(phi0 >= 0)):
        raise GeometryError("empty or full domain: level set has no sign change")
    grid = ls.grid
    hx, hy = grid.hx, grid.hy
    h = min(hx, hy)
    pinned = interface_nodes(phi0)
    pinned_values = _interface_distance(phi0, hx, hy)
    # band by grid distance to the interface, blind to stale far-field values
    reach = sweeps * cfl + 3
    cells = ndimage.distance_transform_edt(~pinned, sampling=(hy / h, hx / h))
    near = cells < reach + 2
    band = near & ~pinned
    jb, ib = np.nonzero(band)
    width = phi0.shape[1] + 2 * PAD
    base = (jb + PAD) * width + ib + PAD
    sign = np.where(phi0[band] < 0, -1.0, 1.0)
    dt = cfl * h
    tiny = 1e-12 * h

    phi = phi0.copy()
    phi[pinned] = pinned_values[pinned]
    far = ~near
    phi[far] = np.where(phi0[far] < 0, np.minimum(phi0[far], -reach * h), np.maximum(phi0[far], reach * h))

    def rhs(values):
        work = phi.copy()
        work[band] = values
        return _band_rhs(_pad(work).ravel(), base, width, hx, hy, sign)

    b = phi[band]
    for _ in range(sweeps):
        b1 = b + dt * rhs(b)
        b2 = 0.75 * b + 0.25 * (b1 + dt * rhs(b1))
        b = b / 3 + 2 / 3 * (b2 + dt * rhs(b2))
        # relaxation never moves a node across the interface
        b = np.where(sign > 0, np.maximum(b, tiny), np.minimum(b, -tiny))
    phi[band] = b
    return LevelSet(grid, phi)
