"""Radial reference solutions for disk-shaped sources and domains.

For ``f = c`` on ``r <= a`` (zero beyond) and the disk ``B_R`` the Dirichlet
problem reduces to ``u'(r) = -(1/r) int_0^r s f(s) ds`` with ``u(R) = 0``.
Everything here is 1-D quadrature on a fine uniform radius grid and is kept
independent of the 2-D solver it is used to check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_SAMPLES = 4096


@dataclass
class RadialProfile:
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    c: float
    a: float
    R: float

    @property
    def u0(self) -> float:
        return float(self.u[0])

    @property
    def du_R(self) -> float:
        return float(self.du[-1])

    def integral(self) -> float:
        """int_{B_R} u dx."""
        return float(_simpson(2 * np.pi * self.r * self.u, self.r[1] - self.r[0]))


class RadialRadius(NamedTuple):
    R: float
    valid: bool


def _simpson(y: np.ndarray, dx: float) -> float:
    n = len(y) - 1
    if n % 2:
        raise ValueError("composite Simpson needs an even number of intervals")
    return dx / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def _cumulative_simpson(y: np.ndarray, dx: float) -> np.ndarray:
    """Running integral from the first sample.

    Even-indexed samples use panels of two intervals; odd-indexed ones add the
    first half of the following panel with the matching three-point rule.
    """
    n = len(y) - 1
    out = np.zeros(n + 1)
    panel = dx / 3 * (y[0:-2:2] + 4 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(panel)
    half = dx / 12 * (5 * y[0:-2:2] + 8 * y[1:-1:2] - y[2::2])
    out[1::2] = out[0:-2:2] + half
    return out


def _flux_integral(c: float, a: float, r: np.ndarray) -> np.ndarray:
    """int_0^r s f(s) ds for the step source.

    The integrand ``s * c`` is linear on each side of ``a``; Simpson's rule on
    the split sub-intervals is exact, which collapses to this form.
    """
    m = np.minimum(r, a)
    return c * m * m / 2


def _backward(du: np.ndarray, dx: float) -> np.ndarray:
    """u(r) = -int_r^R u'(s) ds, i.e. u(R) = 0."""
    rev = _cumulative_simpson(du[::-1], dx)
    return -rev[::-1]


def _step_slope(c: float, a: float, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = -_flux_integral(c, a, r[pos]) / r[pos]
    return out


def _backward_split(c: float, a: float, r: np.ndarray) -> np.ndarray:
    """u(r) = -int_r^R u' by Simpson on every interval, the one holding ``a`` split at ``a``.

    u' has a kink at ``a``; splitting there keeps the rule fourth order.
    """
    lo, hi = r[:-1], r[1:]
    cut = (lo < a) & (a < hi)

    def simpson(x0, x1):
        return (x1 - x0) / 6 * (_step_slope(c, a, x0) + 4 * _step_slope(c, a, (x0 + x1) / 2)
                                + _step_slope(c, a, x1))

    pieces = simpson(lo, hi)
    if cut.any():
        pieces[cut] = simpson(lo[cut], np.full(cut.sum(), a)) + simpson(np.full(cut.sum(), a), hi[cut])
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return -tail


def radial_poisson(c: float, a: float, R: float, m: int = DEFAULT_SAMPLES) -> RadialProfile:
    """Profile of u solving -Laplace u = c * 1{r<=a} on B_R, u(R)=0."""
    if not (0 < a <= R):
        raise ValueError("need 0 < a <= R")
    if m < 4 or m % 2:
        raise ValueError("sample count must be even and >= 4")
    r = np.linspace(0.0, R, m + 1)
    du = _step_slope(c, a, r)
    u = _backward_split(c, a, r)
    return RadialProfile(r, u, du, c, a, R)


def radial_cascade(c: float, a: float, R: float, m: int = DEFAULT_SAMPLES) -> tuple[RadialProfile, RadialProfile]:
    """(u, v) with -Laplace v = u on B_R, v(R) = 0."""
    u = radial_poisson(c, a, R, m)
    r = u.r
    dx = r[1] - r[0]
    G = _cumulative_simpson(r * u.u, dx)
    dv = np.zeros_like(r)
    dv[1:] = -G[1:] / r[1:]
    v = _backward(dv, dx)
    return u, RadialProfile(r, v, dv, c, a, R)


def radial_bilap_g(c: float, a: float, R: float, m: int = DEFAULT_SAMPLES) -> float:
    """Boundary datum |u'(R) v'(R)| of the radial bi-Laplacian cascade."""
    u, v = radial_cascade(c, a, R, m)
    return abs(u.du_R * v.du_R)


def radial_qs_radius(c: float, a: float, k: float) -> RadialRadius:
    """Radius balancing source mass against constant boundary flux.

    ``c * pi * a**2 = k * 2 * pi * R``. ``valid`` is False when the ball would
    not contain the source disk.
    """
    if min(c, a, k) <= 0:
        raise ValueError("c, a and k must be positive")
    R = c * a * a / (2 * k)
    return RadialRadius(R, R > a)
