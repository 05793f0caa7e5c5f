"""Smooth compactly supported windows and the partitions built from them.

Everything is driven by the standard bump b(s) = exp(1 - 1/(1 - s^2)) on
(-1, 1).  The smoothed step sigma is its normalized antiderivative, computed
by per-panel Gauss-Legendre quadrature so it is smooth, monotone, and
reproducible to ~1e-15 without special functions.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_N_PANELS = 64
_EDGES = np.linspace(0.0, 1.0, _N_PANELS + 1)


def bump(s) -> np.ndarray:
    """b(s) = exp(1 - 1/(1 - s^2)) for |s| < 1, else 0.  b(0) = 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


def _step_integrand(t):
    # antiderivative integrand: the bump rescaled onto (0, 1)
    return bump(2.0 * t - 1.0)


def _panel_table():
    lo = _EDGES[:-1]
    half = 0.5 * (_EDGES[1:] - lo)
    mid = lo + half
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = _step_integrand(nodes)
    panel = (vals * _GL_W[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(panel)])
    return cum


_CUM = _panel_table()
_TOTAL = _CUM[-1]


def smoothstep(u) -> np.ndarray:
    """Monotone C^infinity step: 0 for u <= 0, 1 for u >= 1.

    smoothstep(u) + smoothstep(1 - u) == 1 up to quadrature accuracy.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    inside = (u > 0.0) & (u < 1.0)
    if np.any(inside):
        ui = u[inside]
        k = np.minimum((ui * _N_PANELS).astype(int), _N_PANELS - 1)
        lo = _EDGES[k]
        half = 0.5 * (ui - lo)
        nodes = (lo + half)[..., None] + half[..., None] * _GL_X
        partial = (_step_integrand(nodes) * _GL_W).sum(axis=-1) * half
        out[inside] = (_CUM[k] + partial) / _TOTAL
    return out


def chi(s) -> np.ndarray:
    """Even cutoff: 1 on |s| <= 1, 0 on |s| >= 2, smooth in between."""
    return 1.0 - smoothstep(np.abs(np.asarray(s, dtype=float)) - 1.0)


def rho_dyadic(s) -> np.ndarray:
    """Dyadic ring window chi(s) - chi(2s), supported on 1/2 <= |s| <= 2.

    sum_{j in Z} rho_dyadic(s / 2^j) = 1 for s != 0 (telescoping).
    """
    s = np.asarray(s, dtype=float)
    return chi(s) - chi(2.0 * s)


def hat(s) -> np.ndarray:
    """Smooth unit-width hat: hat(0) = 1, support [-1, 1].

    The integer translates hat(s - k) sum to 1 exactly (each point sees the
    same smoothstep value from both sides).
    """
    s = np.asarray(s, dtype=float)
    return np.where(s < 0.0, smoothstep(1.0 + s), 1.0 - smoothstep(s))


def eta_hat(xi) -> np.ndarray:
    """Radial frequency window: 1 on |xi| <= 1/2, 0 on |xi| >= 1.

    xi has the vector components on the last axis.
    """
    xi = np.asarray(xi, dtype=float)
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    return 1.0 - smoothstep(2.0 * r - 1.0)


def taper(s, order: int = 8) -> np.ndarray:
    """Finite-order window (1 - s^2)^order on (-1, 1), else 0.  taper(0) = 1.

    Unlike the C-infinity bump, the taper has a polynomial Fourier tail
    (~ y^-(order+1)), which is what makes measured concentration slopes
    match a stated polynomial order instead of saturating on the bump's
    sub-exponential shoulder.
    """
    s = np.asarray(s, dtype=float)
    if order < 1:
        raise ValueError("taper order must be a positive integer")
    inside = np.abs(s) < 1.0
    out = np.zeros(s.shape)
    si = s[inside]
    out[inside] = (1.0 - si * si) ** order
    return out


def normalized_taper(x, order: int = 8, width: float = 1.0) -> np.ndarray:
    """taper(|x|/width) / sum over unit-lattice translates: partition of unity.

    Requires width > sqrt(n)/2 so the denominator is positive everywhere
    (the farthest point of a unit cell from the lattice is the cell corner).
    Valid for n <= 3; last axis is the vector axis.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n > 3:
        raise ValueError("normalized_taper supports dimensions 1..3")
    if width <= math.sqrt(n) / 2.0:
        raise ValueError(
            f"normalized_taper width {width} too small for dimension {n}; "
            f"needs width > {math.sqrt(n) / 2.0:.6f} to cover cell corners"
        )
    r = np.sqrt(np.sum(x * x, axis=-1))
    num = taper(r / width, order)
    k0 = np.round(x)
    den = np.zeros(x.shape[:-1])
    for off in itertools.product((-1.0, 0.0, 1.0), repeat=n):
        d = x - (k0 + np.asarray(off))
        den += taper(np.sqrt(np.sum(d * d, axis=-1)) / width, order)
    return num / den


def normalized_bump(x) -> np.ndarray:
    """b(|x|) / sum_{k in Z^n} b(|x - k|): unit-lattice partition of unity.

    Valid for n <= 3 (the nearest lattice point is always inside the bump's
    support, so the denominator never vanishes).  Last axis is the vector
    axis.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n > 3:
        raise ValueError("normalized_bump supports dimensions 1..3")
    r = np.sqrt(np.sum(x * x, axis=-1))
    num = bump(r)
    k0 = np.round(x)
    den = np.zeros(x.shape[:-1])
    for off in itertools.product((-1.0, 0.0, 1.0), repeat=n):
        d = x - (k0 + np.asarray(off))
        den += bump(np.sqrt(np.sum(d * d, axis=-1)))
    return num / den
