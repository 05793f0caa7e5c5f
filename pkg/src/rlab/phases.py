"""Phase functions, frequency regions, and the transversality/curvature checks.

A PhaseModel evaluates a dispersion relation Phi together with its gradient
and Hessian, optionally after an anisotropic change of frequency variables
(used by the scaling sweeps so every measurement runs on O(1) grids).  The
geometry checks certify, by sampled minimization, the two quantitative
hypotheses behind the bilinear estimates: a gradient-separation margin
between the two phases, and a chord-convexity margin along the resonance
surface {Phi1(xi) - Phi2(xi - h) = a}.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from functools import lru_cache

import numpy as np
import sympy as sp

from .util import make_rng, wedge_norm

KINDS = ("schroedinger", "klein_gordon")


class PhaseSingularityError(ValueError):
    """Gradient/Hessian requested at a point where the phase is not smooth."""


@dataclasses.dataclass(frozen=True)
class Rescale:
    """Change of frequency variables y = S zeta + shift, plus a time scale.

    The rescaled symbol is

        sign * (1 / time_scale) * (phi(S zeta + shift) - v_lin * (S zeta + shift)[0])
        + drift . zeta

    i.e. a radial linear counterterm is removed before rescaling time, and an
    optional comoving drift (a plain linear term in the new variables) is
    added afterwards.  `scales` is the diagonal of S.
    """

    scales: tuple
    shift: tuple
    time_scale: float
    v_lin: float = 0.0
    drift: tuple | None = None

    def __post_init__(self):
        if len(self.scales) != len(self.shift):
            raise ValueError("scales and shift must have the same length")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")
        if any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")
        if self.drift is not None and len(self.drift) != len(self.scales):
            raise ValueError("drift must match the dimension")

    @property
    def dim(self) -> int:
        return len(self.scales)

    @classmethod
    def thin_slab(cls, alpha: float, lam: float, dim: int, *, drift=None) -> "Rescale":
        """Slab of width alpha*lam around radius lam along the first axis.

        S = diag(lam, alpha*lam, ...), shift = lam * e1, time scale
        alpha^2 * lam, unit radial counterterm.
        """
        scales = (float(lam),) + (float(alpha * lam),) * (dim - 1)
        shift = (float(lam),) + (0.0,) * (dim - 1)
        return cls(
            scales=scales,
            shift=shift,
            time_scale=float(alpha**2 * lam),
            v_lin=1.0,
            drift=None if drift is None else tuple(float(d) for d in drift),
        )

    @classmethod
    def long_tube(
        cls, alpha: float, lam: float, carrier: float, dim: int, *, mass: float = 1.0, drift=None
    ) -> "Rescale":
        """Tube of cross-section alpha*lam and length alpha*lam^2 at `carrier` e1.

        The counterterm speed is the group velocity carrier/<carrier>_mass of
        the carrier frequency itself.
        """
        scales = (float(alpha * lam**2),) + (float(alpha * lam),) * (dim - 1)
        shift = (float(carrier),) + (0.0,) * (dim - 1)
        v = float(carrier) / math.hypot(mass, carrier)
        return cls(
            scales=scales,
            shift=shift,
            time_scale=float(alpha**2 * lam),
            v_lin=v,
            drift=None if drift is None else tuple(float(d) for d in drift),
        )


@dataclasses.dataclass(frozen=True)
class PhaseModel:
    """A dispersion relation with analytic derivatives.

    kind: "schroedinger" (Phi = sign * |xi|^2 / 2) or "klein_gordon"
    (Phi = sign * sqrt(mass^2 + |xi|^2)).  A Rescale may be attached to a
    klein_gordon phase to evaluate it in anisotropically rescaled variables.
    """

    kind: str
    mass: float = 1.0
    sign: int = 1
    rescale: Rescale | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown phase kind {self.kind!r}; expected one of {KINDS}")
        if self.mass < 0:
            raise ValueError("mass must be nonnegative")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.rescale is not None and self.kind != "klein_gordon":
            raise ValueError("rescaling is only supported for klein_gordon phases")

    # -- core symbol in the original variables ------------------------------

    def _radial(self, y: np.ndarray) -> np.ndarray:
        return np.sqrt(self.mass**2 + np.sum(y * y, axis=-1))

    def _base_value(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "schroedinger":
            return 0.5 * np.sum(y * y, axis=-1)
        return self._radial(y)

    def _base_gradient(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "schroedinger":
            return y.copy()
        r = self._radial(y)
        if np.any(r == 0.0):
            raise PhaseSingularityError(
                "gradient of the massless klein_gordon phase is singular at xi = 0"
            )
        return y / r[..., None]

    def _base_hessian(self, y: np.ndarray) -> np.ndarray:
        n = y.shape[-1]
        eye = np.eye(n)
        if self.kind == "schroedinger":
            return np.broadcast_to(eye, y.shape + (n,)).copy()
        r = self._radial(y)
        if np.any(r == 0.0):
            raise PhaseSingularityError(
                "Hessian of the massless klein_gordon phase is singular at xi = 0"
            )
        outer = y[..., :, None] * y[..., None, :]
        return eye / r[..., None, None] - outer / (r**3)[..., None, None]

    # -- public evaluation (handles sign and optional rescaling) ------------

    def _map(self, zeta: np.ndarray) -> np.ndarray:
        rs = self.rescale
        s = np.asarray(rs.scales)
        return zeta * s + np.asarray(rs.shift)

    def value(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.rescale is None:
            return self.sign * self._base_value(xi)
        rs = self.rescale
        y = self._map(xi)
        # sqrt(A) - v*y1 cancels catastrophically when v*y1 is close to
        # sqrt(A) (deep rescalings divide the remainder by a tiny time
        # scale).  Where v*y1 > 0, use the equivalent ratio
        # (m^2 + (1-v^2) y1^2 + |y'|^2) / (sqrt(A) + v*y1), whose numerator
        # is a sum of nonnegative terms.
        v = rs.v_lin
        radial = self._radial(y)
        y1 = y[..., 0]
        direct = radial - v * y1
        stable_num = (
            self.mass**2
            + (1.0 - v) * (1.0 + v) * y1**2
            + np.sum(y[..., 1:] ** 2, axis=-1)
        )
        positive = v * y1 > 0
        denom = np.where(positive, radial + v * y1, 1.0)
        core = np.where(positive, stable_num / denom, direct)
        out = self.sign * core / rs.time_scale
        if rs.drift is not None:
            out = out + xi @ np.asarray(rs.drift)
        return out

    def gradient(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.rescale is None:
            return self.sign * self._base_gradient(xi)
        rs = self.rescale
        s = np.asarray(rs.scales)
        y = self._map(xi)
        g = self._base_gradient(y)
        g[..., 0] -= rs.v_lin
        out = self.sign * (g * s) / rs.time_scale
        if rs.drift is not None:
            out = out + np.asarray(rs.drift)
        return out

    def hessian(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.rescale is None:
            return self.sign * self._base_hessian(xi)
        rs = self.rescale
        s = np.asarray(rs.scales)
        y = self._map(xi)
        h = self._base_hessian(y)
        return self.sign * (h * s[:, None] * s[None, :]) / rs.time_scale

    @property
    def group_velocity_bound(self) -> float:
        """Finite for klein_gordon (speed < 1); inf for schroedinger."""
        if self.kind == "klein_gordon":
            return 1.0
        return math.inf


def eval_phase_suite(model: PhaseModel, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(value, gradient, Hessian) of the phase at xi, in one call."""
    return model.value(xi), model.gradient(xi), model.hessian(xi)


# -- higher derivatives ------------------------------------------------------


def _multi_indices(dim: int, lo: int, hi: int):
    out = []
    for total in range(lo, hi + 1):
        for kappa in itertools.product(range(total + 1), repeat=dim):
            if sum(kappa) == total:
                out.append(kappa)
    return out


@lru_cache(maxsize=None)
def _kg_partials(dim: int, order: int):
    ys = sp.symbols(f"y0:{dim}", real=True)
    m = sp.Symbol("m", positive=True)
    phi = sp.sqrt(m**2 + sum(y**2 for y in ys))
    funcs = {}
    for kappa in _multi_indices(dim, 1, order):
        expr = phi
        for axis, times in enumerate(kappa):
            if times:
                expr = sp.diff(expr, ys[axis], times)
        funcs[kappa] = sp.lambdify(ys + (m,), sp.simplify(expr), modules="numpy")
    return funcs


def derivative_sup(
    model: PhaseModel, region: "FreqRegion", order: int = 4, n_samples: int = 400, seed: int = 0
) -> float:
    """Sampled sup over the region of |d^kappa Phi| over all 1 <= |kappa| <= order."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if order < 1:
        raise ValueError("order must be at least 1")
    rng = make_rng(seed)
    pts = region.sample(n_samples, rng)
    dim = pts.shape[-1]
    # order 1 comes straight from the model gradient (any linear counterterms
    # and drifts are part of the symbol); the symbolic table covers order >= 2
    best = float(np.max(np.abs(model.gradient(pts))))
    if model.kind == "schroedinger":
        return max(best, 1.0) if order >= 2 else best
    if order == 1:
        return best
    rs = model.rescale
    ys = pts if rs is None else pts * np.asarray(rs.scales) + np.asarray(rs.shift)
    if model.mass == 0.0 and np.any(np.sum(ys * ys, axis=-1) == 0.0):
        raise PhaseSingularityError("derivative_sup hit xi = 0 for a massless phase")
    funcs = _kg_partials(dim, order)
    cols = [ys[..., i] for i in range(dim)]
    for kappa, f in funcs.items():
        if sum(kappa) == 1:
            continue
        vals = np.abs(np.asarray(f(*cols, model.mass), dtype=float))
        factor = 1.0
        if rs is not None:
            factor = float(np.prod(np.asarray(rs.scales, dtype=float) ** np.asarray(kappa)))
            factor /= rs.time_scale
        best = max(best, float(np.max(vals)) * factor)
    return best


# -- frequency regions -------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class FreqRegion:
    """A sampleable region of frequency space (ball, annulus, cap, box)."""

    shape: str
    dim: int
    center: tuple = ()
    r_in: float = 0.0
    r_out: float = 0.0
    axis: tuple = ()
    half_angle: float = 0.0
    half_sides: tuple = ()

    @classmethod
    def ball(cls, center, radius: float) -> "FreqRegion":
        center = tuple(float(c) for c in np.atleast_1d(center))
        return cls("ball", len(center), center=center, r_out=float(radius))

    @classmethod
    def annulus(cls, center, r_in: float, r_out: float) -> "FreqRegion":
        if not 0 <= r_in < r_out:
            raise ValueError("annulus needs 0 <= r_in < r_out")
        center = tuple(float(c) for c in np.atleast_1d(center))
        return cls("annulus", len(center), center=center, r_in=float(r_in), r_out=float(r_out))

    @classmethod
    def cap_sector(cls, axis, half_angle: float, r_in: float, r_out: float) -> "FreqRegion":
        axis = np.atleast_1d(np.asarray(axis, dtype=float))
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ValueError("cap axis must be nonzero")
        if not 0 < half_angle <= math.pi:
            raise ValueError("half_angle must lie in (0, pi]")
        if not 0 <= r_in < r_out:
            raise ValueError("cap needs 0 <= r_in < r_out")
        return cls(
            "cap",
            len(axis),
            axis=tuple(axis / norm),
            half_angle=float(half_angle),
            r_in=float(r_in),
            r_out=float(r_out),
        )

    @classmethod
    def box(cls, center, half_sides) -> "FreqRegion":
        center = tuple(float(c) for c in np.atleast_1d(center))
        hs = np.atleast_1d(np.asarray(half_sides, dtype=float))
        if hs.size == 1:
            hs = np.full(len(center), float(hs))
        if len(hs) != len(center):
            raise ValueError("half_sides must match the center dimension")
        if np.any(hs <= 0):
            raise ValueError("half_sides must be positive")
        return cls("box", len(center), center=center, half_sides=tuple(hs))

    # --

    def contains(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.shape in ("ball", "annulus"):
            d = xi - np.asarray(self.center)
            r = np.sqrt(np.sum(d * d, axis=-1))
            if self.shape == "ball":
                return r <= self.r_out + 1e-12
            return (r >= self.r_in - 1e-12) & (r <= self.r_out + 1e-12)
        if self.shape == "cap":
            r = np.sqrt(np.sum(xi * xi, axis=-1))
            ok = (r >= self.r_in - 1e-12) & (r <= self.r_out + 1e-12)
            with np.errstate(invalid="ignore"):
                cosang = (xi @ np.asarray(self.axis)) / np.where(r == 0, 1.0, r)
            return ok & (np.arccos(np.clip(cosang, -1.0, 1.0)) <= self.half_angle + 1e-9)
        d = np.abs(xi - np.asarray(self.center))
        return np.all(d <= np.asarray(self.half_sides) + 1e-12, axis=-1)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count < 1:
            raise ValueError("sample count must be positive")
        n = self.dim
        if self.shape in ("ball", "annulus"):
            r_in = self.r_in if self.shape == "annulus" else 0.0
            u = rng.normal(size=(count, n))
            u /= np.linalg.norm(u, axis=-1, keepdims=True)
            radii = (r_in**n + rng.uniform(size=count) * (self.r_out**n - r_in**n)) ** (1.0 / n)
            return np.asarray(self.center) + u * radii[:, None]
        if self.shape == "cap":
            return self._sample_cap(count, rng)
        hs = np.asarray(self.half_sides)
        return np.asarray(self.center) + rng.uniform(-1.0, 1.0, size=(count, n)) * hs

    def _sample_cap(self, count: int, rng: np.random.Generator) -> np.ndarray:
        n = self.dim
        w = self.half_angle
        radii = (self.r_in**n + rng.uniform(size=count) * (self.r_out**n - self.r_in**n)) ** (
            1.0 / n
        )
        axis = np.asarray(self.axis)
        if n == 2:
            base = math.atan2(axis[1], axis[0])
            ang = base + rng.uniform(-w, w, size=count)
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
            return dirs * radii[:, None]
        if n == 3:
            cosang = rng.uniform(math.cos(w), 1.0, size=count)
            sinang = np.sqrt(1.0 - cosang**2)
            phi = rng.uniform(0.0, 2 * math.pi, size=count)
            local = np.stack([sinang * np.cos(phi), sinang * np.sin(phi), cosang], axis=-1)
            basis = _orthonormal_basis_with(axis)
            dirs = local @ basis  # rows of basis: two tangents then the axis
            return dirs * radii[:, None]
        raise ValueError("cap sampling implemented for dimensions 2 and 3")

    def diameter(self) -> float:
        if self.shape == "ball":
            return 2.0 * self.r_out
        if self.shape == "annulus":
            return 2.0 * self.r_out
        if self.shape == "box":
            return 2.0 * float(np.linalg.norm(self.half_sides))
        if self.half_angle >= math.pi / 2:
            return 2.0 * self.r_out
        w = self.half_angle
        # farthest pair among boundary candidates of the planar section
        cands = [
            2.0 * self.r_out * math.sin(w),  # outer arc ends
            math.hypot(self.r_out - self.r_in * math.cos(2 * w), self.r_in * math.sin(2 * w)),
            self.r_out - self.r_in,
        ]
        return max(cands)


def _orthonormal_basis_with(axis: np.ndarray) -> np.ndarray:
    """Rows: an orthonormal basis whose last row is `axis` (unit)."""
    n = len(axis)
    basis = [axis]
    for e in np.eye(n):
        v = e - sum((e @ b) * b for b in basis)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            basis.append(v / norm)
        if len(basis) == n:
            break
    rows = np.stack(basis[1:] + [axis])
    return rows


# -- transversality ----------------------------------------------------------


def _cross_min(
    vals1: np.ndarray, vals2: np.ndarray, chunk: int = 512
) -> tuple[float, tuple[int, int]]:
    """min over all pairs of |v1_i - v2_j|, with the argmin index pair."""
    best = math.inf
    arg = (0, 0)
    for start in range(0, vals1.shape[0], chunk):
        block = vals1[start : start + chunk]
        d = block[:, None, :] - vals2[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[i, j] < best:
            best = float(dist[i, j])
            arg = (start + int(i), int(j))
    return best, arg


def transversality_margin(
    m1: PhaseModel,
    m2: PhaseModel,
    r1: FreqRegion,
    r2: FreqRegion,
    n_samples: int = 400,
    seed: int = 0,
) -> float:
    """min over sampled xi in r1, eta in r2 of |grad Phi1(xi) - grad Phi2(eta)|.

    When the two regions compare equal the same sample set is used for both,
    so identical phases report a margin of exactly zero.
    """
    value, _ = _transversality_with_witness(m1, m2, r1, r2, n_samples, seed)
    return value


def _transversality_with_witness(m1, m2, r1, r2, n_samples, seed):
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = make_rng(seed)
    s1 = r1.sample(n_samples, rng)
    s2 = s1 if r2 == r1 else r2.sample(n_samples, rng)
    g1 = m1.gradient(s1)
    g2 = m2.gradient(s2)
    val, (i, j) = _cross_min(g1, g2)
    return val, (s1[i], s2[j])


# -- the resonance surface and its curvature margin --------------------------


def _surface_residual(m1: PhaseModel, m2: PhaseModel, h: tuple, xi: np.ndarray) -> np.ndarray:
    a, hvec = float(h[0]), np.asarray(h[1], dtype=float)
    return m1.value(xi) - m2.value(xi - hvec) - a


def _surface_gradient(m1: PhaseModel, m2: PhaseModel, h: tuple, xi: np.ndarray) -> np.ndarray:
    hvec = np.asarray(h[1], dtype=float)
    return m1.gradient(xi) - m2.gradient(xi - hvec)


def sigma_solve(
    m1: PhaseModel,
    m2: PhaseModel,
    h: tuple,
    xi0,
    tol: float = 1e-10,
    max_steps: int = 256,
    step_cap: float = 1.0,
) -> np.ndarray:
    """Walk xi0 down the gradient of F(xi) = Phi1(xi) - Phi2(xi - h[1]) - h[0]
    until |F| <= tol; returns the landing point on the resonance surface.

    Steps follow -sign(F) grad F / |grad F| with length min(|F|/|grad F|,
    step_cap), so the total travel is controlled by the initial residual.
    """
    xi = np.atleast_2d(np.asarray(xi0, dtype=float)).copy()
    single = np.asarray(xi0).ndim == 1
    active = np.ones(xi.shape[0], dtype=bool)
    res = _surface_residual(m1, m2, h, xi)
    for _ in range(max_steps):
        active = np.abs(res) > tol
        if not np.any(active):
            break
        pts = xi[active]
        g = _surface_gradient(m1, m2, h, pts)
        gn = np.linalg.norm(g, axis=-1)
        if np.any(gn < 1e-14):
            raise ValueError("sigma_solve stalled: vanishing surface gradient")
        r = res[active]
        length = np.minimum(np.abs(r) / gn, step_cap)
        xi[active] = pts - (np.sign(r) * length / gn)[:, None] * g
        res = _surface_residual(m1, m2, h, xi)
    else:
        worst = float(np.max(np.abs(res)))
        raise ValueError(
            f"sigma_solve did not converge in {max_steps} steps; last residual {worst:.3e}"
        )
    return xi[0] if single else xi


def _sigma_points(
    m1: PhaseModel,
    m2: PhaseModel,
    r1: FreqRegion,
    r2: FreqRegion,
    h: tuple,
    starts: np.ndarray,
    tol: float,
) -> np.ndarray:
    """Surface points inside r1 whose shift lands in r2 (may be empty)."""
    try:
        landed = sigma_solve(m1, m2, h, starts, tol=tol)
    except ValueError:
        return np.empty((0, starts.shape[-1]))
    hvec = np.asarray(h[1], dtype=float)
    keep = r1.contains(landed) & r2.contains(landed - hvec)
    return landed[keep]


def curvature_margin_on_sigma(
    m1: PhaseModel,
    m2: PhaseModel,
    r1: FreqRegion,
    r2: FreqRegion,
    h: tuple,
    n_samples: int = 400,
    seed: int = 0,
    tol: float = 1e-10,
    pair_floor: float = 1e-6,
) -> float:
    """Chord-convexity margin of Phi1 along the resonance surface.

    min over surface point pairs (xi, xi') of
        (grad Phi1(xi) - grad Phi1(xi')) . (xi - xi') / |xi - xi'|^2.

    Returns +inf when no sampled start lands on the surface inside the
    regions; raises when surface points exist but every pair is degenerate.
    """
    rng = make_rng(seed)
    starts = r1.sample(n_samples, rng)
    pts = _sigma_points(m1, m2, r1, r2, h, starts, tol)
    if pts.shape[0] == 0:
        return math.inf
    g = m1.gradient(pts)
    d = pts[:, None, :] - pts[None, :, :]
    dg = g[:, None, :] - g[None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    mask = dist2 > pair_floor**2
    if not np.any(mask):
        raise ValueError("no admissible pairs: all surface samples coincide")
    quot = np.sum(dg * d, axis=-1) / np.where(mask, dist2, 1.0)
    return float(np.min(quot[mask]))


def natural_shifts(
    m1: PhaseModel,
    m2: PhaseModel,
    r1: FreqRegion,
    r2: FreqRegion,
    count: int = 8,
    seed: int = 0,
) -> list[tuple[float, tuple]]:
    """Shift parameters (a, h) whose resonance surface provably meets r1.

    Each is built from a sampled pair xi in r1, eta in r2 via h = xi - eta,
    a = Phi1(xi) - Phi2(eta), so xi itself lies on the surface.
    """
    rng = make_rng(seed)
    xs = r1.sample(count, rng)
    es = r2.sample(count, rng)
    out = []
    for xi, eta in zip(xs, es):
        a = float(m1.value(xi) - m2.value(eta))
        out.append((a, tuple(float(v) for v in (xi - eta))))
    return out


# -- the combined report ------------------------------------------------------


@dataclasses.dataclass
class GeometryReport:
    """Outcome of the sampled verification of the two-phase hypotheses."""

    a1_margin: float
    a2_margin: float
    d2_bound: float
    d1_estimate: float
    diam_condition_ok: bool
    assumption_ok: bool
    a2_surface_empty: bool
    witnesses: dict
    failures: dict
    n_samples: int
    n_der: int
    seed: int
    shifts_used: list

    def summary(self) -> str:
        status = "OK" if self.assumption_ok else "FAIL"
        return (
            f"[{status}] a1={self.a1_margin:.6g} a2={self.a2_margin:.6g} "
            f"d1=0.5*a1*a2={self.d1_estimate:.6g} d2<={self.d2_bound:.6g} "
            f"diam_ok={self.diam_condition_ok}"
        )


def assumption_report(
    m1: PhaseModel,
    m2: PhaseModel,
    r1: FreqRegion,
    r2: FreqRegion,
    n_der: int = 4,
    shifts: list | None = None,
    n_samples: int = 400,
    seed: int = 0,
) -> GeometryReport:
    """Sampled certificate for the two-phase transversality/curvature set-up.

    a1: gradient-separation margin between the phases over r1 x r2.
    a2: worst chord-convexity margin along the resonance surfaces of both
        orderings, over the given shifts (defaults to natural ones).
    d2: sampled sup of phase derivatives up to order n_der.
    d1_estimate is exactly 0.5 * a1 * a2; the diameter condition checks
    diam(r1) + diam(r2) <= a1 * a2 / (2 (H1 + H2)^2) with Hj the sampled
    Hessian sups (a sufficient, not necessary, smallness condition).
    """
    failures: dict[str, str] = {}
    witnesses: dict[str, object] = {}

    a1, pair = _transversality_with_witness(m1, m2, r1, r2, n_samples, seed)
    witnesses["a1_pair"] = (tuple(pair[0]), tuple(pair[1]))
    if a1 <= 0:
        failures["transversality"] = "zero gradient-separation margin"

    if shifts is None:
        shifts = natural_shifts(m1, m2, r1, r2, count=6, seed=seed + 1)
    per_shift: list[float] = []
    empty_count = 0
    for k, hh in enumerate(shifts):
        a, hv = hh
        swapped = (-float(a), tuple(-v for v in hv))
        for tag, (mm1, mm2, rr1, rr2, hhh) in {
            "fwd": (m1, m2, r1, r2, (a, hv)),
            "rev": (m2, m1, r2, r1, swapped),
        }.items():
            try:
                val = curvature_margin_on_sigma(
                    mm1, mm2, rr1, rr2, hhh, n_samples=n_samples, seed=seed + 10 + k
                )
            except ValueError as exc:
                failures[f"curvature[{k}:{tag}]"] = str(exc)
                continue
            if math.isinf(val):
                empty_count += 1
            else:
                per_shift.append(val)

    a2_surface_empty = not per_shift
    a2 = math.inf if a2_surface_empty else float(min(per_shift))
    if a2_surface_empty:
        failures["curvature"] = "no sampled shift produced surface points"

    d2 = max(
        derivative_sup(m1, r1, order=n_der, n_samples=n_samples, seed=seed + 2),
        derivative_sup(m2, r2, order=n_der, n_samples=n_samples, seed=seed + 3),
    )

    rng = make_rng(seed + 4)
    h1 = float(
        np.max(np.abs(np.linalg.eigvalsh(m1.hessian(r1.sample(n_samples, rng)))))
    )
    h2 = float(
        np.max(np.abs(np.linalg.eigvalsh(m2.hessian(r2.sample(n_samples, rng)))))
    )
    if a2_surface_empty:
        diam_ok = False
    else:
        diam_ok = bool(
            r1.diameter() + r2.diameter() <= a1 * a2 / (2.0 * (h1 + h2) ** 2)
        )

    d1 = 0.5 * a1 * a2
    ok = (a1 > 0) and (not a2_surface_empty) and (a2 > 0) and not failures
    return GeometryReport(
        a1_margin=a1,
        a2_margin=a2,
        d2_bound=d2,
        d1_estimate=d1,
        diam_condition_ok=diam_ok,
        assumption_ok=ok,
        a2_surface_empty=a2_surface_empty,
        witnesses=witnesses,
        failures=failures,
        n_samples=n_samples,
        n_der=n_der,
        seed=seed,
        shifts_used=list(shifts),
    )


# -- space-time cone transversality ------------------------------------------


def cone_transversality_margin(
    mj: PhaseModel,
    mk: PhaseModel,
    h: tuple,
    eta_region: FreqRegion,
    n_samples: int = 200,
    seed: int = 0,
    tol: float = 1e-10,
    max_pairs: int = 2000,
) -> float:
    """Angle margin between chords of the mk-characteristic cone over the
    resonance surface and the mj-characteristic directions.

    Cone points are (r, -r grad Phi_k(xi)) for surface points xi; the margin
    is min over chords (p - q) and eta in eta_region of
    |(p - q) wedge (1, -grad Phi_j(eta))| / |p - q|.
    """
    rng = make_rng(seed)
    hvec = np.asarray(h[1], dtype=float)
    starts = np.concatenate(
        [eta_region.sample(n_samples, rng), eta_region.sample(n_samples, rng) + hvec]
    )
    try:
        landed = sigma_solve(mk, mj, h, starts, tol=tol)
    except ValueError:
        landed = np.empty((0, starts.shape[-1]))
    ok = np.abs(_surface_residual(mk, mj, h, landed)) <= tol if landed.size else np.array([])
    pts = landed[ok] if landed.size else landed
    if pts.shape[0] < 2:
        raise ValueError("fewer than 2 distinct cone points found on the surface")
    grads = mk.gradient(pts)
    r = rng.uniform(-2.0, 2.0, size=pts.shape[0])
    cone = np.concatenate([r[:, None], -r[:, None] * grads], axis=-1)
    ii, jj = np.triu_indices(pts.shape[0], k=1)
    if ii.size > max_pairs:
        keep = rng.choice(ii.size, size=max_pairs, replace=False)
        ii, jj = ii[keep], jj[keep]
    chords = cone[ii] - cone[jj]
    lens = np.linalg.norm(chords, axis=-1)
    good = lens > 1e-12
    chords, lens = chords[good], lens[good]
    if chords.shape[0] == 0:
        raise ValueError("fewer than 2 distinct cone points found on the surface")
    etas = eta_region.sample(n_samples, rng)
    gj = mj.gradient(etas)
    char = np.concatenate([np.ones((gj.shape[0], 1)), -gj], axis=-1)
    w = wedge_norm(chords[:, None, :], char[None, :, :])
    return float(np.min(w / lens[:, None]))
