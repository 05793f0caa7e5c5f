"""Wave-packet decomposition at a scale R, tube geometry, and incidence counts.

A packet lives on a phase-space lattice cell of dimensions R^{1/2} (space) by
R^{-1/2} (frequency).  The localization operator is a spatial window at x0
composed with a frequency cutoff at xi0; both windows are finite-order tapers
so that measured concentration decay matches the stated polynomial order.
The spatial windows sum to 1 exactly over the sqrt(R)-lattice (only the zero
Fourier mode survives the lattice sum), and the frequency windows are an
exact partition of unity over the R^{-1/2}-lattice, so packet sums
reconstruct the field to rounding error.

Tubes are line-segment-plus-radius objects in continuous coordinates; every
membership, distance, and cube-intersection decision is computed exactly
(convex one-dimensional minimizations), not rasterized, so the combinatorial
tables double as a trustworthy counting oracle.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import json
import math
import warnings

import numpy as np

from .phases import PhaseModel, sigma_solve
from .spectral import GridField, propagate
from .util import fit_loglog_slope
from .windows import normalized_taper, taper

WINDOW_ORDER = 8      # polynomial order of both packet windows
SPATIAL_WIDTH = 1.10  # spatial window bandwidth, units of R^{-1/2}
FREQ_WIDTH = 0.90     # frequency window support radius, units of R^{-1/2}
MIN_SCALE = 16.0      # smallest scale the window pair is built for
SHARP_FACTOR = 2.0    # frequency fattening of the companion localization

# SPATIAL_WIDTH + FREQ_WIDTH == 2 keeps every packet's Fourier support inside
# the ball of radius 2 R^{-1/2} around xi0 with no leaked mass at all.


@dataclasses.dataclass(frozen=True)
class PhasePoint:
    """A phase-space lattice point (x0, xi0) at scale R.

    x0 lies on sqrt(R) Z^n and xi0 on Z^n / sqrt(R); both are validated at
    construction (1e-9 tolerance on the lattice residual).
    """

    x0: tuple
    xi0: tuple
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "xi0", tuple(float(v) for v in np.atleast_1d(self.xi0)))
        object.__setattr__(self, "scale", float(self.scale))
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        if len(self.x0) != len(self.xi0):
            raise ValueError("x0 and xi0 must have the same dimension")
        s = math.sqrt(self.scale)
        for v in self.x0:
            if abs(v - round(v / s) * s) > 1e-9 * max(1.0, s):
                raise ValueError(f"x0 component {v} is not on the sqrt(scale) lattice")
        for v in self.xi0:
            if abs(v * s - round(v * s)) > 1e-9:
                raise ValueError(f"xi0 component {v} is not on the 1/sqrt(scale) lattice")

    @property
    def dim(self) -> int:
        return len(self.x0)

    @classmethod
    def from_indices(cls, ix, ik, scale: float) -> "PhasePoint":
        s = math.sqrt(float(scale))
        x0 = tuple(float(i) * s for i in np.atleast_1d(ix))
        xi0 = tuple(float(k) / s for k in np.atleast_1d(ik))
        return cls(x0, xi0, float(scale))


@dataclasses.dataclass(frozen=True)
class Tube:
    """Space-time tube: core x0 + t*velocity, t in [R/2, R], radius sqrt(R)."""

    gamma: PhasePoint
    velocity: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "velocity", tuple(float(v) for v in np.atleast_1d(self.velocity))
        )
        if len(self.velocity) != self.gamma.dim:
            raise ValueError("velocity dimension does not match the phase point")

    @classmethod
    def from_phase_point(cls, gamma: PhasePoint, model: PhaseModel) -> "Tube":
        v = -model.gradient(np.asarray(gamma.xi0))
        return cls(gamma, tuple(float(c) for c in np.atleast_1d(v)))

    @property
    def scale(self) -> float:
        return self.gamma.scale

    @property
    def radius(self) -> float:
        return math.sqrt(self.gamma.scale)

    @property
    def t_min(self) -> float:
        return self.gamma.scale / 2.0

    @property
    def t_max(self) -> float:
        return self.gamma.scale

    def core(self, t) -> np.ndarray:
        """Core position at time(s) t; t broadcasts against the leading axes."""
        t = np.asarray(t, dtype=float)
        x0 = np.asarray(self.gamma.x0)
        v = np.asarray(self.velocity)
        return x0 + t[..., None] * v

    def contains(self, t, x) -> np.ndarray:
        """Exact membership of the space-time point(s) (t, x)."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        off = x - self.core(t)
        inside_time = (t >= self.t_min) & (t <= self.t_max)
        return inside_time & (np.sqrt(np.sum(off * off, axis=-1)) <= self.radius)

    def distance(self, t, x) -> np.ndarray:
        """Exact distance from space-time point(s) (t, x) to the solid tube.

        Minimizes the convex map s -> (t-s)^2 + (|x - core(s)| - radius)_+^2
        over s in [R/2, R] by two-sided ternary search.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        t, xb = np.broadcast_arrays(t, x[..., 0])
        lo = np.full(t.shape, self.t_min)
        hi = np.full(t.shape, self.t_max)
        x0 = np.asarray(self.gamma.x0)
        v = np.asarray(self.velocity)

        def g(s):
            core = x0 + s[..., None] * v
            off = x - core
            sp = np.sqrt(np.sum(off * off, axis=-1))
            return (t - s) ** 2 + np.maximum(0.0, sp - self.radius) ** 2

        for _ in range(90):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            g1, g2 = g(m1), g(m2)
            lo = np.where(g1 >= g2, m1, lo)
            hi = np.where(g1 <= g2, m2, hi)
        return np.sqrt(g(0.5 * (lo + hi)))


# -- localization ------------------------------------------------------------


def _grid_checks(f: GridField, gamma: PhasePoint) -> int:
    if gamma.dim != f.dim:
        raise ValueError(f"phase point dimension {gamma.dim} != field dimension {f.dim}")
    if f.dim > 3:
        raise ValueError("packet windows support dimensions 1..3")
    R = gamma.scale
    if R < MIN_SCALE:
        raise ValueError(
            f"scale {R} is below the minimum {MIN_SCALE} supported by the window pair"
        )
    M = f.box_length / math.sqrt(R)
    if abs(M - round(M)) > 1e-9:
        raise ValueError(
            "box length must be an integer multiple of sqrt(scale) "
            f"(got {f.box_length} / sqrt({R}) = {M})"
        )
    return int(round(M))


def _spatial_window(f: GridField, gamma: PhasePoint, width_factor: float = 1.0) -> np.ndarray:
    """Band-limited spatial window at x0: sums to 1 exactly over the lattice."""
    M = _grid_checks(f, gamma)
    s = math.sqrt(gamma.scale)
    xi = f.freq_grid()
    r = np.sqrt(np.sum(xi * xi, axis=-1)) * s
    hat = taper(r / (SPATIAL_WIDTH * width_factor), WINDOW_ORDER)
    phase = np.exp(-1j * np.tensordot(xi, np.asarray(gamma.x0), axes=([-1], [0])))
    # Only the k = 0 mode survives summing exp(-i xi . x0) over the full
    # x0-lattice, so the lattice sum of W is (M/L)^n * hat(0); the (N/M)^n
    # scale below makes it exactly 1.
    return np.fft.ifftn(hat * phase) * (f.points / M) ** f.dim


def _freq_window(f: GridField, gamma: PhasePoint) -> np.ndarray:
    """Frequency-cell window at xi0: exact partition over the R^{-1/2} lattice."""
    s = math.sqrt(gamma.scale)
    u = (f.freq_grid() - np.asarray(gamma.xi0)) * s
    return normalized_taper(u, WINDOW_ORDER, FREQ_WIDTH)


def packet_localize(f: GridField, gamma: PhasePoint) -> GridField:
    """L_gamma f: frequency cutoff to the cell at xi0, then the window at x0.

    The Fourier support of the result lies within 2 R^{-1/2} of xi0 (the two
    window bandwidths sum to exactly 2 R^{-1/2}).
    """
    _grid_checks(f, gamma)
    W = _spatial_window(f, gamma)
    rho = _freq_window(f, gamma)
    g = np.fft.ifftn(rho * f.fourier()) * (f.points / f.box_length) ** f.dim
    return f.with_samples(W * g)


def _spatial_window_sharp(f: GridField, gamma: PhasePoint) -> np.ndarray:
    """Doubled-width spatial window, height-matched to the primary at x0.

    It majorizes the primary window near its core, so companion norms are a
    fair reference scale; it is not part of the partition of unity.
    """
    M = _grid_checks(f, gamma)
    s = math.sqrt(gamma.scale)
    xi = f.freq_grid()
    r = np.sqrt(np.sum(xi * xi, axis=-1)) * s
    hat1 = taper(r / SPATIAL_WIDTH, WINDOW_ORDER)
    hat2 = taper(r / (SHARP_FACTOR * SPATIAL_WIDTH), WINDOW_ORDER)
    match = hat1.sum() / hat2.sum()
    phase = np.exp(-1j * np.tensordot(xi, np.asarray(gamma.x0), axes=([-1], [0])))
    return np.fft.ifftn(hat2 * phase) * (f.points / M) ** f.dim * match


def _freq_window_sharp(f: GridField, gamma: PhasePoint) -> np.ndarray:
    """Doubled-support frequency window (plateau over the cell, unnormalized)."""
    s = math.sqrt(gamma.scale)
    u = (f.freq_grid() - np.asarray(gamma.xi0)) * s
    return taper(np.sqrt(np.sum(u * u, axis=-1)) / (SHARP_FACTOR * FREQ_WIDTH),
                 WINDOW_ORDER)


def packet_localize_sharp(f: GridField, gamma: PhasePoint) -> GridField:
    """Companion localization: both windows fattened to doubled support.

    Used as the reference scale in the concentration and orthogonality
    diagnostics: it dominates the cell without being part of the partition.
    """
    _grid_checks(f, gamma)
    W = _spatial_window_sharp(f, gamma)
    rho = _freq_window_sharp(f, gamma)
    g = np.fft.ifftn(rho * f.fourier()) * (f.points / f.box_length) ** f.dim
    return f.with_samples(W * g)


@dataclasses.dataclass(frozen=True)
class Packet:
    """One wave packet: localized data together with its free evolution."""

    field: GridField
    model: PhaseModel
    gamma: PhasePoint

    def at_time(self, t: float) -> GridField:
        return propagate(self.field, self.model, t)

    def tube(self) -> Tube:
        return Tube.from_phase_point(self.gamma, self.model)


class PacketDecomposition:
    """Lazy map from phase points to packets for data u0 at scale R."""

    def __init__(self, u0: GridField, model: PhaseModel, scale: float,
                 phase_points: tuple, leaked_fraction: float):
        self.u0 = u0
        self.model = model
        self.scale = float(scale)
        self.phase_points = tuple(phase_points)
        self.leaked_fraction = float(leaked_fraction)
        self._u0_hat = u0.fourier()
        self._windows: dict = {}
        self._sum_full = None

    def _window(self, gamma: PhasePoint) -> np.ndarray:
        """Spatial window at gamma.x0, memoized (it is xi0-independent)."""
        if gamma.x0 not in self._windows:
            self._windows[gamma.x0] = _spatial_window(self.u0, gamma)
        return self._windows[gamma.x0]

    def __len__(self) -> int:
        return len(self.phase_points)

    def __iter__(self):
        return iter(self.phase_points)

    def localized(self, gamma: PhasePoint) -> GridField:
        return packet_localize(self.u0, gamma)

    def packet(self, gamma: PhasePoint) -> Packet:
        return Packet(self.localized(gamma), self.model, gamma)

    def at_time(self, gamma: PhasePoint, t: float) -> GridField:
        return propagate(self.localized(gamma), self.model, t)

    def sum_localized(self, subset=None) -> GridField:
        """Sum of L_gamma u0 over a subset (default: all phase points).

        Grouped by frequency cell; within a cell the spatial windows are
        accumulated first, which is the packet sum up to the distributive law.
        """
        if subset is None and self._sum_full is not None:
            return self._sum_full
        pts = self.phase_points if subset is None else tuple(subset)
        groups: dict = {}
        for g in pts:
            groups.setdefault(g.xi0, []).append(g)
        acc = np.zeros_like(self.u0.samples)
        scale_fwd = (self.u0.points / self.u0.box_length) ** self.u0.dim
        for xi0, members in groups.items():
            rho = _freq_window(self.u0, members[0])
            cell = np.fft.ifftn(rho * self._u0_hat) * scale_fwd
            wsum = np.zeros_like(acc)
            for g in members:
                wsum += self._window(g)
            acc += wsum * cell
        out = self.u0.with_samples(acc)
        if subset is None:
            self._sum_full = out
        return out

    def reconstruction(self, t: float) -> GridField:
        """Sum of all packets at time t (propagation is linear, so the sum
        of propagated packets is the propagated sum)."""
        return propagate(self.sum_localized(), self.model, t)


def packet_decompose(u0: GridField, model: PhaseModel, scale: float) -> PacketDecomposition:
    """Split u0 into wave packets at scale R under the given phase model.

    Enumerates the full sqrt(R) spatial lattice against every frequency cell
    that carries data mass.  Data reaching beyond half the representable
    frequency band is flagged with a warning carrying the leaked mass
    fraction (such components alias under windowing and evolution).
    """
    R = float(scale)
    probe = PhasePoint.from_indices((0,) * u0.dim, (0,) * u0.dim, R)
    M = _grid_checks(u0, probe)
    s = math.sqrt(R)
    u0_hat = u0.fourier()
    power = np.abs(u0_hat) ** 2
    total = float(power.sum())

    xi = u0.freq_grid()
    xi_max = math.pi * u0.points / u0.box_length
    leaked = 0.0
    if total > 0.0:
        outside = np.max(np.abs(xi), axis=-1) > xi_max / 2.0
        leaked = float(power[outside].sum() / total)
        if leaked > 1e-12:
            warnings.warn(
                "data support leaks beyond half the frequency box "
                f"(fraction {leaked:.3e}); packets near the band edge alias",
                stacklevel=2,
            )

    cells: set = set()
    if total > 0.0:
        mask = power > (1e-28 * power.max())
        pts = xi[mask] * s
        for off in itertools.product((-1, 0, 1), repeat=u0.dim):
            j = np.round(pts) + np.asarray(off, dtype=float)
            d = np.sqrt(np.sum((pts - j) ** 2, axis=-1))
            near = d < FREQ_WIDTH
            for row in np.unique(j[near].astype(int), axis=0) if near.any() else []:
                cells.add(tuple(int(v) for v in row))

    points = []
    for cell in sorted(cells):
        for ix in itertools.product(range(M), repeat=u0.dim):
            points.append(PhasePoint.from_indices(ix, cell, R))
    return PacketDecomposition(u0, model, R, tuple(points), leaked)


def packet_weight(f: GridField, gamma: PhasePoint) -> np.ndarray:
    """Tail weight w_gamma(x) = (1 + |x - x0|/sqrt(R))^(order - 1 + (n+1)/2).

    Distances are periodic (torus-minimal).  Weighted packet norms
    ||w_gamma L_gamma f|| dominate the plain ones by the window's high
    moment; they are reported as a diagnostic, not bounded a priori.
    """
    L = f.box_length
    axis = f.coord_axis()
    mesh = np.meshgrid(*([axis] * f.dim), indexing="ij")
    x = np.stack(mesh, axis=-1)
    d = np.abs(x - np.asarray(gamma.x0))
    d = np.minimum(d, L - d)
    r = np.sqrt(np.sum(d * d, axis=-1))
    expo = WINDOW_ORDER - 1 + (f.dim + 1) / 2.0
    return (1.0 + r / math.sqrt(gamma.scale)) ** expo


def weighted_localization_constant(decomp: PacketDecomposition) -> float:
    """Measured C in sum_gamma ||w_gamma L_gamma f||^2 <= C ||f||^2.

    Window-tail dominated: grows with the window's high moment, so it is a
    diagnostic magnitude, not a small constant.
    """
    u0 = decomp.u0
    denom = u0.norm_l2() ** 2
    if denom == 0.0:
        return 0.0
    scale_fwd = (u0.points / u0.box_length) ** u0.dim
    cell_fields: dict = {}
    wsq_memo: dict = {}
    total = 0.0
    for g in decomp.phase_points:
        if g.xi0 not in cell_fields:
            rho = _freq_window(u0, g)
            cell_fields[g.xi0] = np.fft.ifftn(rho * decomp._u0_hat) * scale_fwd
        if g.x0 not in wsq_memo:
            wsq_memo[g.x0] = (np.abs(decomp._window(g)) * packet_weight(u0, g)) ** 2
        total += float(np.sum(wsq_memo[g.x0] * np.abs(cell_fields[g.xi0]) ** 2)
                       * u0.cell_volume)
    return total / denom


def localization_l2_constant(decomp: PacketDecomposition) -> float:
    """Measured C in sum_gamma ||L_gamma f||^2 <= C ||f||^2.

    Uses the translation invariance of the spatial-window square sum: the sum
    over the x0-lattice of |W|^2 is one fixed array, so the packet sum
    collapses to one quadrature per frequency cell.
    """
    u0 = decomp.u0
    denom = u0.norm_l2() ** 2
    if denom == 0.0:
        return 0.0
    cells = sorted({g.xi0 for g in decomp.phase_points})
    if not cells:
        return 0.0
    probe = next(g for g in decomp.phase_points)
    wsq = np.zeros(u0.samples.shape)
    M = _grid_checks(u0, probe)
    for ix in itertools.product(range(M), repeat=u0.dim):
        gam = PhasePoint.from_indices(ix, (0,) * u0.dim, decomp.scale)
        wsq += np.abs(decomp._window(gam)) ** 2
    scale_fwd = (u0.points / u0.box_length) ** u0.dim
    total = 0.0
    for cell in cells:
        gam = PhasePoint((0.0,) * u0.dim, cell, decomp.scale)
        rho = _freq_window(u0, gam)
        g = np.fft.ifftn(rho * decomp._u0_hat) * scale_fwd
        total += float(np.sum(np.abs(g) ** 2 * wsq) * u0.cell_volume)
    return total / denom


def orthogonality_constant(decomp: PacketDecomposition, n_subsets: int = 6,
                           seed: int = 0) -> float:
    """Measured C in ||sum_{gamma in G} P_gamma u||_{L^inf L^2} <= C (sum ||L#_gamma f||^2)^{1/2}.

    The free evolution is unitary and shared by all packets, so the left side
    equals ||sum_{gamma in G} L_gamma u0||_2 at every time; the maximum ratio
    over seeded random subsets G (plus the full set) is returned.
    """
    rng = np.random.default_rng(seed)
    pts = decomp.phase_points
    if not pts:
        return 0.0
    # ||L#_gamma f||^2 grouped by frequency cell: one filtered field per cell,
    # then a quadrature against each memoized spatial window.
    u0 = decomp.u0
    scale_fwd = (u0.points / u0.box_length) ** u0.dim
    cell_fields: dict = {}
    wsq_memo: dict = {}
    sharp_sq = np.zeros(len(pts))
    for i, g in enumerate(pts):
        if g.xi0 not in cell_fields:
            rho = _freq_window_sharp(u0, g)
            cell_fields[g.xi0] = np.abs(
                np.fft.ifftn(rho * decomp._u0_hat) * scale_fwd
            ) ** 2
        if g.x0 not in wsq_memo:
            wsq_memo[g.x0] = np.abs(_spatial_window_sharp(u0, g)) ** 2
        sharp_sq[i] = float(np.sum(wsq_memo[g.x0] * cell_fields[g.xi0]) * u0.cell_volume)
    best = 0.0
    subsets = [np.arange(len(pts))]
    for _ in range(n_subsets):
        k = max(1, len(pts) // 2)
        subsets.append(rng.choice(len(pts), size=k, replace=False))
    for idx in subsets:
        rhs = math.sqrt(float(sharp_sq[idx].sum()))
        if rhs == 0.0:
            continue
        lhs = decomp.sum_localized([pts[i] for i in idx]).norm_l2()
        best = max(best, lhs / rhs)
    return best


# -- concentration ------------------------------------------------------------


def concentration_profile(packet: Packet, tube: Tube, radii, *, n_times: int = 5,
                          max_samples_per_axis: int = 256):
    """Shell suprema sup {|packet(t,x)| : dist((t,x), T) in [r, 2r]} over Q_R.

    Q_R is the time slab [R/2, R] over the spatial box of half-width R around
    the box center.  Returns (radii, sups); shells that contain no sampled
    point keep a 0 entry.
    """
    R = tube.scale
    if abs(packet.gamma.scale - R) > 1e-9 * R:
        raise ValueError("packet and tube scales differ")
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 2:
        raise ValueError("radii must be a sequence of at least two values")
    if np.any(np.diff(radii) <= 0.0):
        raise ValueError("radii must be strictly increasing")
    if radii[0] < math.sqrt(R) - 1e-9:
        raise ValueError("radii must start at or above sqrt(scale)")
    f = packet.field
    L, N, n = f.box_length, f.points, f.dim
    for t_end in (tube.t_min, tube.t_max):
        c = tube.core(np.asarray(t_end))
        if np.any(c - tube.radius < 0.0) or np.any(c + tube.radius > L):
            raise ValueError(
                "tube exits the periodic box within [R/2, R]; enlarge the box"
            )
    stride = max(1, N // max_samples_per_axis)
    axis = f.coord_axis()[::stride]
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    X = np.stack(mesh, axis=-1)
    in_q = np.all(np.abs(X - L / 2.0) <= R, axis=-1)
    hat0 = f.fourier()
    phi = packet.model.value(f.freq_grid())
    slicer = (slice(None, None, stride),) * n
    sups = np.zeros(radii.size)
    for t in np.linspace(R / 2.0, R, n_times):
        samples = np.fft.ifftn(np.exp(1j * t * phi) * hat0) * (N / L) ** n
        amp = np.abs(samples[slicer])
        dist = tube.distance(np.full(X.shape[:-1], t), X)
        for i, r in enumerate(radii):
            sel = in_q & (dist >= r) & (dist <= 2.0 * r)
            if sel.any():
                sups[i] = max(sups[i], float(amp[sel].max()))
    return radii, sups


def tube_amplitude(packet: Packet, tube: Tube, *, n_times: int = 5,
                   max_samples_per_axis: int = 256) -> float:
    """Supremum of |packet(t, x)| over sampled points of the tube itself.

    The natural comparison scale is R^{-n/4} ||L#_gamma f||: a packet of
    height A and cross-section volume R^{n/2} has L^2 norm about A R^{n/4}.
    """
    R = tube.scale
    if abs(packet.gamma.scale - R) > 1e-9 * R:
        raise ValueError("packet and tube scales differ")
    f = packet.field
    L, N, n = f.box_length, f.points, f.dim
    stride = max(1, N // max_samples_per_axis)
    axis = f.coord_axis()[::stride]
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    X = np.stack(mesh, axis=-1)
    hat0 = f.fourier()
    phi = packet.model.value(f.freq_grid())
    slicer = (slice(None, None, stride),) * n
    best = 0.0
    for t in np.linspace(R / 2.0, R, n_times):
        inside = tube.contains(np.full(X.shape[:-1], t), X)
        if not inside.any():
            continue
        samples = np.fft.ifftn(np.exp(1j * t * phi) * hat0) * (N / L) ** n
        best = max(best, float(np.abs(samples[slicer])[inside].max()))
    return best


def concentration_slope(packet: Packet, tube: Tube, radii, *, n_times: int = 5,
                        max_samples_per_axis: int = 256) -> float:
    """Fitted log-log slope of the shell suprema versus shell radius.

    Shells with zero amplitude (empty or fully decayed) are excluded from the
    fit; at least two populated shells are required.
    """
    radii, sups = concentration_profile(
        packet, tube, radii, n_times=n_times, max_samples_per_axis=max_samples_per_axis
    )
    keep = sups > 0.0
    if keep.sum() < 2:
        raise ValueError("fewer than two shells have nonzero amplitude; cannot fit")
    slope, _, _ = fit_loglog_slope(radii[keep], sups[keep])
    return slope


# -- tube/cube/ball incidence --------------------------------------------------


def _tube_cube_hits(tube: Tube, cubes: np.ndarray, enlarged: float) -> np.ndarray:
    """Exact 'T intersects the enlarged cube' decisions for all cubes at once.

    The enlarged cube has half-width `enlarged` in every space-time axis.  A
    tube meets it iff for some t in [R/2, R] within the cube's time window the
    core is within sqrt(R) (Euclidean) of the spatial box; the squared box
    distance is convex in t, minimized by two-sided ternary search.
    """
    R = tube.scale
    ct = cubes[:, 0]
    cx = cubes[:, 1:]
    lo = np.maximum(R / 2.0, ct - enlarged)
    hi = np.minimum(R, ct + enlarged)
    feasible = lo <= hi
    if not feasible.any():
        return np.zeros(len(cubes), dtype=bool)
    x0 = np.asarray(tube.gamma.x0)
    v = np.asarray(tube.velocity)

    # bounding-box prefilter: per-axis distance over the feasible window
    idx = np.nonzero(feasible)[0]
    a = x0 + lo[idx, None] * v
    b = x0 + hi[idx, None] * v
    seg_lo = np.minimum(a, b)
    seg_hi = np.maximum(a, b)
    gap = np.maximum(seg_lo - (cx[idx] + enlarged), (cx[idx] - enlarged) - seg_hi)
    near = np.all(gap <= tube.radius + 1e-9, axis=-1)
    idx = idx[near]
    hits = np.zeros(len(cubes), dtype=bool)
    if idx.size == 0:
        return hits

    tlo = lo[idx].copy()
    thi = hi[idx].copy()
    boxes = cx[idx]

    def g(s):
        core = x0 + s[:, None] * v
        d = np.maximum(0.0, np.abs(core - boxes) - enlarged)
        return np.sum(d * d, axis=-1)

    for _ in range(90):
        m1 = tlo + (thi - tlo) / 3.0
        m2 = thi - (thi - tlo) / 3.0
        g1, g2 = g(m1), g(m2)
        tlo = np.where(g1 >= g2, m1, tlo)
        thi = np.where(g1 <= g2, m2, thi)
    best = g(0.5 * (tlo + thi))
    hits[idx] = best <= tube.scale + 1e-9 * tube.scale
    return hits


def _dyadic_floor(counts: np.ndarray) -> np.ndarray:
    out = np.zeros(counts.shape, dtype=np.int64)
    pos = counts > 0
    out[pos] = 2 ** np.floor(np.log2(counts[pos])).astype(np.int64)
    return out


@dataclasses.dataclass(frozen=True, eq=False)
class IncidenceTable:
    """Tube/cube incidence counts with dyadic classes and the ball relation.

    Every count is reproducible from the stored tubes and cubes; `verify()`
    recomputes the hit matrices from scratch and compares exactly.
    """

    scale: float
    delta: float
    cube_radius: float
    enlarged_radius: float
    cubes: np.ndarray
    tubes1: tuple
    tubes2: tuple
    hits1: np.ndarray
    hits2: np.ndarray

    @property
    def counts1(self) -> np.ndarray:
        return self.hits1.sum(axis=0)

    @property
    def counts2(self) -> np.ndarray:
        return self.hits2.sum(axis=0)

    def _hits(self, j: int) -> np.ndarray:
        if j not in (1, 2):
            raise ValueError("family index must be 1 or 2")
        return self.hits1 if j == 1 else self.hits2

    @functools.cached_property
    def cube_class(self) -> np.ndarray:
        """Per-cube dyadic pair (mu1, mu2); zeros where either count is 0."""
        mu1 = _dyadic_floor(self.counts1.astype(float))
        mu2 = _dyadic_floor(self.counts2.astype(float))
        both = (mu1 > 0) & (mu2 > 0)
        out = np.zeros((len(self.cubes), 2), dtype=np.int64)
        out[both, 0] = mu1[both]
        out[both, 1] = mu2[both]
        return out

    @functools.cached_property
    def class_keys(self) -> tuple:
        pairs = {(int(r[0]), int(r[1])) for r in self.cube_class if r[0] > 0}
        return tuple(sorted(pairs))

    def class_cubes(self, key) -> np.ndarray:
        """Indices of the cubes in the dyadic class (mu1, mu2)."""
        key = (int(key[0]), int(key[1]))
        return np.nonzero((self.cube_class[:, 0] == key[0])
                          & (self.cube_class[:, 1] == key[1]))[0]

    def lambda_counts(self, j: int, key) -> np.ndarray:
        """Per-tube count of class-(mu1, mu2) cubes the tube meets."""
        cubes = self.class_cubes(key)
        return self._hits(j)[:, cubes].sum(axis=1)

    def tube_classes(self, j: int) -> dict:
        """Mapping (lambda, mu1, mu2) -> tuple of tube indices of family j."""
        out: dict = {}
        for key in self.class_keys:
            lam = self.lambda_counts(j, key)
            dy = _dyadic_floor(lam.astype(float))
            for lv in sorted({int(v) for v in dy[dy > 0]}):
                sel = tuple(int(i) for i in np.nonzero(dy == lv)[0])
                out[(lv, key[0], key[1])] = sel
        return out

    def unclassed(self, j: int) -> tuple:
        """Tubes of family j that meet no doubly-occupied cube."""
        covered = set()
        for members in self.tube_classes(j).values():
            covered.update(members)
        return tuple(i for i in range(len(self._hits(j))) if i not in covered)

    @functools.cached_property
    def dyadic_class_count(self) -> int:
        """Product over the (lambda, mu1, mu2) axes of the dyadic level counts."""
        max_mu1 = max((k[0] for k in self.class_keys), default=1)
        max_mu2 = max((k[1] for k in self.class_keys), default=1)
        max_lam = 1
        for j in (1, 2):
            for (lv, _, _) in self.tube_classes(j):
                max_lam = max(max_lam, lv)
        levels = lambda m: int(math.floor(math.log2(m))) + 1
        return levels(max_lam) * levels(max_mu1) * levels(max_mu2)

    # -- ball relation (built lazily; bush counting never touches it) --------

    @property
    def ball_radius(self) -> float:
        return self.scale ** (1.0 - self.delta)

    @functools.cached_property
    def balls(self) -> np.ndarray:
        """Finitely-overlapping cover of the cube grid by balls of radius
        R^{1-delta}: rows are centers (t, x...) on a grid of spacing equal
        to the radius (cell half-diagonal < radius, so every point and in
        particular every cube is met by some ball)."""
        lo = self.cubes.min(axis=0) - self.cube_radius
        hi = self.cubes.max(axis=0) + self.cube_radius
        rad = self.ball_radius
        axes = [np.arange(lo[a] + rad / 2.0, hi[a] + rad / 2.0, rad)
                for a in range(self.cubes.shape[1])]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)

    @functools.cached_property
    def _cube_meets_ball(self) -> np.ndarray:
        """Boolean (n_balls, n_cubes): cube (sup-ball) intersects the ball.

        Exact: the Euclidean distance from the ball center to the axis-aligned
        box is compared with the ball radius.
        """
        out = np.zeros((len(self.balls), len(self.cubes)), dtype=bool)
        step = max(1, 10_000_000 // max(1, len(self.cubes)))
        for a in range(0, len(self.balls), step):
            gap = np.abs(self.balls[a:a + step, None, :] - self.cubes[None, :, :]) \
                - self.cube_radius
            d = np.sqrt(np.sum(np.maximum(0.0, gap) ** 2, axis=-1))
            out[a:a + step] = d <= self.ball_radius + 1e-9
        return out

    @functools.cached_property
    def _ball_order(self) -> np.ndarray:
        """Ball indices sorted lexicographically by center (tie policy)."""
        keys = [self.balls[:, a] for a in range(self.balls.shape[1])][::-1]
        return np.lexsort(tuple(keys))

    def best_ball(self, j: int, tube_index: int, key) -> int:
        """The ball maximizing the count of class cubes that both meet the
        tube's enlarged-cube test and intersect the ball (ties broken by
        lexicographically smallest center)."""
        cubes = self.class_cubes(key)
        hit = self._hits(j)[tube_index, cubes]
        mask = cubes[hit]
        if mask.size == 0:
            raise ValueError("tube meets no cube of this class")
        counts = self._cube_meets_ball[:, mask].sum(axis=1)
        order = self._ball_order
        return int(order[np.argmax(counts[order])])

    def ball_capture(self, j: int, tube_index: int, key) -> int:
        """Class-cube count captured by the maximizing ball."""
        cubes = self.class_cubes(key)
        hit = self._hits(j)[tube_index, cubes]
        mask = cubes[hit]
        if mask.size == 0:
            return 0
        return int(self._cube_meets_ball[self.best_ball(j, tube_index, key), mask].sum())

    def relation_pairs(self, j: int) -> tuple:
        """All (tube_index, ball_index) pairs gamma ~ B of family j.

        gamma ~ B iff B lies inside the 10-fold dilate of some maximizing
        ball B(gamma, class) over the classes gamma belongs to.
        """
        pairs = set()
        centers = self.balls
        rad = self.ball_radius
        for key in self.class_keys:
            lam = self.lambda_counts(j, key)
            for ti in np.nonzero(lam > 0)[0]:
                bi = self.best_ball(j, int(ti), key)
                d = np.sqrt(np.sum((centers - centers[bi]) ** 2, axis=-1))
                related = np.nonzero(d + rad <= 10.0 * rad + 1e-9)[0]
                pairs.update((int(ti), int(b)) for b in related)
        return tuple(sorted(pairs))

    def relation_ball_count(self, j: int, tube_index: int) -> int:
        return sum(1 for (ti, _) in self.relation_pairs(j) if ti == tube_index)

    # -- persistence / verification ------------------------------------------

    def verify(self) -> bool:
        """Recompute both hit matrices from the stored tubes and cubes."""
        for tubes, hits in ((self.tubes1, self.hits1), (self.tubes2, self.hits2)):
            for i, tube in enumerate(tubes):
                fresh = _tube_cube_hits(tube, self.cubes, self.enlarged_radius)
                if not np.array_equal(fresh, hits[i]):
                    return False
        return True

    def to_json(self) -> str:
        def tube_row(t: Tube):
            return {"x0": list(t.gamma.x0), "xi0": list(t.gamma.xi0),
                    "scale": t.gamma.scale, "velocity": list(t.velocity)}

        payload = {
            "scale": self.scale,
            "delta": self.delta,
            "cube_radius": self.cube_radius,
            "enlarged_radius": self.enlarged_radius,
            "cubes": self.cubes.tolist(),
            "tubes1": [tube_row(t) for t in self.tubes1],
            "tubes2": [tube_row(t) for t in self.tubes2],
            "hits1": [np.nonzero(row)[0].tolist() for row in self.hits1],
            "hits2": [np.nonzero(row)[0].tolist() for row in self.hits2],
            "counts1": self.counts1.tolist(),
            "counts2": self.counts2.tolist(),
            "relation_pairs": {"1": list(self.relation_pairs(1)),
                               "2": list(self.relation_pairs(2))},
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "IncidenceTable":
        d = json.loads(text)
        cubes = np.asarray(d["cubes"], dtype=float)

        def tubes_of(rows):
            out = []
            for r in rows:
                gamma = PhasePoint(tuple(r["x0"]), tuple(r["xi0"]), r["scale"])
                out.append(Tube(gamma, tuple(r["velocity"])))
            return tuple(out)

        def hits_of(rows):
            h = np.zeros((len(rows), len(cubes)), dtype=bool)
            for i, cols in enumerate(rows):
                h[i, cols] = True
            return h

        return cls(
            scale=float(d["scale"]),
            delta=float(d["delta"]),
            cube_radius=float(d["cube_radius"]),
            enlarged_radius=float(d["enlarged_radius"]),
            cubes=cubes,
            tubes1=tubes_of(d["tubes1"]),
            tubes2=tubes_of(d["tubes2"]),
            hits1=hits_of(d["hits1"]),
            hits2=hits_of(d["hits2"]),
        )


def tube_incidence_table(tubes1, tubes2, scale: float, delta: float, *,
                         center=None) -> IncidenceTable:
    """Build the incidence table of two tube families against the cube grid.

    The grid of sqrt(R)-cubes covers the slab [R/2, R] x {|x - center| <= R};
    `center` defaults to the midrange of the tube core endpoints.  Counts use
    the R^delta-enlarged cubes (half-width R^{delta + 1/2}).
    """
    tubes1 = tuple(tubes1)
    tubes2 = tuple(tubes2)
    R = float(scale)
    for t in tubes1 + tubes2:
        if abs(t.scale - R) > 1e-9 * R:
            raise ValueError("all tubes must share the table scale")
    any_tube = (tubes1 + tubes2)[0] if (tubes1 or tubes2) else None
    if any_tube is None:
        raise ValueError("at least one tube is required")
    n = any_tube.gamma.dim
    rho_c = math.sqrt(R)
    rho_e = R ** (delta + 0.5)

    if center is None:
        ends = []
        for t in tubes1 + tubes2:
            ends.append(t.core(np.asarray(t.t_min)))
            ends.append(t.core(np.asarray(t.t_max)))
        ends = np.asarray(ends)
        center = 0.5 * (ends.min(axis=0) + ends.max(axis=0))
    center = np.asarray(center, dtype=float)
    if center.shape != (n,):
        raise ValueError(f"center must have shape ({n},)")

    n_t = max(1, math.ceil((R / 2.0) / (2.0 * rho_c)))
    t_centers = R / 2.0 + rho_c + 2.0 * rho_c * np.arange(n_t)
    n_s = max(1, math.ceil(R / (2.0 * rho_c)))
    offsets = 2.0 * rho_c * (np.arange(-n_s, n_s) + 0.5)
    axes = [t_centers] + [center[a] + offsets for a in range(n)]
    grid = np.meshgrid(*axes, indexing="ij")
    cubes = np.stack([g.ravel() for g in grid], axis=-1)

    hits1 = np.stack([_tube_cube_hits(t, cubes, rho_e) for t in tubes1]) \
        if tubes1 else np.zeros((0, len(cubes)), dtype=bool)
    hits2 = np.stack([_tube_cube_hits(t, cubes, rho_e) for t in tubes2]) \
        if tubes2 else np.zeros((0, len(cubes)), dtype=bool)
    return IncidenceTable(
        scale=R, delta=float(delta), cube_radius=rho_c, enlarged_radius=rho_e,
        cubes=cubes, tubes1=tubes1, tubes2=tubes2, hits1=hits1, hits2=hits2,
    )


def bush_count(table: IncidenceTable, q0: int, h, gamma2: PhasePoint,
               model1: PhaseModel, model2: PhaseModel, *,
               proximity: float = 3.0) -> int:
    """Count the bush at q0: pairs (q, gamma1) with both tubes meeting R^delta q.

    gamma1 ranges over the family-1 tubes through q0 whose frequency sits
    within proximity * R^{-1/2} of the resonance surface for the shift h
    (checked by walking onto the surface with sigma_solve); q ranges over
    cubes at distance >= R^{1-delta}/4 from q0.  The partner tube is built
    from gamma2 under model2 and tested against the same cubes exactly.
    """
    R = table.scale
    if not (0 <= q0 < len(table.cubes)):
        raise ValueError("q0 must index a cube of the table")
    through = np.nonzero(table.hits1[:, q0])[0]
    members = []
    for ti in through:
        xi = np.asarray(table.tubes1[ti].gamma.xi0, dtype=float)
        try:
            landing = sigma_solve(model1, model2, h, xi)
        except ValueError:
            continue
        if np.linalg.norm(landing - xi) <= proximity / math.sqrt(R):
            members.append(ti)
    if not members:
        return 0

    tube2 = Tube.from_phase_point(gamma2, model2)
    hits2 = _tube_cube_hits(tube2, table.cubes, table.enlarged_radius)
    d = np.sqrt(np.sum((table.cubes - table.cubes[q0]) ** 2, axis=-1))
    far = d >= R ** (1.0 - table.delta) / 4.0
    eligible = hits2 & far
    return int(sum(int((table.hits1[ti] & eligible).sum()) for ti in members))
