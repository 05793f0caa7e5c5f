"""Periodic-lattice spectral engine.

GridField stores complex samples on [0, L)^n with a power-of-two lattice;
SpaceTimeField stacks snapshots on a uniform time grid.  The Fourier
convention is hat(k) = (L/N)^n * FFT, so the discrete Parseval identity
sum |f|^2 (L/N)^n = sum |hat|^2 / L^n holds exactly.

Frequency multipliers whose symbol is radial evaluate the radius after
binning it to the nearest lattice shell (width one frequency cell).  The
angular projections use the same binning, so radial multipliers and angular
projections commute exactly rather than approximately.
"""

from __future__ import annotations

import dataclasses
import math
import struct

import numpy as np

from .phases import FreqRegion, PhaseModel
from .util import fit_loglog_slope, make_rng
from .windows import chi, hat, rho_dyadic

_MAGIC = b"RLABFLD1"


def _check_points(points: int) -> None:
    if points < 2 or points & (points - 1):
        raise ValueError("points_per_axis must be a power of two >= 2")


@dataclasses.dataclass(frozen=True)
class GridField:
    """Complex samples on the periodic box [0, L)^n."""

    dim: int
    box_length: float
    points: int
    samples: np.ndarray

    def __post_init__(self):
        _check_points(self.points)
        expected = (self.points,) * self.dim
        if self.samples.shape != expected:
            raise ValueError(f"samples shape {self.samples.shape} != {expected}")

    # -- constructors --------------------------------------------------------

    @classmethod
    def from_samples(cls, samples, box_length: float) -> "GridField":
        samples = np.ascontiguousarray(samples, dtype=np.complex128)
        return cls(samples.ndim, float(box_length), samples.shape[0], samples)

    @classmethod
    def from_fourier(cls, hat_values, box_length: float) -> "GridField":
        hat_values = np.asarray(hat_values, dtype=np.complex128)
        n = hat_values.ndim
        N = hat_values.shape[0]
        L = float(box_length)
        samples = np.fft.ifftn(hat_values) * (N / L) ** n
        return cls(n, L, N, samples)

    # -- geometry ------------------------------------------------------------

    @property
    def cell_volume(self) -> float:
        return (self.box_length / self.points) ** self.dim

    def coord_axis(self) -> np.ndarray:
        return np.arange(self.points) * (self.box_length / self.points)

    def freq_axis(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.points, d=self.box_length / self.points)

    def freq_grid(self) -> np.ndarray:
        """(N, ..., N, n) array of lattice frequencies."""
        ax = self.freq_axis()
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    # -- transforms and norms --------------------------------------------------

    def fourier(self) -> np.ndarray:
        return np.fft.fftn(self.samples) * (self.box_length / self.points) ** self.dim

    def with_samples(self, samples) -> "GridField":
        return GridField.from_samples(samples, self.box_length)

    def norm_l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.cell_volume))

    def norm_sup(self) -> float:
        return float(np.max(np.abs(self.samples)))


@dataclasses.dataclass(frozen=True)
class SpaceTimeField:
    """Snapshots u(t_k, x) on a uniform time grid over the same spatial box."""

    dim: int
    box_length: float
    points: int
    time_samples: int
    time_step: float
    t0: float
    samples: np.ndarray  # shape (time_samples,) + (points,)*dim

    def __post_init__(self):
        _check_points(self.points)
        expected = (self.time_samples,) + (self.points,) * self.dim
        if self.samples.shape != expected:
            raise ValueError(f"samples shape {self.samples.shape} != {expected}")
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")

    @property
    def duration(self) -> float:
        return self.time_samples * self.time_step

    @property
    def cell_volume(self) -> float:
        return (self.box_length / self.points) ** self.dim

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.time_samples) * self.time_step

    def slice(self, k: int) -> GridField:
        return GridField.from_samples(self.samples[k], self.box_length)

    def freq_axis(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.points, d=self.box_length / self.points)

    def tau_axis(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.time_samples, d=self.time_step)

    def with_samples(self, samples) -> "SpaceTimeField":
        samples = np.ascontiguousarray(samples, dtype=np.complex128)
        return dataclasses.replace(self, samples=samples)


def evolve(f0: GridField, model: PhaseModel, t0: float, dt: float, nt: int) -> SpaceTimeField:
    """Stack e^{i t Phi} f0 over the time grid t0 + k dt."""
    hat0 = f0.fourier()
    phase = model.value(f0.freq_grid())
    out = np.empty((nt,) + hat0.shape, dtype=np.complex128)
    scale = (f0.points / f0.box_length) ** f0.dim
    for k in range(nt):
        t = t0 + k * dt
        out[k] = np.fft.ifftn(np.exp(1j * t * phase) * hat0) * scale
    return SpaceTimeField(f0.dim, f0.box_length, f0.points, nt, float(dt), float(t0), out)


# -- free propagation ---------------------------------------------------------


def propagate(f: GridField, model: PhaseModel, t: float) -> GridField:
    """Apply the free evolution e^{i t Phi(-i grad)} on the lattice."""
    xi = f.freq_grid()
    phase = model.value(xi)
    return GridField.from_fourier(np.exp(1j * float(t) * phase) * f.fourier(), f.box_length)


# -- multipliers ---------------------------------------------------------------

MULTIPLIER_KINDS = ("dyadic", "cube", "cap", "modulation", "sharp")


@dataclasses.dataclass(frozen=True)
class MultiplierSpec:
    """A scalar Fourier multiplier.

    kinds: "dyadic" (radial ring at scale lam), "cube" (product cutoff on a
    cube), "cap" (0-homogeneous angular window), "sharp" (indicator of a
    FreqRegion), "modulation" (space-time cutoff at distance ~d from the
    characteristic surface tau + sign <xi>_mass = 0; low=True keeps
    |tau + sign <xi>_mass| <~ d instead of ~ d).
    """

    kind: str
    lam: float = 0.0
    cube_center: tuple = ()
    cube_side: float = 0.0
    cap_axis: tuple = ()
    cap_width: float = 0.0
    d: float = 0.0
    sign: int = 1
    mass: float = 1.0
    low: bool = False
    window: bool = True
    region: FreqRegion | None = None

    def __post_init__(self):
        if self.kind not in MULTIPLIER_KINDS:
            raise ValueError(f"unknown multiplier kind {self.kind!r}")

    @classmethod
    def dyadic(cls, lam: float) -> "MultiplierSpec":
        if lam <= 0:
            raise ValueError("dyadic scale must be positive")
        return cls("dyadic", lam=float(lam))

    @classmethod
    def cube(cls, center, side: float) -> "MultiplierSpec":
        if side <= 0:
            raise ValueError("cube side must be positive")
        return cls("cube", cube_center=tuple(float(c) for c in center), cube_side=float(side))

    @classmethod
    def cap(cls, axis, width: float) -> "MultiplierSpec":
        axis = np.asarray(axis, dtype=float)
        nrm = np.linalg.norm(axis)
        if nrm == 0 or width <= 0:
            raise ValueError("cap needs a nonzero axis and positive width")
        return cls("cap", cap_axis=tuple(axis / nrm), cap_width=float(width))

    @classmethod
    def modulation(
        cls, d: float, sign: int = 1, mass: float = 1.0, low: bool = False, window: bool = True
    ):
        if d <= 0:
            raise ValueError("modulation scale d must be positive")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        return cls("modulation", d=float(d), sign=sign, mass=float(mass), low=low, window=window)

    @classmethod
    def sharp(cls, region: FreqRegion) -> "MultiplierSpec":
        return cls("sharp", region=region)

    # --

    def spatial_symbol(self, xi: np.ndarray) -> np.ndarray:
        """Evaluate the symbol on frequencies xi (..., n)."""
        if self.kind == "modulation":
            raise TypeError("modulation cutoffs act on SpaceTimeField, not GridField")
        if self.kind == "dyadic":
            r = _binned_radius(xi)
            return rho_dyadic(r / self.lam)
        if self.kind == "cube":
            c = np.asarray(self.cube_center)
            vals = chi(2.0 * (xi - c) / self.cube_side)
            return np.prod(vals, axis=-1)
        if self.kind == "cap":
            return _cap_symbol(xi, np.asarray(self.cap_axis), self.cap_width)
        return self.region.contains(xi).astype(float)


def binned_radius(xi: np.ndarray) -> np.ndarray:
    """Radius snapped to the nearest lattice shell (unit = one frequency cell).

    The lattice spacing is recovered from the frequency grid itself: the
    smallest positive axis frequency.  "Radial" on the lattice means
    "constant on these shells"; radial multipliers evaluate here so they
    commute exactly with the angular projections, which bin the same way.
    """
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    pos = xi[..., 0][np.abs(xi[..., 0]) > 0]
    if pos.size == 0:
        return r
    dxi = float(np.min(np.abs(pos)))
    return np.round(r / dxi) * dxi


_binned_radius = binned_radius


def _cap_symbol(xi: np.ndarray, axis: np.ndarray, width: float) -> np.ndarray:
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    safe = np.where(r == 0, 1.0, r)
    cosang = np.clip(np.sum(xi * axis, axis=-1) / safe, -1.0, 1.0)
    ang = np.arccos(cosang)
    out = hat(ang / width)
    return np.where(r == 0, 0.0, out)


def angular_cap_family(n_caps: int) -> list[MultiplierSpec]:
    """n_caps planar caps whose symbols sum to 1 away from xi = 0."""
    if n_caps < 3:
        raise ValueError("need at least 3 caps to cover the circle")
    width = 2.0 * math.pi / n_caps
    out = []
    for k in range(n_caps):
        th = k * width
        out.append(MultiplierSpec.cap((math.cos(th), math.sin(th)), width))
    return out


def _cap_family_symbol_sum(xi: np.ndarray, n_caps: int) -> np.ndarray:
    # the planar family tiles angles with unit-overlap hats, so the sum
    # telescopes to 1; kept for diagnostics
    total = np.zeros(xi.shape[:-1])
    for spec in angular_cap_family(n_caps):
        total += spec.spatial_symbol(xi)
    return total


def apply_multiplier(f, m: MultiplierSpec):
    """Fourier-side pointwise multiply; returns the same field type."""
    if isinstance(f, GridField):
        sym = m.spatial_symbol(f.freq_grid())
        return GridField.from_fourier(sym * f.fourier(), f.box_length)
    if not isinstance(f, SpaceTimeField):
        raise TypeError("apply_multiplier expects GridField or SpaceTimeField")
    if m.kind != "modulation":
        # purely spatial: act slice by slice
        out = np.empty_like(f.samples)
        xi = GridField.from_samples(f.samples[0], f.box_length).freq_grid()
        sym = m.spatial_symbol(xi)
        scale = (f.points / f.box_length) ** f.dim
        for k in range(f.time_samples):
            hat_k = np.fft.fftn(f.samples[k]) * (f.box_length / f.points) ** f.dim
            out[k] = np.fft.ifftn(sym * hat_k) * scale
        return f.with_samples(out)
    # modulation cutoff: (optional) smooth time window, then the full
    # space-time transform.  Comparisons belong against the windowed field
    # (time_windowed), not the raw one.
    tau = f.tau_axis()
    xi_ax = f.freq_axis()
    mesh = np.meshgrid(*([xi_ax] * f.dim), indexing="ij")
    r2 = np.zeros(mesh[0].shape)
    for g in mesh:
        r2 += g * g
    bracket = np.sqrt(m.mass**2 + r2)
    arg = (tau.reshape((-1,) + (1,) * f.dim) + m.sign * bracket[None]) / m.d
    sym = chi(arg) if m.low else rho_dyadic(arg)
    samples = time_windowed(f).samples if m.window else f.samples
    big = np.fft.fftn(samples)
    return f.with_samples(np.fft.ifftn(sym * big))


def hann_weights(nt: int) -> np.ndarray:
    k = np.arange(nt)
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * k / nt)


def time_windowed(u: SpaceTimeField) -> SpaceTimeField:
    """The field multiplied by the periodic Hann window along time.

    Modulation cutoffs apply this window before the time transform to keep
    spectral leakage below the measurement tolerances, so 'identity' for them
    means reproducing the windowed field.
    """
    w = hann_weights(u.time_samples).reshape((-1,) + (1,) * u.dim)
    return u.with_samples(u.samples * w)


def windowing_loss(u: SpaceTimeField) -> float:
    """L^2_{t,x} mass fraction retained by the Hann window (the loss factor)."""
    denom = spacetime_norm(u, 2, 2)
    if denom == 0:
        return 0.0
    return spacetime_norm(time_windowed(u), 2, 2) / denom


# -- angular projections -------------------------------------------------------


def _sph_harm(m_order, ell, phi, theta):
    """Complex spherical harmonic Y_ell^m(theta: polar, phi: azimuth)."""
    try:
        from scipy.special import sph_harm_y

        return sph_harm_y(ell, m_order, theta, phi)
    except ImportError:
        from scipy.special import sph_harm

        return sph_harm(m_order, ell, phi, theta)


def _degree_weight(ell: np.ndarray, N: int) -> np.ndarray:
    """H_N weight on angular degree ell: chi(ell) for N=1, ring at N for N>=2.

    Over the dyadic family {1, 2, 4, ...} the weights telescope to 1.
    """
    ell = np.asarray(ell, dtype=float)
    if N == 1:
        return chi(ell)
    return rho_dyadic(ell / N)


def angular_project(f: GridField, N: int, L_max: int = 64) -> GridField:
    """Keep the angular-degree band at dyadic scale N on every radial shell.

    Shells are lattice bins of width one frequency cell; each shell's values
    are least-squares expanded in circular (n=2) or spherical (n=3) harmonics
    up to the shell-supported degree, then reweighted by the degree window.
    """
    if f.dim not in (2, 3):
        raise ValueError("angular_project needs dim 2 or 3")
    if N < 1 or (N & (N - 1)):
        raise ValueError("N must be a dyadic integer >= 1")
    if L_max < 2 * N:
        raise ValueError(
            f"L_max={L_max} truncates the degree window [N/2, 2N] for N={N}; "
            f"need L_max >= {2 * N}"
        )
    hat_vals = f.fourier()
    xi = f.freq_grid()
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    dxi = 2.0 * math.pi / f.box_length
    shell = np.round(r / dxi).astype(int)
    out = np.zeros_like(hat_vals)
    flat_hat = hat_vals.reshape(-1)
    flat_shell = shell.reshape(-1)
    flat_xi = xi.reshape(-1, f.dim)
    flat_out = out.reshape(-1)
    tiny = 1e-15 * (np.max(np.abs(flat_hat)) or 1.0)
    for s in np.unique(flat_shell):
        idx = np.nonzero(flat_shell == s)[0]
        vals = flat_hat[idx]
        if np.max(np.abs(vals)) <= tiny:
            continue
        if s == 0:
            flat_out[idx] = vals * _degree_weight(np.array([0]), N)[0]
            continue
        pts = flat_xi[idx]
        if f.dim == 2:
            flat_out[idx] = _project_shell_2d(pts, vals, N, L_max)
        else:
            flat_out[idx] = _project_shell_3d(pts, vals, N, L_max)
    return GridField.from_fourier(out, f.box_length)


def _project_shell_2d(pts, vals, N, L_max):
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    deg = min(L_max, (len(vals) - 1) // 2)
    ells = np.arange(-deg, deg + 1)
    basis = np.exp(1j * theta[:, None] * ells[None, :])
    coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    w = _degree_weight(np.abs(ells), N)
    return basis @ (coef * w)


def _project_shell_3d(pts, vals, N, L_max):
    r = np.linalg.norm(pts, axis=-1)
    theta = np.arccos(np.clip(pts[:, 2] / r, -1.0, 1.0))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    deg = min(L_max, max(int(math.isqrt(len(vals))) - 1, 0))
    cols = []
    ells = []
    for ell in range(deg + 1):
        for m_order in range(-ell, ell + 1):
            cols.append(_sph_harm(m_order, ell, phi, theta))
            ells.append(ell)
    basis = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    w = _degree_weight(np.asarray(ells), N)
    return basis @ (coef * w)


# -- mixed norms ----------------------------------------------------------------


def spacetime_norm(u: SpaceTimeField, a: float, b: float) -> float:
    """Riemann-sum L^a_t L^b_x norm; a and/or b may be math.inf (max)."""
    for e in (a, b):
        if not (e >= 1):
            raise ValueError("exponents must satisfy a, b >= 1")
    mags = np.abs(u.samples).reshape(u.time_samples, -1)
    if math.isinf(b):
        inner = np.max(mags, axis=1)
    else:
        inner = (np.sum(mags**b, axis=1) * u.cell_volume) ** (1.0 / b)
    if math.isinf(a):
        return float(np.max(inner))
    return float((np.sum(inner**a) * u.time_step) ** (1.0 / a))


# -- smoothed region data and random fields --------------------------------------


def region_window(region: FreqRegion, xi: np.ndarray) -> np.ndarray:
    """Smooth bump supported inside the region (plateau on its inner half)."""
    xi = np.asarray(xi, dtype=float)
    if region.shape == "ball":
        d = np.sqrt(np.sum((xi - np.asarray(region.center)) ** 2, axis=-1))
        return chi(2.0 * d / region.r_out)
    if region.shape == "annulus":
        r = np.sqrt(np.sum((xi - np.asarray(region.center)) ** 2, axis=-1))
        mid = 0.5 * (region.r_in + region.r_out)
        half = 0.5 * (region.r_out - region.r_in)
        return hat((r - mid) / half)
    if region.shape == "box":
        rel = (xi - np.asarray(region.center)) / np.asarray(region.half_sides)
        return np.prod(hat(rel), axis=-1)
    # cap sector: radial hat times angular hat
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    mid = 0.5 * (region.r_in + region.r_out)
    half = 0.5 * (region.r_out - region.r_in)
    radial = hat((r - mid) / half)
    safe = np.where(r == 0, 1.0, r)
    cosang = np.clip(np.sum(xi * np.asarray(region.axis), axis=-1) / safe, -1.0, 1.0)
    angular = hat(np.arccos(cosang) / region.half_angle)
    return np.where(r == 0, 0.0, radial * angular)


def band_data(region: FreqRegion, box_length: float, points: int) -> GridField:
    """Smoothed indicator of the region, as frequency data on the lattice."""
    probe = GridField.from_samples(
        np.zeros((points,) * region.dim, dtype=np.complex128), box_length
    )
    window = region_window(region, probe.freq_grid())
    return GridField.from_fourier(window.astype(np.complex128), box_length)


def random_band_field(
    region: FreqRegion, box_length: float, points: int, seed: int = 0
) -> GridField:
    """Gaussian random Fourier data windowed onto the region."""
    rng = make_rng(seed)
    shape = (points,) * region.dim
    probe = GridField.from_samples(np.zeros(shape, dtype=np.complex128), box_length)
    window = region_window(region, probe.freq_grid())
    noise = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return GridField.from_fourier(window * noise, box_length)


# -- dispersive decay ------------------------------------------------------------


def dispersive_decay_slope(
    model: PhaseModel,
    data_region: FreqRegion,
    times,
    box_length: float = 256.0,
    points: int = 256,
    safety: float = 0.75,
) -> float:
    """Least-squares slope of log sup_x |e^{i t Phi} f| against log t.

    f is the smoothed indicator of data_region.  Times must stay inside the
    aliasing-safe window: the fastest group velocity on the data support must
    not wrap the field around the torus.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 4:
        raise ValueError("need >= 4 times for a decay slope")
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    rng = make_rng(0)
    pts = data_region.sample(2000, rng)
    vmax = float(np.max(np.linalg.norm(model.gradient(pts), axis=-1)))
    t_safe = safety * 0.5 * box_length / max(vmax, 1e-12)
    if float(np.max(times)) > t_safe:
        raise ValueError(
            f"time {np.max(times):g} exceeds the aliasing-safe window; "
            f"max safe time is {t_safe:g} for box_length {box_length:g}"
        )
    f0 = band_data(data_region, box_length, points)
    hat0 = f0.fourier()
    phase = model.value(f0.freq_grid())
    scale = (points / box_length) ** data_region.dim
    sups = []
    for t in times:
        u = np.fft.ifftn(np.exp(1j * t * phase) * hat0) * scale
        sups.append(np.max(np.abs(u)))
    slope, _, _ = fit_loglog_slope(times, np.asarray(sups))
    return slope


# -- serialization ----------------------------------------------------------------


def save_field(f, path: str) -> None:
    """Binary container: magic, header, then little-endian complex64 payload."""
    if isinstance(f, GridField):
        nt, dt, t0 = 0, 0.0, 0.0
        payload = f.samples
    elif isinstance(f, SpaceTimeField):
        nt, dt, t0 = f.time_samples, f.time_step, f.t0
        payload = f.samples
    else:
        raise TypeError("save_field expects GridField or SpaceTimeField")
    header = struct.pack(
        "<8scIIdIdd", _MAGIC, b"L", f.dim, f.points, f.box_length, nt, dt, t0
    )
    data = payload.astype(np.complex64).tobytes(order="C")
    from .util import atomic_write_bytes

    atomic_write_bytes(path, header + data)


def load_field(path: str):
    with open(path, "rb") as fh:
        blob = fh.read()
    head_size = struct.calcsize("<8scIIdIdd")
    if len(blob) < head_size:
        raise ValueError("field file too short for its header")
    magic, endian, dim, points, L, nt, dt, t0 = struct.unpack("<8scIIdIdd", blob[:head_size])
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}; not a field container")
    if endian != b"L":
        raise ValueError("only little-endian payloads are supported")
    if dim not in (1, 2, 3):
        raise ValueError(f"bad dimension {dim}")
    count = points**dim * max(nt, 1)
    payload = np.frombuffer(blob[head_size:], dtype="<c8")
    if payload.size != count:
        raise ValueError(f"payload has {payload.size} samples; header promises {count}")
    arr = payload.astype(np.complex128)
    if nt == 0:
        return GridField.from_samples(arr.reshape((points,) * dim), L)
    return SpaceTimeField(
        dim, L, points, nt, dt, t0, np.ascontiguousarray(arr.reshape((nt,) + (points,) * dim))
    )
