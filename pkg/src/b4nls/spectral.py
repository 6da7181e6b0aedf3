"""Spectral fields and operator algebra on flat tori T^d.

Fields live on [0, 2pi)^d and are stored as coefficients against the
orthonormal exponential basis e_k(x) = exp(i k.x) / (2pi)^{d/2}, with the
frequency lattice {-N/2, ..., N/2-1}^d in ascending ("lattice") order.
With this normalization Parseval is exact: the L^2 norm of a field equals
the Euclidean norm of its coefficient array.

Everything downstream (time integrators, control operators, Gramians,
space-time norms) is built from the Fourier multipliers defined here:

    -Laplacian          |k|^2
    bi-Laplacian        |k|^4
    dispersion generator |k|^4 + beta |k|^2
    smoothing (1-Lap)^-m (1 + |k|^2)^-m

All operations are pure; fields are immutable value objects.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .regions import (
    FullRegion,
    Region,
    TWO_PI,
    inside_depth,
    min_feature_size,
    validate_region,
)

KIND_CODES = {"torus": 0, "sphere-arith": 1}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

SNAPSHOT_MAGIC = b"B4NLS1"


@dataclass(frozen=True)
class ManifoldSpec:
    """Discretized spectral description of the manifold.

    kind 'torus': d in {1, 2}, N even >= 8 modes per dimension.
    kind 'sphere-arith': d = 5, exact eigenvalue arithmetic only (no grid
    simulation); N is kept as a degree cutoff for bookkeeping.
    """

    kind: str
    d: int
    N: int
    beta: float

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if not math.isfinite(self.beta) or self.beta < 0.0:
            raise ValueError("beta must be finite and >= 0")
        if self.kind == "torus":
            if self.d not in (1, 2):
                raise ValueError("torus simulation supports d = 1 or 2")
            if self.N % 2 != 0 or self.N < 8:
                raise ValueError("N must be even and >= 8")
        else:
            if self.d != 5:
                raise ValueError("sphere-arith is the d = 5 eigenvalue model")
            if self.N < 1:
                raise ValueError("degree cutoff must be >= 1")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_modes(self) -> int:
        return self.N**self.d

    @property
    def cell_volume(self) -> float:
        """Quadrature weight of one collocation cell, (2pi/N)^d."""
        return (TWO_PI / self.N) ** self.d

    @cached_property
    def k1d(self) -> np.ndarray:
        """Per-dimension frequencies in lattice order: -N/2 ... N/2-1."""
        return np.arange(-(self.N // 2), self.N // 2)

    @cached_property
    def grid1d(self) -> np.ndarray:
        return TWO_PI * np.arange(self.N) / self.N

    @cached_property
    def k_sq(self) -> np.ndarray:
        """|k|^2 on the full lattice, shaped (N,)*d."""
        k = self.k1d.astype(float)
        if self.d == 1:
            return k**2
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return kx**2 + ky**2

    @cached_property
    def dispersion(self) -> np.ndarray:
        """Multiplier of the generator: |k|^4 + beta |k|^2."""
        return self.k_sq**2 + self.beta * self.k_sq

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: modes with every |k_i| <= N/3 are kept."""
        cut = self.N // 3
        keep = np.abs(self.k1d) <= cut
        if self.d == 1:
            return keep
        return np.logical_and.outer(keep, keep)

    def grid_points(self) -> np.ndarray:
        """Collocation points, shape (N,)*d + (d,)."""
        axes = [self.grid1d] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)


def make_torus(d: int, N: int, beta: float) -> ManifoldSpec:
    return ManifoldSpec(kind="torus", d=d, N=N, beta=beta)


def make_sphere_arith(beta: float, degree_cutoff: int = 8) -> ManifoldSpec:
    return ManifoldSpec(kind="sphere-arith", d=5, N=degree_cutoff, beta=beta)


@dataclass(frozen=True)
class SpectralField:
    """One complex field, stored spectrally. Coefficients are read-only."""

    spec: ManifoldSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.spec.shape:
            raise ValueError(f"coeffs shape {c.shape} != lattice {self.spec.shape}")
        if not np.all(np.isfinite(c.view(float))):
            raise ValueError("non-finite coefficient")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)


def field_from_coeffs(spec: ManifoldSpec, coeffs: np.ndarray) -> SpectralField:
    return SpectralField(spec, coeffs)


def zero_field(spec: ManifoldSpec) -> SpectralField:
    return SpectralField(spec, np.zeros(spec.shape, dtype=complex))


def _mode_index(spec: ManifoldSpec, k) -> tuple[int, ...]:
    ks = (k,) if np.isscalar(k) else tuple(k)
    if len(ks) != spec.d:
        raise ValueError(f"mode {k} has wrong dimension for d={spec.d}")
    idx = []
    for ki in ks:
        if not -(spec.N // 2) <= ki < spec.N // 2:
            raise ValueError(f"mode {k} outside the lattice")
        idx.append(int(ki) + spec.N // 2)
    return tuple(idx)


def basis_field(spec: ManifoldSpec, k, amplitude: complex = 1.0) -> SpectralField:
    """The basis exponential e_k (optionally scaled)."""
    c = np.zeros(spec.shape, dtype=complex)
    c[_mode_index(spec, k)] = amplitude
    return SpectralField(spec, c)


def mode_coefficient(u: SpectralField, k) -> complex:
    return complex(u.coeffs[_mode_index(u.spec, k)])


def random_field(
    spec: ManifoldSpec,
    rng: np.random.Generator,
    decay: float = 0.0,
    band: int | None = None,
) -> SpectralField:
    """Gaussian random field with coefficients ~ (1+|k|^2)^(-decay/2).

    band, if given, truncates the support to max_i |k_i| <= band.
    """
    re = rng.standard_normal(spec.shape)
    im = rng.standard_normal(spec.shape)
    c = (re + 1j * im) * (1.0 + spec.k_sq) ** (-decay / 2.0)
    if band is not None:
        keep1 = np.abs(spec.k1d) <= band
        mask = keep1 if spec.d == 1 else np.logical_and.outer(keep1, keep1)
        c = np.where(mask, c, 0.0)
    return SpectralField(spec, c)


# ---------------------------------------------------------------------------
# grid <-> spectral transforms
# ---------------------------------------------------------------------------

def to_grid(u: SpectralField) -> np.ndarray:
    """Values on the collocation grid x_j = 2pi j / N (complex array)."""
    spec = u.spec
    cf = np.fft.ifftshift(u.coeffs)
    return np.fft.ifftn(cf) * (spec.n_modes / TWO_PI ** (spec.d / 2.0))


def field_from_grid(spec: ManifoldSpec, values: np.ndarray) -> SpectralField:
    v = np.asarray(values, dtype=complex)
    if v.shape != spec.shape:
        raise ValueError("grid values have wrong shape")
    cf = np.fft.fftn(v) * (TWO_PI ** (spec.d / 2.0) / spec.n_modes)
    return SpectralField(spec, np.fft.fftshift(cf))


def grid_to_coeffs(spec: ManifoldSpec, values: np.ndarray) -> np.ndarray:
    """Raw-array version of field_from_grid (hot paths avoid the dataclass)."""
    cf = np.fft.fftn(values) * (TWO_PI ** (spec.d / 2.0) / spec.n_modes)
    return np.fft.fftshift(cf)


def coeffs_to_grid(spec: ManifoldSpec, coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(np.fft.ifftshift(coeffs)) * (
        spec.n_modes / TWO_PI ** (spec.d / 2.0)
    )


# ---------------------------------------------------------------------------
# norms and multipliers
# ---------------------------------------------------------------------------

def l2_norm(u: SpectralField) -> float:
    return float(np.linalg.norm(u.coeffs))


def l2_inner(u: SpectralField, v: SpectralField) -> complex:
    return complex(np.vdot(v.coeffs, u.coeffs))  # <u, v> = sum u conj(v)


def sobolev_weights(spec: ManifoldSpec, s: float) -> np.ndarray:
    return (1.0 + spec.k_sq) ** s


def sobolev_norm(u: SpectralField, s: float) -> float:
    """H^s norm ( sum_k (1+|k|^2)^s |c_k|^2 )^{1/2}; s = 0 is Parseval."""
    if not math.isfinite(s):
        raise ValueError("s must be finite")
    w = sobolev_weights(u.spec, s)
    return float(math.sqrt(np.sum(w * np.abs(u.coeffs) ** 2)))


def normalize_sobolev(u: SpectralField, s: float, value: float = 1.0) -> SpectralField:
    n = sobolev_norm(u, s)
    if n == 0.0:
        raise ValueError("cannot normalize the zero field")
    return SpectralField(u.spec, u.coeffs * (value / n))


def apply_multiplier(u: SpectralField, m: np.ndarray) -> SpectralField:
    return SpectralField(u.spec, m * u.coeffs)


def apply_laplacian(u: SpectralField) -> SpectralField:
    return apply_multiplier(u, -u.spec.k_sq)


def apply_bilaplacian(u: SpectralField) -> SpectralField:
    return apply_multiplier(u, u.spec.k_sq**2)


def apply_dispersion(u: SpectralField) -> SpectralField:
    """The generator Lap^2 - beta*Lap, multiplier |k|^4 + beta |k|^2."""
    return apply_multiplier(u, u.spec.dispersion)


def smoothing_multiplier(spec: ManifoldSpec, m: int = 2) -> np.ndarray:
    return (1.0 + spec.k_sq) ** (-float(m))


def apply_smoothing(u: SpectralField, m: int = 2) -> SpectralField:
    """(1 - Lap)^{-m}, the regularizing factor of the damping feedback."""
    return apply_multiplier(u, smoothing_multiplier(u.spec, m))


def gradient_energy(u: SpectralField) -> float:
    """Integral of |grad u|^2 = sum |k|^2 |c_k|^2."""
    return float(np.sum(u.spec.k_sq * np.abs(u.coeffs) ** 2))


def propagate_free(u: SpectralField, t: float) -> SpectralField:
    """Exact free flow: c_k -> exp(i t (|k|^4 + beta |k|^2)) c_k. Unitary."""
    phase = np.exp(1j * t * u.spec.dispersion)
    return SpectralField(u.spec, phase * u.coeffs)


def free_phases(spec: ManifoldSpec, times: np.ndarray) -> np.ndarray:
    """exp(i t X_k) for a batch of times; shape (len(times),) + lattice."""
    t = np.asarray(times, dtype=float)
    return np.exp(1j * t.reshape(t.shape + (1,) * spec.d) * spec.dispersion)


# ---------------------------------------------------------------------------
# smooth cutoffs
# ---------------------------------------------------------------------------

def _exp_kernel(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    pos = x > 0.0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_ramp(x) -> np.ndarray:
    """C-infinity ramp: exactly 0 for x <= 0, exactly 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    f = _exp_kernel(x)
    g = _exp_kernel(1.0 - x)
    with np.errstate(invalid="ignore"):
        r = np.where(f + g > 0.0, f / np.where(f + g > 0.0, f + g, 1.0), 0.0)
    return r


def plateau_bump(s, lo: float, flat_lo: float, flat_hi: float, hi: float) -> np.ndarray:
    """C-infinity bump: 0 outside (lo, hi), 1 on [flat_lo, flat_hi]."""
    s = np.asarray(s, dtype=float)
    rise = smooth_ramp((s - lo) / (flat_lo - lo))
    fall = smooth_ramp((hi - s) / (hi - flat_hi))
    return rise * fall


def band_cutoff(s) -> np.ndarray:
    """The projector profile kappa: support [1/2, 5/2], equal to 1 on [1, 2]."""
    return plateau_bump(s, 0.5, 1.0, 2.0, 2.5)


def band_project(u: SpectralField, h: float) -> SpectralField:
    """Frequency-band projector kappa(h^2 |k|^2) (semiclassical annulus)."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    return apply_multiplier(u, band_cutoff(h * h * u.spec.k_sq))


def band_mode_mask(spec: ManifoldSpec, h: float) -> np.ndarray:
    """Modes with kappa(h^2 |k|^2) > 0 (the active annulus)."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    return band_cutoff(h * h * spec.k_sq) > 0.0


# ---------------------------------------------------------------------------
# damping / control profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DampingProfile:
    """Nonnegative smooth weight a(x) sampled on the collocation grid."""

    spec: ManifoldSpec
    values: np.ndarray
    region: Region
    smoothing_width: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.spec.shape:
            raise ValueError("profile values have wrong shape")
        if np.any(v < 0.0):
            raise ValueError("profile must be nonnegative")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def is_constant(self) -> bool:
        return bool(np.ptp(self.values) == 0.0)


def _region_profile(region: Region, pts: np.ndarray, width: float) -> np.ndarray:
    from .regions import Ball, RegionUnion, Strip  # local: avoid name clutter

    if isinstance(region, FullRegion):
        return np.ones(pts.shape[:-1])
    if isinstance(region, RegionUnion):
        # soft union 1 - prod(1 - a_i): stays C-infinity where parts overlap
        acc = np.ones(pts.shape[:-1])
        for p in region.parts:
            acc *= 1.0 - _region_profile(p, pts, width)
        return 1.0 - acc
    if isinstance(region, (Strip, Ball)):
        flat = pts.reshape(-1, pts.shape[-1])
        depth = np.array([inside_depth(region, tuple(p)) for p in flat])
        return smooth_ramp(depth / width).reshape(pts.shape[:-1])
    raise TypeError(f"unknown region {region!r}")


def make_damping_profile(
    spec: ManifoldSpec, region: Region, smoothing_width: float | None = None
) -> DampingProfile:
    """Smoothed indicator: 1 on the region eroded by the width, 0 outside.

    Default width is 5 grid cells; the region must be at least twice the
    width across, or the plateau would vanish.
    """
    validate_region(region, spec.d)
    if smoothing_width is None:
        smoothing_width = 5.0 * TWO_PI / spec.N
    if smoothing_width <= 0.0:
        raise ValueError("smoothing width must be positive")
    feature = min_feature_size(region)
    if not isinstance(region, FullRegion) and feature <= 2.0 * smoothing_width:
        raise ValueError(
            f"region feature size {feature:.4g} too small for smoothing width "
            f"{smoothing_width:.4g}"
        )
    pts = spec.grid_points()
    values = _region_profile(region, pts, smoothing_width)
    return DampingProfile(spec, values, region, smoothing_width)


def constant_profile(spec: ManifoldSpec, value: float) -> DampingProfile:
    if value < 0.0:
        raise ValueError("damping value must be >= 0")
    return DampingProfile(
        spec, np.full(spec.shape, float(value)), FullRegion(), math.inf
    )


def multiply_profile(u: SpectralField, a: DampingProfile) -> SpectralField:
    """Pointwise multiplication by a(x), performed on the grid."""
    return field_from_grid(u.spec, a.values * to_grid(u))


# ---------------------------------------------------------------------------
# snapshot persistence
# ---------------------------------------------------------------------------

def save_field(u: SpectralField, path) -> None:
    """Binary snapshot: magic, kind u8, d u8, N u32, beta f64, coeffs c128."""
    spec = u.spec
    header = SNAPSHOT_MAGIC + struct.pack(
        "<BBId", KIND_CODES[spec.kind], spec.d, spec.N, spec.beta
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(u.coeffs, dtype="<c16").tobytes())


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        kind_code, d, N, beta = struct.unpack("<BBId", fh.read(14))
        if kind_code not in KIND_NAMES:
            raise ValueError(f"bad manifold kind byte {kind_code}")
        spec = ManifoldSpec(kind=KIND_NAMES[kind_code], d=d, N=N, beta=beta)
        raw = fh.read(16 * spec.n_modes)
        if len(raw) != 16 * spec.n_modes:
            raise ValueError("truncated snapshot")
        coeffs = np.frombuffer(raw, dtype="<c16").reshape(spec.shape)
    return SpectralField(spec, coeffs.astype(complex))
