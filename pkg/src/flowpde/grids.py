"""Grids, multi-channel fields, masks, and the Gaussian reference measure.

Conventions used throughout the package:

* Every field lives on a regular grid over the unit square (spatial 2-D) or
  the unit space-time rectangle (1-D space, axis 0 = time, axis 1 = space).
* Non-periodic axes have spacing ``1/(n-1)`` (endpoints included); periodic
  axes have spacing ``1/n`` (right endpoint identified with the left one).
* Arrays are float64, C-ordered, with shape ``(channels, n0, n1)``; whenever
  grid values are flattened (masks, serialization) row-major order is used.
* Randomness comes from ``numpy.random.Philox``, a counter-based generator,
  keyed through ``SeedSequence`` so that every draw is reproducible across
  runs and platforms.  One reference draw consumes a single
  ``standard_normal`` call of shape ``(channels, 2, n0, n1)``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError

SPATIAL2D = "spatial2d"
SPACETIME1D = "spacetime1d"

_FIELD_MAGIC = b"FPF1"
_FIELD_VERSION = 1
_KIND_CODES = {SPATIAL2D: 0, SPACETIME1D: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def make_rng(seed, *spawn_key) -> np.random.Generator:
    """Counter-based generator for `seed`, optionally split by `spawn_key`."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Grid:
    """Regular 2-axis grid.

    ``spatial2d`` grids are non-periodic on both axes (zero-Dirichlet
    problems); ``spacetime1d`` grids have a non-periodic time axis 0 and a
    periodic space axis 1.
    """

    kind: str
    n0: int
    n1: int

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ConfigurationError(f"unknown grid kind {self.kind!r}")
        if self.n0 < 4 or self.n1 < 4:
            raise ConfigurationError(f"grid must be at least 4x4, got {self.n0}x{self.n1}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n0, self.n1)

    @property
    def periodic(self) -> tuple[bool, bool]:
        return (False, self.kind == SPACETIME1D)

    @property
    def spacing(self) -> tuple[float, float]:
        p0, p1 = self.periodic
        h0 = 1.0 / self.n0 if p0 else 1.0 / (self.n0 - 1)
        h1 = 1.0 / self.n1 if p1 else 1.0 / (self.n1 - 1)
        return (h0, h1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays (axis0, axis1), each of shape (n0, n1)."""
        axes = []
        for n, per in zip(self.shape, self.periodic):
            axes.append(np.arange(n) / n if per else np.linspace(0.0, 1.0, n))
        c0, c1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        return c0, c1


@dataclass
class Field:
    """Multi-channel scalar field sampled on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray  # (channels, n0, n1) float64

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[1:] != self.grid.shape:
            raise ShapeError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ShapeError("field values must be finite")
        self.values = v

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    @staticmethod
    def zeros(grid: Grid, channels: int = 1) -> "Field":
        return Field(grid, np.zeros((channels,) + grid.shape))


@dataclass(frozen=True)
class GrfConfig:
    """Spectral filter for the stationary Gaussian reference measure.

    White noise is modulated per Fourier mode by
    ``amplitude * (1 + (2*pi*|k|*length_scale)**2) ** (-power/2)``,
    with ``k`` in integer cycles per unit domain.  ``power = 0`` recovers
    i.i.d. unit-variance noise scaled by ``amplitude``.
    """

    length_scale: float = 0.05
    power: float = 2.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.length_scale <= 0:
            raise ConfigurationError("length_scale must be positive")
        if self.amplitude < 0:
            raise ConfigurationError("amplitude must be nonnegative")

    def filter_1d(self, n: int) -> np.ndarray:
        k = np.fft.fftfreq(n) * n
        return self.amplitude * (1.0 + (2.0 * np.pi * np.abs(k) * self.length_scale) ** 2) ** (
            -self.power / 2.0
        )

    def filter_2d(self, shape: tuple[int, int]) -> np.ndarray:
        k0 = np.fft.fftfreq(shape[0]) * shape[0]
        k1 = np.fft.fftfreq(shape[1]) * shape[1]
        knorm = np.sqrt(k0[:, None] ** 2 + k1[None, :] ** 2)
        return self.amplitude * (1.0 + (2.0 * np.pi * knorm * self.length_scale) ** 2) ** (
            -self.power / 2.0
        )


def grf_draw(grid: Grid, cfg: GrfConfig, rng: np.random.Generator, channels: int = 1) -> np.ndarray:
    """One zero-mean stationary Gaussian draw, shape (channels, n0, n1).

    Per mode, independent standard normals for real and imaginary parts are
    scaled by the spectral filter and inverse-transformed; the imaginary part
    of the result is discarded.  The normalization makes the per-point
    variance equal to ``mean_k filter(k)**2``.
    """
    shape = grid.shape
    filt = cfg.filter_2d(shape)
    z = rng.standard_normal((channels, 2) + shape)
    spectrum = (z[:, 0] + 1j * z[:, 1]) * filt
    scale = np.sqrt(shape[0] * shape[1])
    return np.real(np.fft.ifft2(spectrum, axes=(-2, -1))) * scale


def grf_sample(grid: Grid, cfg: GrfConfig, seed: int, channels: int = 1) -> Field:
    """Seeded wrapper around :func:`grf_draw`; deterministic given `seed`."""
    return Field(grid, grf_draw(grid, cfg, make_rng(seed), channels=channels))


def grf_draw_1d(n: int, cfg: GrfConfig, rng: np.random.Generator) -> np.ndarray:
    """1-D periodic analogue of :func:`grf_draw` (used for Burgers ICs)."""
    filt = cfg.filter_1d(n)
    z = rng.standard_normal((2, n))
    spectrum = (z[0] + 1j * z[1]) * filt
    return np.real(np.fft.ifft(spectrum)) * np.sqrt(n)


def interpolant(u0: Field, u1: Field, t: float) -> Field:
    """Linear bridge (1-t)*u0 + t*u1 between two fields on the same grid."""
    if u0.grid != u1.grid or u0.channels != u1.channels:
        raise ShapeError("interpolant endpoints must share grid and channel count")
    if not 0.0 <= t <= 1.0:
        raise ConfigurationError(f"interpolation time {t} outside [0, 1]")
    return Field(u0.grid, (1.0 - t) * u0.values + t * u1.values)


@dataclass
class ObservationSpec:
    """Point observations: binary mask, observed values, and noise level."""

    mask: np.ndarray  # bool, same shape as the observed field's values
    y: np.ndarray  # observed values at mask==True, row-major order
    sigma_obs: float = 0.05

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.mask.ndim == 2:
            self.mask = self.mask[None]
        if int(self.mask.sum()) != self.y.size:
            raise ShapeError(
                f"mask selects {int(self.mask.sum())} points but y has {self.y.size} values"
            )
        if self.sigma_obs < 0:
            raise ConfigurationError("sigma_obs must be nonnegative")

    @property
    def count(self) -> int:
        return self.y.size

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(mask_float, c): mask as floats and observations scattered on the grid."""
        m = self.mask.astype(np.float64)
        c = np.zeros_like(m)
        c[self.mask] = self.y
        return m, c


def apply_mask(u: Field, obs: ObservationSpec) -> np.ndarray:
    """Values of `u` at the observed points, in row-major order."""
    if obs.mask.shape != u.values.shape:
        raise ShapeError(f"mask shape {obs.mask.shape} does not match field {u.values.shape}")
    return u.values[obs.mask]


def observe(truth: Field, mask: np.ndarray, sigma_obs: float, rng: np.random.Generator) -> ObservationSpec:
    """Build an ObservationSpec by reading `truth` at `mask` under Gaussian noise."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.shape != truth.values.shape:
        raise ShapeError("mask shape does not match field shape")
    y = truth.values[mask]
    if sigma_obs > 0:
        y = y + sigma_obs * rng.standard_normal(y.shape)
    return ObservationSpec(mask=mask, y=y, sigma_obs=sigma_obs)


def save_field(path, field: Field) -> None:
    """Flat binary field file: fixed header + row-major little-endian float64."""
    header = struct.pack(
        "<4sIBIII",
        _FIELD_MAGIC,
        _FIELD_VERSION,
        _KIND_CODES[field.grid.kind],
        field.grid.n0,
        field.grid.n1,
        field.channels,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(field.values.astype("<f8").tobytes(order="C"))


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIBIII"))
        magic, version, kind_code, n0, n1, channels = struct.unpack("<4sIBIII", header)
        if magic != _FIELD_MAGIC:
            raise ConfigurationError(f"{path}: not a field file")
        if version != _FIELD_VERSION:
            raise ConfigurationError(f"{path}: unsupported field version {version}")
        raw = fh.read(8 * channels * n0 * n1)
    values = np.frombuffer(raw, dtype="<f8").reshape(channels, n0, n1).astype(np.float64)
    return Field(Grid(_KIND_NAMES[kind_code], n0, n1), values)


def export_field_csv(path, field: Field, channel: int = 0) -> None:
    """One CSV grid (n0 rows, n1 columns) for plotting a single channel."""
    np.savetxt(path, field.values[channel], delimiter=",")


def write_json(path, payload: dict) -> None:
    """Canonical JSON (sorted keys, repr floats) so identical runs give identical bytes."""
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=float)
        fh.write("\n")
