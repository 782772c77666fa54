"""
Tensor Field Service.

This module provides symmetric tensor fields sampled on uniform Cartesian
grids over the cube [-L, L]^n, their continuum-normalized discrete Fourier
transforms, and cubic sampling of a spectrum along rays through the origin.

Fourier convention: f^(xi) = (2 pi)^{-n/2} int f(x) exp(-i x.xi) dx, applied
componentwise; the frequency grid is (pi/L) * {-N/2, .., N/2 - 1}^n stored in
centered order.
"""
import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import List, Sequence

import numpy as np
from scipy import fft as spfft

from app.config.settings import MAX_SPECTRAL_NODES, SPECTRAL_OVERSAMPLE, TENSOR_RADON_THREADS
from app.services.algebra.symtensor import SymTensor, pair_coeffs, sym_dimension
from app.utils.errors import DimensionMismatchError, NyquistError

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform grid with N nodes per axis on [-L, L)^n."""
    n: int
    half_width: float
    size: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Grid dimension must be positive, got {self.n}")
        if self.size < 8 or self.size % 2:
            raise ValueError(f"Grid size N must be even and >= 8, got {self.size}")
        if not self.half_width > 0:
            raise ValueError(f"Grid half width L must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.size

    @property
    def shape(self):
        return (self.size,) * self.n

    @property
    def frequency_step(self) -> float:
        return math.pi / self.half_width

    @property
    def nyquist(self) -> float:
        return math.pi * self.size / (2.0 * self.half_width)

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.size)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (N, .., N, n)."""
        return np.stack(np.meshgrid(*([self.axis()] * self.n), indexing="ij"), axis=-1)

    def frequency_axis(self) -> np.ndarray:
        return self.frequency_step * np.arange(-self.size // 2, self.size // 2)

    def frequencies(self) -> np.ndarray:
        """Frequency nodes in centered order, shape (N, .., N, n)."""
        return np.stack(np.meshgrid(*([self.frequency_axis()] * self.n), indexing="ij"), axis=-1)

    def cell_volume(self) -> float:
        return self.spacing ** self.n

    def padded(self, factor: int) -> "Grid":
        """Same spacing, factor times the extent."""
        return Grid(self.n, self.half_width * factor, self.size * factor)


@dataclass
class TensorField:
    """Order-m symmetric tensor field; data shape grid.shape + (C,)."""
    grid: Grid
    m: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        expected = self.grid.shape + (sym_dimension(self.grid.n, self.m),)
        if self.data.shape != expected:
            raise DimensionMismatchError(f"Field data shape {self.data.shape} does not match {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("Tensor field contains non-finite values")

    @classmethod
    def zeros(cls, grid: Grid, m: int) -> "TensorField":
        return cls(grid, m, np.zeros(grid.shape + (sym_dimension(grid.n, m),)))

    @property
    def n(self) -> int:
        return self.grid.n

    def at(self, node: Sequence[int]) -> SymTensor:
        return SymTensor(self.n, self.m, self.data[tuple(node)])

    def inner(self, other: "TensorField") -> float:
        """Grid L2 inner product with the full-contraction pairing."""
        _check_compatible(self, other)
        return float(np.real(np.sum(pair_coeffs(self.data, other.data, self.n, self.m))) * self.grid.cell_volume())

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def __add__(self, other: "TensorField") -> "TensorField":
        _check_compatible(self, other)
        return TensorField(self.grid, self.m, self.data + other.data)

    def __sub__(self, other: "TensorField") -> "TensorField":
        _check_compatible(self, other)
        return TensorField(self.grid, self.m, self.data - other.data)

    def __mul__(self, factor: float) -> "TensorField":
        return TensorField(self.grid, self.m, self.data * factor)

    __rmul__ = __mul__


@dataclass
class SpectralField:
    """Complex spectrum of a tensor field on the centered frequency grid."""
    grid: Grid
    m: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        expected = self.grid.shape + (sym_dimension(self.grid.n, self.m),)
        if self.data.shape != expected:
            raise DimensionMismatchError(f"Spectrum shape {self.data.shape} does not match {expected}")

    @property
    def n(self) -> int:
        return self.grid.n

    def norm(self) -> float:
        """Discrete L2 norm with frequency cell (pi/L)^n."""
        energy = np.real(np.sum(pair_coeffs(self.data, np.conj(self.data), self.n, self.m)))
        return math.sqrt(max(energy, 0.0) * self.grid.frequency_step ** self.n)


def _check_compatible(a, b):
    if a.grid != b.grid or a.m != b.m:
        raise DimensionMismatchError(f"Fields live on different spaces: {a.grid}/m={a.m} vs {b.grid}/m={b.m}")


def relative_error(estimate: TensorField, reference: TensorField) -> float:
    """Relative grid L2 error; 0 when both vanish."""
    scale = reference.norm()
    gap = (estimate - reference).norm()
    if scale == 0.0:
        return gap
    return gap / scale


def _offset_phase(grid: Grid) -> np.ndarray:
    """(-1)^(j_1 + .. + j_n): the exp(i L xi) factor of the [-L, L) offset."""
    sign = np.where(np.arange(-grid.size // 2, grid.size // 2) % 2 == 0, 1.0, -1.0)
    phase = np.ones(grid.shape)
    for axis in range(grid.n):
        shape = [1] * grid.n
        shape[axis] = grid.size
        phase = phase * sign.reshape(shape)
    return phase[..., np.newaxis]


def _forward_scale(grid: Grid) -> float:
    return grid.cell_volume() * (2.0 * math.pi) ** (-grid.n / 2.0)


def forward_transform(f: TensorField) -> SpectralField:
    """Continuum-normalized forward transform of every component."""
    axes = tuple(range(f.n))
    spectrum = spfft.fftshift(spfft.fftn(f.data, axes=axes, workers=TENSOR_RADON_THREADS), axes=axes)
    return SpectralField(f.grid, f.m, spectrum * _forward_scale(f.grid) * _offset_phase(f.grid))


def inverse_transform_complex(F: SpectralField) -> np.ndarray:
    """Exact inverse of forward_transform, keeping the imaginary part."""
    axes = tuple(range(F.n))
    unscaled = F.data * _offset_phase(F.grid) / _forward_scale(F.grid)
    return spfft.ifftn(spfft.ifftshift(unscaled, axes=axes), axes=axes, workers=TENSOR_RADON_THREADS)


def inverse_transform(F: SpectralField) -> TensorField:
    """Inverse transform; the real part is returned."""
    return TensorField(F.grid, F.m, np.real(inverse_transform_complex(F)))


def dft_field(f, direction: str = "forward"):
    """
    Discrete Fourier transform scaled to approximate the continuum transform.

    Args:
        f: TensorField for direction "forward", SpectralField for "inverse"
        direction: "forward" or "inverse"

    Returns:
        SpectralField or TensorField
    """
    if direction == "forward":
        return forward_transform(f)
    if direction == "inverse":
        return inverse_transform(f)
    raise ValueError(f"Unknown transform direction: {direction}")


def pad_field(f: TensorField, factor: int) -> TensorField:
    """Zero-extend a field to the cube of half width factor * L."""
    if factor == 1:
        return f
    big = f.grid.padded(factor)
    offset = (big.size - f.grid.size) // 2
    data = np.zeros(big.shape + f.data.shape[-1:], dtype=f.data.dtype)
    data[(slice(offset, offset + f.grid.size),) * f.n] = f.data
    return TensorField(big, f.m, data)


def crop_field(f: TensorField, grid: Grid) -> TensorField:
    """Inverse of pad_field: the central block matching a smaller grid."""
    offset = (f.grid.size - grid.size) // 2
    return TensorField(grid, f.m, f.data[(slice(offset, offset + grid.size),) * f.n])


def default_oversample(grid: Grid) -> int:
    """Largest refinement up to SPECTRAL_OVERSAMPLE that fits MAX_SPECTRAL_NODES."""
    per_axis = int(round(MAX_SPECTRAL_NODES ** (1.0 / grid.n)))
    return max(1, min(SPECTRAL_OVERSAMPLE, per_axis // grid.size))


def refine_spectrum(F: SpectralField, factor: int) -> SpectralField:
    """
    Spectrum on a frequency grid factor times finer.

    Exact for fields that vanish outside the cube: the refinement is the
    transform of the zero-padded field.
    """
    if factor == 1:
        return F
    return forward_transform(pad_field(inverse_transform(F), factor))


def _catmull_rom_weights(s: np.ndarray) -> np.ndarray:
    s2 = s * s
    s3 = s2 * s
    return np.stack(
        [(-s3 + 2 * s2 - s) / 2, (3 * s3 - 5 * s2 + 2) / 2, (-3 * s3 + 4 * s2 + s) / 2, (s3 - s2) / 2],
        axis=-1,
    )


def sample_spectrum(F: SpectralField, points: np.ndarray) -> np.ndarray:
    """
    Separable Catmull-Rom interpolation of a spectrum at arbitrary frequencies.

    Args:
        F: Spectrum on its centered frequency grid
        points: Frequencies, shape (P, n), inside the Nyquist box

    Returns:
        Complex coefficients, shape (P, C)
    """
    grid = F.grid
    points = np.asarray(points, dtype=float).reshape(-1, grid.n)
    limit = grid.nyquist * (1 + 1e-12)
    if points.size and np.max(np.abs(points)) > limit:
        raise NyquistError(f"Frequency {np.max(np.abs(points)):.6g} outside Nyquist box {grid.nyquist:.6g}")
    position = points / grid.frequency_step + grid.size // 2
    base = np.floor(position).astype(np.intp)
    weights = _catmull_rom_weights(position - base)
    padded = np.pad(F.data, [(2, 3)] * grid.n + [(0, 0)])
    result = np.zeros((points.shape[0], F.data.shape[-1]), dtype=complex)
    for offsets in product(range(4), repeat=grid.n):
        index = tuple(base[:, d] + offsets[d] + 1 for d in range(grid.n))
        w = np.prod([weights[:, d, offsets[d]] for d in range(grid.n)], axis=0)
        result += w[:, np.newaxis] * padded[index]
    return result


def sample_polar_grid(F: SpectralField, omegas: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Samples F^(sigma * omega) for every direction and radius, shape (K, S, C)."""
    omegas = np.asarray(omegas, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.size and np.max(np.abs(sigmas)) > F.grid.nyquist * (1 + 1e-12):
        raise NyquistError(f"|sigma| up to {np.max(np.abs(sigmas)):.6g} exceeds Nyquist {F.grid.nyquist:.6g}")
    points = omegas[:, np.newaxis, :] * sigmas[np.newaxis, :, np.newaxis]
    values = sample_spectrum(F, points.reshape(-1, F.n))
    return values.reshape(omegas.shape[0], sigmas.shape[0], -1)


def sample_fourier_polar(F: SpectralField, omega: Sequence[float], sigmas: Sequence[float]) -> List[SymTensor]:
    """
    Sample the spectrum along the ray through the origin in direction omega.

    Args:
        F: Spectrum of a tensor field
        omega: Unit direction
        sigmas: Signed radii, |sigma| <= pi N / (2 L)

    Returns:
        One complex SymTensor per radius
    """
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-10:
        raise ValueError(f"Direction must be a unit vector, |omega| = {np.linalg.norm(omega)!r}")
    values = sample_polar_grid(F, omega[np.newaxis, :], np.asarray(sigmas, dtype=float))[0]
    return [SymTensor(F.n, F.m, row) for row in values]
