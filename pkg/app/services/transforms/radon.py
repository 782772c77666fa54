"""
Radon Transform Service.

This module provides the forward hyperplane transforms of tensor fields:
the classical scalar Radon transform, the componentwise transform and the
generalized transform in its tangent-vector and frame parametrizations.
Each is available as a hyperplane quadrature and, independently, through
the Fourier slice relation
    g^(omega, sigma, u) = (2 pi)^{(n-1)/2} <f^(sigma omega), omega^{l1} (.) u^{l2}>.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from app.config.settings import P_PADDING, RADON_INTERP_ORDER, TENSOR_RADON_THREADS
from app.services.algebra.symtensor import (
    degree_signatures,
    direction_tensor_coeffs,
    frame_tensor_coeffs,
    multiplicities,
)
from app.services.decomposition.decomp import apply_d, apply_delta
from app.services.fields.field import (
    TensorField,
    default_oversample,
    forward_transform,
    refine_spectrum,
    sample_polar_grid,
)
from app.services.transforms.directions import DirectionGrid
from app.services.transforms.ptransform import (
    crop_offsets,
    differentiate_p,
    p_forward,
    p_frequencies,
    p_inverse,
    pad_offsets,
)
from app.utils.errors import DimensionMismatchError, NyquistError

# Configure logging
logger = logging.getLogger(__name__)


class Parametrization(str, Enum):
    scalar = "scalar"
    tangent = "tangent"
    frame = "frame"


@dataclass
class Sinogram:
    """
    Sampled transform data.

    values has shape (K, U, M) for the tangent parametrization and (K, M)
    for scalar and frame-indexed data.
    """
    m: int
    degree: Tuple[int, ...]
    dgrid: DirectionGrid
    values: np.ndarray
    parametrization: Parametrization = Parametrization.frame

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.degree = tuple(int(d) for d in self.degree)
        self.parametrization = Parametrization(self.parametrization)
        if self.parametrization == Parametrization.tangent:
            if self.dgrid.tangents is None:
                raise DimensionMismatchError("Tangent-parametrized data needs a direction grid with tangents")
            expected = (self.dgrid.K, self.dgrid.U, self.dgrid.p_size)
            if len(self.degree) != 2:
                raise DimensionMismatchError(f"Tangent degree must be a pair (l1, l2), got {self.degree}")
        else:
            expected = (self.dgrid.K, self.dgrid.p_size)
            if self.parametrization == Parametrization.frame and len(self.degree) != self.dgrid.n:
                raise DimensionMismatchError(f"Frame signature {self.degree} does not have n={self.dgrid.n} entries")
            if self.parametrization == Parametrization.scalar and self.degree:
                raise DimensionMismatchError(f"Scalar data carries no degree, got {self.degree}")
        if self.parametrization != Parametrization.scalar and sum(self.degree) != self.m:
            raise DimensionMismatchError(f"Degree {self.degree} does not sum to m={self.m}")
        if self.values.shape != expected:
            raise DimensionMismatchError(f"Sinogram values shape {self.values.shape} does not match {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Sinogram contains non-finite values")

    @property
    def n(self) -> int:
        return self.dgrid.n

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def with_values(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.m, self.degree, self.dgrid, values, self.parametrization)


def resolve_parametrization(degree: Sequence[int], n: int,
                            parametrization: Optional[Parametrization] = None) -> Parametrization:
    """Pairs are tangent degrees unless the caller says frame (ambiguous only for n = 2)."""
    if parametrization is not None:
        return Parametrization(parametrization)
    if len(degree) == 0:
        return Parametrization.scalar
    if len(degree) == 2:
        return Parametrization.tangent
    if len(degree) == n:
        return Parametrization.frame
    raise DimensionMismatchError(f"Cannot interpret degree {tuple(degree)} on R^{n}")


def direction_tensors(dgrid: DirectionGrid, degree: Sequence[int], parametrization: Parametrization) -> np.ndarray:
    """Direction tensors per sample: (K, U, C) for tangent data, (K, C) for frame data."""
    if parametrization == Parametrization.tangent:
        if dgrid.tangents is None:
            raise DimensionMismatchError("Direction grid has no tangent vectors")
        return direction_tensor_coeffs(dgrid.omegas[:, np.newaxis, :], dgrid.tangents, degree[0], degree[1])
    if parametrization == Parametrization.frame:
        return frame_tensor_coeffs(dgrid.frames(), dgrid.omegas, degree)
    return np.ones((dgrid.K, 1))


def pair_rows(componentwise: np.ndarray, tensors: np.ndarray, n: int, m: int,
              parametrization: Parametrization) -> np.ndarray:
    """Contract componentwise rows (K, M, C) with direction tensors."""
    weights = multiplicities(n, m)
    if parametrization == Parametrization.tangent:
        return np.einsum("kpc,kuc,c->kup", componentwise, tensors, weights)
    return np.einsum("kpc,kc,c->kp", componentwise, tensors, weights)


class RadonService:
    """Service for forward hyperplane transforms"""

    def __init__(self, interp_order: int = RADON_INTERP_ORDER, threads: int = TENSOR_RADON_THREADS,
                 chunk_size: int = 16, p_padding: int = P_PADDING):
        """
        Initialize the Radon Service.

        Args:
            interp_order: Spline order for sampling fields on hyperplanes
            threads: Worker threads for direction chunks
            chunk_size: Directions per work item
            p_padding: Zero-padding factor in p for the Fourier path
        """
        self.interp_order = interp_order
        self.threads = max(1, threads)
        self.chunk_size = chunk_size
        self.p_padding = p_padding

    def hyperplane_integrals(self, f: TensorField, dgrid: DirectionGrid) -> np.ndarray:
        """
        Integrate every stored component over every sampled hyperplane.

        Args:
            f: Tensor field
            dgrid: Direction grid

        Returns:
            Real array of shape (K, M, C)
        """
        if dgrid.n != f.n:
            raise DimensionMismatchError(f"Direction grid on R^{dgrid.n} does not fit a field on R^{f.n}")
        grid = f.grid
        h = grid.spacing
        reach = int(math.ceil(grid.half_width * math.sqrt(grid.n) / h))
        s = h * np.arange(-reach, reach + 1)
        mesh = np.stack(np.meshgrid(*([s] * (f.n - 1)), indexing="ij"), axis=-1).reshape(-1, f.n - 1)
        frames = dgrid.frames()
        offsets = dgrid.offsets()
        cell = h ** (f.n - 1)
        components = f.data.shape[-1]

        if self.interp_order > 1:
            coefficients = [ndimage.spline_filter(f.data[..., c], order=self.interp_order) for c in range(components)]
        else:
            coefficients = [f.data[..., c] for c in range(components)]

        def integrate(chunk: np.ndarray) -> np.ndarray:
            out = np.zeros((len(chunk), offsets.shape[0], components))
            for local, k in enumerate(chunk):
                points = offsets[:, np.newaxis, np.newaxis] * dgrid.omegas[k] + (mesh @ frames[k])[np.newaxis]
                coords = ((points.reshape(-1, f.n) + grid.half_width) / h).T
                for c in range(components):
                    values = ndimage.map_coordinates(
                        coefficients[c], coords, order=self.interp_order,
                        mode="constant", cval=0.0, prefilter=False,
                    )
                    out[local, :, c] = values.reshape(offsets.shape[0], -1).sum(axis=1) * cell
            return out

        chunks = np.array_split(np.arange(dgrid.K), max(1, math.ceil(dgrid.K / self.chunk_size)))
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            results = list(executor.map(integrate, chunks))
        return np.concatenate(results, axis=0)

    def radon_scalar(self, f: TensorField, dgrid: DirectionGrid) -> Sinogram:
        if f.m != 0:
            raise DimensionMismatchError(f"radon_scalar needs an order-0 field, got order {f.m}")
        values = self.hyperplane_integrals(f, dgrid)[..., 0]
        return Sinogram(0, (), dgrid, values, Parametrization.scalar)

    def radon_componentwise(self, f: TensorField, dgrid: DirectionGrid) -> list:
        """One scalar sinogram per stored coefficient, in basis order."""
        values = self.hyperplane_integrals(f, dgrid)
        return [Sinogram(0, (), dgrid, values[..., c], Parametrization.scalar) for c in range(values.shape[-1])]

    def grt(self, f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
            parametrization: Optional[Parametrization] = None) -> Sinogram:
        """
        Generalized Radon transform by hyperplane quadrature.

        Args:
            f: Order-m field
            degree: (l1, l2) for the tangent form or (l_1, .., l_n) for the frame form
            dgrid: Direction grid
            parametrization: Needed to request frame data for n = 2

        Returns:
            Sinogram
        """
        param = resolve_parametrization(degree, f.n, parametrization)
        if sum(degree) != f.m:
            raise DimensionMismatchError(f"Degree {tuple(degree)} does not sum to the field order {f.m}")
        integrals = self.hyperplane_integrals(f, dgrid)
        values = pair_rows(integrals, direction_tensors(dgrid, degree, param), f.n, f.m, param)
        return Sinogram(f.m, tuple(degree) if param != Parametrization.scalar else (), dgrid, values, param)

    def grt_all_signatures(self, f: TensorField, dgrid: DirectionGrid) -> Dict[Tuple[int, ...], Sinogram]:
        """Frame-parametrized data for every signature, sharing one quadrature pass."""
        integrals = self.hyperplane_integrals(f, dgrid)
        result = {}
        for degrees in degree_signatures(f.n, f.m):
            tensors = direction_tensors(dgrid, degrees, Parametrization.frame)
            values = pair_rows(integrals, tensors, f.n, f.m, Parametrization.frame)
            result[degrees] = Sinogram(f.m, degrees, dgrid, values, Parametrization.frame)
        return result

    def polar_samples(self, f: TensorField, dgrid: DirectionGrid, sigmas: np.ndarray) -> np.ndarray:
        """f^(sigma omega) for all normals, shape (K, S, C), from the refined spectrum."""
        spectrum = refine_spectrum(forward_transform(f), default_oversample(f.grid))
        if sigmas.size and np.max(np.abs(sigmas)) > f.grid.nyquist * (1 + 1e-12):
            raise NyquistError(
                f"Offset spacing {dgrid.p_spacing:.4g} asks for |sigma| up to {np.max(np.abs(sigmas)):.4g}, "
                f"beyond the grid Nyquist frequency {f.grid.nyquist:.4g}"
            )
        return sample_polar_grid(spectrum, dgrid.omegas, sigmas)

    def grt_fourier_spectrum(self, f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
                             parametrization: Optional[Parametrization] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Slice-theorem values g^ on the padded sigma grid; returns (sigmas, values)."""
        param = resolve_parametrization(degree, f.n, parametrization)
        if sum(degree) != f.m:
            raise DimensionMismatchError(f"Degree {tuple(degree)} does not sum to the field order {f.m}")
        size = 2 * self.p_padding * dgrid.p_count + 1
        sigmas = p_frequencies(size, dgrid.p_spacing)
        samples = self.polar_samples(f, dgrid, sigmas)
        tensors = direction_tensors(dgrid, degree, param)
        weights = multiplicities(f.n, f.m)
        scale = (2.0 * math.pi) ** ((f.n - 1) / 2.0)
        if param == Parametrization.tangent:
            values = scale * np.einsum("ksc,kuc,c->kus", samples, tensors, weights)
        else:
            values = scale * np.einsum("ksc,kc,c->ks", samples, tensors, weights)
        return sigmas, values

    def grt_fourier(self, f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
                    parametrization: Optional[Parametrization] = None) -> Sinogram:
        """Generalized Radon transform through the Fourier slice relation."""
        param = resolve_parametrization(degree, f.n, parametrization)
        _, spectrum = self.grt_fourier_spectrum(f, degree, dgrid, param)
        values = crop_offsets(np.real(p_inverse(spectrum, dgrid.p_spacing)), dgrid.p_size)
        return Sinogram(f.m, tuple(degree) if param != Parametrization.scalar else (), dgrid, values, param)

    def slice_check(self, f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
                    parametrization: Optional[Parametrization] = None) -> float:
        """
        Measure the Fourier slice relation on quadrature data.

        Returns:
            Relative L2 discrepancy over |sigma| <= half the Nyquist frequency
        """
        param = resolve_parametrization(degree, f.n, parametrization)
        data = self.grt(f, degree, dgrid, param)
        sigmas, expected = self.grt_fourier_spectrum(f, degree, dgrid, param)
        measured = p_forward(pad_offsets(data.values, self.p_padding), dgrid.p_spacing)
        band = np.abs(sigmas) <= f.grid.nyquist / 2.0
        gap = np.linalg.norm((measured - expected)[..., band])
        scale = np.linalg.norm(expected[..., band])
        discrepancy = float(gap / scale) if scale > 0 else float(gap)
        logger.info(f"Fourier slice discrepancy for degree {tuple(degree)}: {discrepancy:.3e}")
        return discrepancy


@dataclass
class IdentityDefect:
    """Outcome of a transform identity check."""
    branch: str
    defect: float
    scale: float


def _relative_gap(lhs: np.ndarray, rhs: np.ndarray) -> float:
    scale = np.linalg.norm(lhs)
    gap = np.linalg.norm(lhs - rhs)
    return float(gap / scale) if scale > 0 else float(gap)


def differentiation_defect(f: TensorField, a: Sequence[float], dgrid: DirectionGrid,
                           service: Optional[RadonService] = None) -> np.ndarray:
    """
    Per-direction defect of R(a . grad f) = <omega, a> d/dp Rf.

    Centered differences in p; the defect of a direction is its max row error
    relative to max |R(a . grad f)|.
    """
    service = service or radon_service
    if f.m != 0:
        raise DimensionMismatchError("The differentiation property is stated for scalar fields")
    a = np.asarray(a, dtype=float)
    gradient = apply_d(f)
    directional = TensorField(f.grid, 0, np.einsum("...i,i->...", gradient.data, a)[..., np.newaxis])
    lhs = service.radon_scalar(directional, dgrid).values
    rhs = (dgrid.omegas @ a)[:, np.newaxis] * differentiate_p(
        service.radon_scalar(f, dgrid).values, dgrid.p_spacing, 1, method="central"
    )
    scale = np.max(np.abs(lhs))
    per_direction = np.max(np.abs(lhs - rhs), axis=1)
    return per_direction / scale if scale > 0 else per_direction


def derivative_identity_defect(v: TensorField, k: int, degrees: Sequence[int], dgrid: DirectionGrid,
                               method: str = "central", service: Optional[RadonService] = None) -> IdentityDefect:
    """
    Check the transform of a potential field f = d^k v for one frame signature.

    With l_n < k the transform vanishes; otherwise
    R_l(d^k v) = C(l_n, k) / C(m, k) * d^k/dp^k R_{l - k e_n} v.
    """
    service = service or radon_service
    degrees = tuple(degrees)
    m = v.m + k
    if sum(degrees) != m or len(degrees) != v.n:
        raise DimensionMismatchError(f"Signature {degrees} is not an order-{m} frame signature on R^{v.n}")
    f = v
    for _ in range(k):
        f = apply_d(f)
    lhs = service.grt(f, degrees, dgrid, Parametrization.frame).values
    if degrees[-1] < k:
        scale = float(np.max(np.abs(service.hyperplane_integrals(f, dgrid))))
        defect = float(np.max(np.abs(lhs))) / scale if scale > 0 else float(np.max(np.abs(lhs)))
        return IdentityDefect("vanishing", defect, scale)
    lower = degrees[:-1] + (degrees[-1] - k,)
    factor = math.comb(degrees[-1], k) / math.comb(m, k)
    rhs = factor * differentiate_p(
        service.grt(v, lower, dgrid, Parametrization.frame).values, dgrid.p_spacing, k, method=method
    )
    return IdentityDefect("derivative", _relative_gap(lhs, rhs), float(np.max(np.abs(lhs))))


def divergence_identity_defect(v: TensorField, j: int, degrees: Sequence[int], dgrid: DirectionGrid,
                               method: str = "central", service: Optional[RadonService] = None) -> IdentityDefect:
    """Check R^k_l(delta^j v) = d^j/dp^j R^{j+k}_{l + j e_n} v for one frame signature."""
    service = service or radon_service
    degrees = tuple(degrees)
    if sum(degrees) + j != v.m or len(degrees) != v.n:
        raise DimensionMismatchError(f"Signature {degrees} with j={j} does not fit an order-{v.m} field")
    f = v
    for _ in range(j):
        f = apply_delta(f)
    lhs = service.grt(f, degrees, dgrid, Parametrization.frame).values
    raised = degrees[:-1] + (degrees[-1] + j,)
    rhs = differentiate_p(service.grt(v, raised, dgrid, Parametrization.frame).values, dgrid.p_spacing, j, method=method)
    return IdentityDefect("divergence", _relative_gap(lhs, rhs), float(np.max(np.abs(lhs))))


# Create a default instance of the service
radon_service = RadonService()


# Functions for backward compatibility
def radon_scalar(f: TensorField, dgrid: DirectionGrid) -> Sinogram:
    return radon_service.radon_scalar(f, dgrid)


def radon_componentwise(f: TensorField, dgrid: DirectionGrid) -> list:
    return radon_service.radon_componentwise(f, dgrid)


def grt(f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
        parametrization: Optional[Parametrization] = None) -> Sinogram:
    return radon_service.grt(f, degree, dgrid, parametrization)


def grt_fourier(f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
                parametrization: Optional[Parametrization] = None) -> Sinogram:
    return radon_service.grt_fourier(f, degree, dgrid, parametrization)


def slice_check(f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
                parametrization: Optional[Parametrization] = None) -> float:
    return radon_service.slice_check(f, degree, dgrid, parametrization)
