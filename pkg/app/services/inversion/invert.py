"""
Inversion Service.

This module provides functionality to recover a symmetric tensor field from
frame-parametrized generalized Radon data. Component v_i of the
solenoidal-potential decomposition is recovered in three stages:

1. assemble the componentwise Radon transform of delta^i d^i v_i from the
   data family with l_n = i,
2. invert the classical Radon transform coefficient by coefficient
   (Fourier slice gridding),
3. solve delta^i d^i v_i = w frequency by frequency.

For v_0 of a tensor field the gridded quantity is -Laplacian v_0 and the
zero frequency is fixed by the integral of f, read off the p-moments.
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from app.config.settings import (
    GRIDDING_OVERSAMPLE,
    INVERSION_RANGE_TOLERANCE,
    P_PADDING,
    RADON_IMAG_TOLERANCE,
)
from app.services.algebra.symtensor import degree_signatures, frame_tensor_coeffs, multiplicities, sym_dimension
from app.services.decomposition.decomp import (
    DecompositionService,
    apply_d_power,
    decomposition_service,
)
from app.services.fields.field import (
    Grid,
    SpectralField,
    TensorField,
    forward_transform,
    inverse_transform,
    inverse_transform_complex,
)
from app.services.transforms.directions import DirectionGrid
from app.services.transforms.ptransform import differentiate_p, p_forward, p_frequencies, pad_offsets
from app.services.transforms.radon import Parametrization, RadonService, Sinogram, radon_service
from app.utils.errors import DimensionMismatchError, IncompleteDatasetError, InconsistentDataError

# Configure logging
logger = logging.getLogger(__name__)

Signature = Tuple[int, ...]


@dataclass
class GrtDataset:
    """Frame-parametrized sinograms of one order-m field, keyed by signature."""
    n: int
    m: int
    dgrid: DirectionGrid
    sinograms: Dict[Signature, Sinogram] = field(default_factory=dict)

    def __post_init__(self):
        for degrees, sinogram in self.sinograms.items():
            if sinogram.parametrization != Parametrization.frame or tuple(sinogram.degree) != tuple(degrees):
                raise DimensionMismatchError(f"Sinogram stored under {degrees} carries degree {sinogram.degree}")
            if sinogram.m != self.m or len(degrees) != self.n:
                raise DimensionMismatchError(f"Sinogram {degrees} does not belong to an order-{self.m} dataset on R^{self.n}")
            if sinogram.values.shape != (self.dgrid.K, self.dgrid.p_size):
                raise DimensionMismatchError(f"Sinogram {degrees} does not live on the shared direction grid")

    @classmethod
    def from_field(cls, f: TensorField, dgrid: DirectionGrid, service: Optional[RadonService] = None) -> "GrtDataset":
        service = service or radon_service
        return cls(f.n, f.m, dgrid, service.grt_all_signatures(f, dgrid))

    def family(self, i: int) -> List[Signature]:
        """Signatures with l_n = i, C(m - i + n - 2, n - 2) of them."""
        return [degrees for degrees in degree_signatures(self.n, self.m) if degrees[-1] == i]

    def missing(self, i: int) -> List[Signature]:
        return [degrees for degrees in self.family(i) if degrees not in self.sinograms]

    def with_family(self, i: int, values: Optional[np.ndarray] = None) -> "GrtDataset":
        """Copy with the l_n = i family replaced (zeros unless values given)."""
        sinograms = dict(self.sinograms)
        for degrees in self.family(i):
            replacement = np.zeros((self.dgrid.K, self.dgrid.p_size)) if values is None else values
            sinograms[degrees] = Sinogram(self.m, degrees, self.dgrid, replacement, Parametrization.frame)
        return GrtDataset(self.n, self.m, self.dgrid, sinograms)


class StageReport(BaseModel):
    """Residuals of one component recovery."""
    component: int
    order: int
    assembled_max: float
    imag_residue: float
    range_residual: float


def _cubic_bspline(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    return np.where(
        t < 1.0,
        (4.0 - 6.0 * t ** 2 + 3.0 * t ** 3) / 6.0,
        np.where(t < 2.0, (2.0 - t) ** 3 / 6.0, 0.0),
    )


def _sinc(t: np.ndarray) -> np.ndarray:
    return np.sinc(t / np.pi)


class InversionService:
    """Service for Radon inversion and component recovery"""

    def __init__(
        self,
        oversample: int = GRIDDING_OVERSAMPLE,
        p_padding: int = P_PADDING,
        imag_tolerance: float = RADON_IMAG_TOLERANCE,
        range_tolerance: float = INVERSION_RANGE_TOLERANCE,
        decomposition: Optional[DecompositionService] = None,
    ):
        """
        Initialize the Inversion Service.

        Args:
            oversample: Refinement of the Cartesian frequency grid used for gridding
            p_padding: Zero-padding factor in p before the slice transform
            imag_tolerance: Largest accepted imaginary residue relative to the real part
            range_tolerance: delta^i d^i range tolerance inside the pipeline
            decomposition: Service used for the delta^i d^i solves
        """
        self.oversample = oversample
        self.p_padding = p_padding
        self.imag_tolerance = imag_tolerance
        self.range_tolerance = range_tolerance
        self.decomposition = decomposition or decomposition_service

    def _polar_weights(self, dgrid: DirectionGrid, sigmas: np.ndarray) -> np.ndarray:
        """Quadrature weights of the doubly covered polar grid, shape (K, S)."""
        step = sigmas[1] - sigmas[0]
        radial = step * np.abs(sigmas) ** (dgrid.n - 1)
        if dgrid.n == 2:
            radial[np.argmin(np.abs(sigmas))] = step ** 2 / 6.0
        return 0.5 * dgrid.weights[:, np.newaxis] * radial[np.newaxis, :]

    def _grid_samples(self, samples: np.ndarray, points: np.ndarray, target: Grid) -> np.ndarray:
        """Spread weighted samples (Q, C) at frequencies (Q, n) with the cubic B-spline kernel."""
        n, size = target.n, target.size
        step = target.frequency_step
        position = points / step + size // 2
        base = np.floor(position).astype(np.intp)
        flat_parts, kernel_parts = [], []
        for offsets in product(range(-1, 3), repeat=n):
            index = base + np.asarray(offsets)
            kernel = np.prod(_cubic_bspline(position - index), axis=1)
            flat_parts.append(np.ravel_multi_index(tuple((index % size).T), target.shape))
            kernel_parts.append(kernel)
        flat = np.concatenate(flat_parts)
        kernel = np.concatenate(kernel_parts)
        total = size ** n
        spread = np.empty((total, samples.shape[1]), dtype=complex)
        for c in range(samples.shape[1]):
            values = np.tile(samples[:, c], len(kernel_parts)) * kernel
            spread[:, c] = (
                np.bincount(flat, weights=values.real, minlength=total)
                + 1j * np.bincount(flat, weights=values.imag, minlength=total)
            )
        return spread.reshape(target.shape + (samples.shape[1],)) / step ** n

    def invert_rows(self, values: np.ndarray, dgrid: DirectionGrid, grid: Grid,
                    radial_power: int = 0) -> Tuple[np.ndarray, float]:
        """
        Classical Radon inversion of several scalar sinograms at once.

        Args:
            values: Real rows, shape (K, M, C)
            dgrid: Antipodally closed direction grid
            grid: Target grid
            radial_power: Grid |sigma|^(2 radial_power) times the slice
                spectrum, i.e. return (-Laplacian)^radial_power of the field

        Returns:
            (field data of shape grid.shape + (C,), imaginary residue)
        """
        if dgrid.n != grid.n:
            raise DimensionMismatchError(f"Direction grid on R^{dgrid.n} does not fit a grid on R^{grid.n}")
        components = values.shape[-1]
        rows = np.moveaxis(values, -1, 1)
        padded = pad_offsets(rows, self.p_padding)
        sigmas = p_frequencies(padded.shape[-1], dgrid.p_spacing)
        spectrum = p_forward(padded, dgrid.p_spacing) / (2.0 * math.pi) ** ((grid.n - 1) / 2.0)
        if radial_power:
            spectrum = spectrum * np.abs(sigmas) ** (2 * radial_power)
        weighted = spectrum * self._polar_weights(dgrid, sigmas)[:, np.newaxis, :]
        samples = np.moveaxis(weighted, 1, -1).reshape(-1, components)
        points = (dgrid.omegas[:, np.newaxis, :] * sigmas[np.newaxis, :, np.newaxis]).reshape(-1, grid.n)

        fine = grid.padded(self.oversample)
        gridded = self._grid_samples(samples, points, fine)
        spatial = np.stack(
            [inverse_transform_complex(SpectralField(fine, 0, gridded[..., c:c + 1]))[..., 0] for c in range(components)],
            axis=-1,
        )
        offset = (fine.size - grid.size) // 2
        spatial = spatial[(slice(offset, offset + grid.size),) * grid.n]

        deapodize = np.ones(grid.shape)
        for axis in range(grid.n):
            shape = [1] * grid.n
            shape[axis] = grid.size
            deapodize = deapodize * (_sinc(grid.axis() * fine.frequency_step / 2.0) ** 4).reshape(shape)
        spatial = spatial / deapodize[..., np.newaxis]

        real_norm = np.linalg.norm(spatial.real)
        imag_norm = np.linalg.norm(spatial.imag)
        residue = float(imag_norm / real_norm) if real_norm > 0 else float(imag_norm)
        return spatial.real, residue

    def radon_invert(self, g: Sinogram, grid: Grid) -> TensorField:
        """
        Invert the classical Radon transform by direct Fourier gridding.

        Args:
            g: Scalar sinogram on an antipodally closed grid
            grid: Target grid

        Returns:
            Order-0 TensorField

        Raises:
            InconsistentDataError: The imaginary residue exceeds the tolerance
        """
        if g.values.ndim != 2:
            raise DimensionMismatchError("radon_invert needs rows indexed by (omega, p)")
        data, residue = self.invert_rows(g.values[..., np.newaxis], g.dgrid, grid)
        self._check_residue(residue)
        return TensorField(grid, 0, data)

    def _check_residue(self, residue: float):
        if residue > self.imag_tolerance:
            logger.error(f"Radon inversion imaginary residue {residue:.3e} above {self.imag_tolerance:.1e}")
            raise InconsistentDataError(
                f"Imaginary residue {residue:.3e} of the Radon inversion exceeds {self.imag_tolerance:.1e}; "
                "data is not the transform of a real field on this direction grid"
            )

    def assemble_rows(self, dataset: GrtDataset, i: int) -> np.ndarray:
        """
        Componentwise Radon data of delta^i d^i v_i, shape (K, M, C_{m-i}).

        Each l_n = i sinogram is differentiated i times in p, weighted by
        (m - i)! / (l_1! .. l_{n-1}!) and multiplied by the tangent tensor
        omega_1^{l_1} (.) .. (.) omega_{n-1}^{l_{n-1}}.
        """
        if not 0 <= i <= dataset.m:
            raise ValueError(f"Component index must lie in 0..{dataset.m}, got {i}")
        missing = dataset.missing(i)
        if missing:
            logger.error(f"Dataset lacks signatures {missing} for component {i}")
            raise IncompleteDatasetError(f"Incomplete dataset for component {i}: missing signatures {missing}")
        dgrid = dataset.dgrid
        frames = dgrid.frames()
        k = dataset.m - i
        result = np.zeros((dgrid.K, dgrid.p_size, sym_dimension(dataset.n, k)))
        for degrees in dataset.family(i):
            tangential = degrees[:-1]
            weight = math.factorial(k) / math.prod(math.factorial(l) for l in tangential)
            rows = differentiate_p(dataset.sinograms[degrees].values, dgrid.p_spacing, i, method="spectral",
                                   padding=self.p_padding)
            tensor = frame_tensor_coeffs(frames, dgrid.omegas, tangential + (0,))
            result += weight * rows[:, :, np.newaxis] * tensor[:, np.newaxis, :]
        return result

    def assemble_normal_data(self, dataset: GrtDataset, i: int) -> List[Sinogram]:
        rows = self.assemble_rows(dataset, i)
        return [Sinogram(0, (), dataset.dgrid, rows[..., c], Parametrization.scalar) for c in range(rows.shape[-1])]

    def field_integral(self, dataset: GrtDataset) -> np.ndarray:
        """
        Least-squares estimate of the integral of f over R^n.

        The p-integral of the (l_1, .., l_{n-1}, 0) sinogram at omega is the
        pairing of that integral with the frame tensor of the signature, so
        the l_n = 0 family over all directions determines it.
        """
        missing = dataset.missing(0)
        if missing:
            raise IncompleteDatasetError(f"Incomplete dataset for component 0: missing signatures {missing}")
        dgrid = dataset.dgrid
        frames = dgrid.frames()
        weights = multiplicities(dataset.n, dataset.m)
        design, moments = [], []
        for degrees in dataset.family(0):
            design.append(frame_tensor_coeffs(frames, dgrid.omegas, degrees) * weights)
            moments.append(dataset.sinograms[degrees].values.sum(axis=1) * dgrid.p_spacing)
        solution = np.linalg.lstsq(np.concatenate(design), np.concatenate(moments), rcond=None)[0]
        return solution

    def _recover_solenoidal(self, dataset: GrtDataset, rows: np.ndarray, grid: Grid) -> Tuple[TensorField, float]:
        """
        v_0 of an order m >= 1 field.

        Along each ray the slice spectrum of v_0 is the tangential part of
        f^(sigma omega), which jumps at the origin. Gridding |sigma|^2 times it
        removes the jump; the division by |xi|^2 happens on the target grid,
        where the xi = 0 value is the field integral.
        """
        n, m = dataset.n, dataset.m
        data, residue = self.invert_rows(rows, dataset.dgrid, grid, radial_power=1)
        self._check_residue(residue)
        spectrum = forward_transform(TensorField(grid, m, data)).data
        radius2 = np.sum(grid.frequencies() ** 2, axis=-1)
        origin = radius2 == 0.0
        spectrum = spectrum / np.where(origin, 1.0, radius2)[..., np.newaxis]
        spectrum[origin] = self.field_integral(dataset) * (2.0 * math.pi) ** (-n / 2.0)
        v = inverse_transform(SpectralField(grid, m, spectrum))
        return self.decomposition.solenoidal_part(v), residue

    def recover_component_with_report(self, dataset: GrtDataset, i: int, grid: Grid) -> Tuple[TensorField, StageReport]:
        rows = self.assemble_rows(dataset, i)
        k = dataset.m - i
        range_residual = 0.0
        if i == 0 and k > 0:
            v, residue = self._recover_solenoidal(dataset, rows, grid)
        else:
            data, residue = self.invert_rows(rows, dataset.dgrid, grid)
            self._check_residue(residue)
            w = TensorField(grid, k, data)
            v = self.decomposition.solve_delta_d(w, i, solenoidal=i < dataset.m, tolerance=self.range_tolerance)
            if i > 0 and w.norm() > 0:
                range_residual = (self.decomposition.delta_d_apply(v, i) - w).norm() / w.norm()
        report = StageReport(
            component=i,
            order=k,
            assembled_max=float(np.max(np.abs(rows))) if rows.size else 0.0,
            imag_residue=residue,
            range_residual=float(range_residual),
        )
        logger.info(
            f"Recovered v_{i} (order {k}): imaginary residue {residue:.2e}, range residual {range_residual:.2e}"
        )
        return v, report

    def recover_component(self, dataset: GrtDataset, i: int, grid: Grid) -> TensorField:
        """
        Recover v_i of the decomposition from the l_n = i data family.

        Args:
            dataset: Frame-parametrized data
            i: Component index 0..m
            grid: Target grid

        Returns:
            Field of order m - i
        """
        return self.recover_component_with_report(dataset, i, grid)[0]

    def invert_full_with_report(self, dataset: GrtDataset, grid: Grid) -> Tuple[TensorField, List[StageReport]]:
        missing = {i: dataset.missing(i) for i in range(dataset.m + 1) if dataset.missing(i)}
        if missing:
            raise IncompleteDatasetError(f"Incomplete dataset: missing signatures {sorted(sum(missing.values(), []))}")
        total = TensorField.zeros(grid, dataset.m)
        reports = []
        for i in range(dataset.m + 1):
            v, report = self.recover_component_with_report(dataset, i, grid)
            total = total + apply_d_power(v, i)
            reports.append(report)
        return total, reports

    def invert_full(self, dataset: GrtDataset, grid: Grid) -> TensorField:
        """Reassemble f = sum_i d^i v_i from the complete dataset."""
        return self.invert_full_with_report(dataset, grid)[0]


# Create a default instance of the service
inversion_service = InversionService()


# Functions for backward compatibility
def radon_invert(g: Sinogram, grid: Grid) -> TensorField:
    return inversion_service.radon_invert(g, grid)


def assemble_normal_data(dataset: GrtDataset, i: int) -> List[Sinogram]:
    return inversion_service.assemble_normal_data(dataset, i)


def recover_component(dataset: GrtDataset, i: int, grid: Grid) -> TensorField:
    return inversion_service.recover_component(dataset, i, grid)


def invert_full(dataset: GrtDataset, grid: Grid) -> TensorField:
    return inversion_service.invert_full(dataset, grid)
