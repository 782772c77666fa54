"""
Decomposition Service.

This module provides the inner derivative d, the divergence delta, the
solenoidal-potential decomposition f = sum_i d^i v_i (v_i solenoidal for
i < m) and a solver for delta^i d^i v = w. Everything is diagonal in
frequency: at each xi the operators are small dense matrices acting on
symmetric tensors.

Wavevectors used by the differential operators have their Nyquist
components set to zero, so d and delta map real fields to real fields and
the decomposition is exactly consistent with them.
"""
import logging
import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.config.settings import DECOMPOSITION_TOLERANCE, DELTA_D_RANGE_TOLERANCE
from app.services.algebra.symtensor import (
    contraction_table,
    degree_signatures,
    frame_tensor_coeffs,
    multiplicities,
    product_table,
    sym_dimension,
    sym_product_coeffs,
    tangent_frames,
)
from app.services.fields.field import Grid, SpectralField, TensorField, forward_transform, inverse_transform
from app.utils.errors import DecompositionError, DimensionMismatchError, NotInRangeError

# Configure logging
logger = logging.getLogger(__name__)


def derivative_wavevectors(grid: Grid) -> np.ndarray:
    """Frequency grid with the unpaired Nyquist component zeroed on each axis."""
    xi = grid.frequencies().copy()
    for axis in range(grid.n):
        index = [slice(None)] * grid.n
        index[axis] = 0
        xi[tuple(index) + (axis,)] = 0.0
    return xi


def _weighted_norm(coeffs: np.ndarray, n: int, m: int) -> np.ndarray:
    """Per-sample tensor norm sqrt(sum mult |c|^2)."""
    return np.sqrt(np.einsum("...c,c->...", np.abs(coeffs) ** 2, multiplicities(n, m)))


def d_spectrum(F: SpectralField) -> SpectralField:
    """Symbol of d: v^ -> sigma(i xi (x) v^)."""
    xi = derivative_wavevectors(F.grid)
    return SpectralField(F.grid, F.m + 1, sym_product_coeffs(1j * xi, F.data, F.n, 1, F.m))


def delta_spectrum(F: SpectralField) -> SpectralField:
    """Symbol of delta: u^ -> i xi contracted into the last index."""
    if F.m < 1:
        raise DimensionMismatchError("Divergence needs a tensor field of order >= 1")
    xi = derivative_wavevectors(F.grid)
    return SpectralField(F.grid, F.m - 1, np.einsum("...c,...i,cid->...d", F.data, 1j * xi, contraction_table(F.n, F.m)))


def apply_d(v: TensorField) -> TensorField:
    """
    Inner derivative, the symmetrized gradient.

    Args:
        v: Field of order k

    Returns:
        Field of order k + 1
    """
    return inverse_transform(d_spectrum(forward_transform(v)))


def apply_delta(u: TensorField) -> TensorField:
    """Divergence, lowering the order by one."""
    if u.m < 1:
        raise DimensionMismatchError(f"apply_delta needs order >= 1, got {u.m}")
    return inverse_transform(delta_spectrum(forward_transform(u)))


def apply_d_power(v: TensorField, power: int) -> TensorField:
    """d^power in a single round trip through the spectrum."""
    F = forward_transform(v)
    for _ in range(power):
        F = d_spectrum(F)
    return inverse_transform(F)


def delta_d_matrices(xi: np.ndarray, n: int, k: int, i: int) -> np.ndarray:
    """
    Per-frequency matrices of delta^i d^i on order-k tensors.

    Args:
        xi: Wavevectors, shape (F, n)
        n: Dimension
        k: Order of the argument
        i: Power

    Returns:
        Real array of shape (F, C_k, C_k)
    """
    count = xi.shape[0]
    size = sym_dimension(n, k)
    result = np.broadcast_to(np.eye(size), (count, size, size)).astype(complex)
    for level in range(k, k + i):
        # d from order level to level + 1: D[c, b] = sum_j i xi_j T[j, b, c]
        step = np.einsum("fj,jbc->fcb", 1j * xi, product_table(n, 1, level))
        result = step @ result
    for level in range(k + i, k, -1):
        # delta from order level to level - 1: Delta[d, c] = sum_j i xi_j T[c, j, d]
        step = np.einsum("fj,cjd->fdc", 1j * xi, contraction_table(n, level))
        result = step @ result
    return np.real(result)


def _solenoidal_basis(omegas: np.ndarray, n: int, k: int) -> np.ndarray:
    """Tangential frame tensors spanning the solenoidal subspace at each omega, shape (F, C_k, S)."""
    tangents = tangent_frames(omegas)
    columns = [frame_tensor_coeffs(tangents, omegas, degrees + (0,)) for degrees in degree_signatures(n - 1, k)] \
        if n > 1 else []
    return np.stack(columns, axis=-1)


class DecompositionResult(BaseModel):
    """Fields v_0 .. v_m with reconstruction residual and solenoidality certificates."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    v: List[TensorField]
    residual: float
    solenoidality: List[float]

    def norm_ratios(self, f: TensorField) -> List[float]:
        """||v_i|| / (sqrt(C(m, i)) (L / pi)^i ||f||); never above 1."""
        scale = f.norm()
        if scale == 0.0:
            return [0.0 for _ in self.v]
        L = f.grid.half_width
        return [
            vi.norm() / (math.sqrt(math.comb(f.m, i)) * (L / math.pi) ** i * scale)
            for i, vi in enumerate(self.v)
        ]


class DecompositionService:
    """Service for the solenoidal-potential decomposition and delta^i d^i solves"""

    def __init__(self, tolerance: float = DECOMPOSITION_TOLERANCE,
                 range_tolerance: float = DELTA_D_RANGE_TOLERANCE):
        self.tolerance = tolerance
        self.range_tolerance = range_tolerance

    def decompose(self, f: TensorField) -> DecompositionResult:
        """
        Split f into sum_i d^i v_i with v_0 .. v_{m-1} solenoidal.

        At each xi != 0 the frame tensors of xi/|xi| form a basis of order-m
        tensors; the coefficients with l_n = i belong to d^i v_i. At xi = 0
        all of f goes to v_0.

        Args:
            f: Order-m field

        Returns:
            DecompositionResult
        """
        n, m, grid = f.n, f.m, f.grid
        spectrum = forward_transform(f).data.reshape(-1, sym_dimension(n, m))
        xi = derivative_wavevectors(grid).reshape(-1, n)
        radius = np.linalg.norm(xi, axis=1)
        active = radius > 0
        signatures = degree_signatures(n, m)
        tangents, omegas, _, coefficients = self._frame_coefficients(spectrum, xi, m)

        components = []
        for i in range(m + 1):
            k = m - i
            vi = np.zeros((xi.shape[0], sym_dimension(n, k)), dtype=complex)
            scale = np.zeros_like(radius, dtype=complex)
            scale[active] = 1.0 / (1j * radius[active]) ** i
            for position, degrees in enumerate(signatures):
                if degrees[-1] != i:
                    continue
                tensor = frame_tensor_coeffs(tangents, omegas, degrees[:-1] + (0,))
                vi += (coefficients[:, position] * scale)[:, np.newaxis] * tensor
            if i == 0:
                vi[~active] = spectrum[~active]
            else:
                vi[~active] = 0.0
            components.append(SpectralField(grid, k, vi.reshape(grid.shape + (-1,))))

        fields = [inverse_transform(component) for component in components]
        solenoidality = [self._solenoidality(component) for component in components[:m]]
        residual = self._residual(f, components)
        if residual > self.tolerance:
            logger.warning(f"Decomposition residual {residual:.3e} above tolerance {self.tolerance:.1e}")
        return DecompositionResult(v=fields, residual=residual, solenoidality=solenoidality)

    def _frame_coefficients(self, spectrum: np.ndarray, xi: np.ndarray, m: int):
        """Solve spectrum = sum_l c_l T_l(xi / |xi|) at every frequency; returns (tangents, omegas, basis, c)."""
        n = xi.shape[-1]
        radius = np.linalg.norm(xi, axis=1)
        active = radius > 0
        omegas = np.zeros_like(xi)
        omegas[active] = xi[active] / radius[active, np.newaxis]
        # any unit vector serves at xi = 0; the result there is overwritten
        omegas[~active, -1] = 1.0

        tangents = tangent_frames(omegas)
        basis = np.stack([frame_tensor_coeffs(tangents, omegas, degrees) for degrees in degree_signatures(n, m)], axis=-1)
        try:
            coefficients = np.linalg.solve(basis, spectrum[..., np.newaxis])[..., 0]
        except np.linalg.LinAlgError as e:
            logger.error(f"Frame basis turned singular during decomposition: {e}")
            raise DecompositionError(f"Singular frame basis in decomposition of an order-{m} field") from e
        misfit = np.linalg.norm(np.einsum("fcs,fs->fc", basis, coefficients) - spectrum, axis=1)
        worst = int(np.argmax(misfit)) if misfit.size else 0
        if misfit.size and misfit[worst] > 1e-8 * max(np.max(np.abs(spectrum)), 1e-300):
            raise DecompositionError(f"Constrained system unsolved at xi={xi[worst].tolist()}: misfit {misfit[worst]:.3e}")
        return tangents, omegas, basis, coefficients

    def potential_terms(self, spectrum: np.ndarray, xi: np.ndarray, m: int) -> np.ndarray:
        """
        Spectra of the terms d^i v_i at arbitrary frequencies.

        Args:
            spectrum: Values of f^, shape (P, C_m)
            xi: Frequencies, shape (P, n)
            m: Order of f

        Returns:
            Array (m + 1, P, C_m); at xi = 0 everything sits in the i = 0 term
        """
        n = xi.shape[-1]
        _, _, basis, coefficients = self._frame_coefficients(spectrum, xi, m)
        active = np.linalg.norm(xi, axis=1) > 0
        terms = np.zeros((m + 1,) + spectrum.shape, dtype=complex)
        for position, degrees in enumerate(degree_signatures(n, m)):
            terms[degrees[-1]] += coefficients[:, position, np.newaxis] * basis[:, :, position]
        terms[:, ~active] = 0.0
        terms[0, ~active] = spectrum[~active]
        return terms

    def _solenoidality(self, component: SpectralField) -> float:
        if component.m == 0:
            return 0.0
        xi = derivative_wavevectors(component.grid)
        radius = np.linalg.norm(xi, axis=-1, keepdims=True)
        unit = np.divide(xi, radius, out=np.zeros_like(xi), where=radius > 0)
        contracted = np.einsum("...c,...i,cid->...d", component.data, unit, contraction_table(component.n, component.m))
        size = np.max(_weighted_norm(component.data, component.n, component.m))
        if size == 0.0:
            return 0.0
        return float(np.max(_weighted_norm(contracted, component.n, component.m - 1)) / size)

    def _residual(self, f: TensorField, components: List[SpectralField]) -> float:
        target = forward_transform(f)
        total = np.zeros_like(target.data)
        for i, component in enumerate(components):
            term = component
            for _ in range(i):
                term = d_spectrum(term)
            total += term.data
        gap = SpectralField(f.grid, f.m, total - target.data).norm()
        scale = target.norm()
        return float(gap / scale) if scale > 0 else float(gap)

    def delta_d_apply(self, v: TensorField, i: int) -> TensorField:
        """Apply delta^i d^i through the per-frequency matrices."""
        if i < 0:
            raise ValueError(f"Power must be non-negative, got {i}")
        if i == 0:
            return TensorField(v.grid, v.m, v.data.copy())
        spectrum = forward_transform(v)
        xi = derivative_wavevectors(v.grid).reshape(-1, v.n)
        matrices = delta_d_matrices(xi, v.n, v.m, i)
        data = np.einsum("fab,fb->fa", matrices, spectrum.data.reshape(xi.shape[0], -1))
        return inverse_transform(SpectralField(v.grid, v.m, data.reshape(spectrum.data.shape)))

    def solve_delta_d(self, w: TensorField, i: int, solenoidal: bool = True,
                      tolerance: Optional[float] = None) -> TensorField:
        """
        Solve delta^i d^i v = w frequency by frequency.

        Args:
            w: Right-hand side of order k
            i: Power
            solenoidal: Restrict v to xi-contraction-free tensors
            tolerance: Relative range tolerance, defaults to the service setting

        Returns:
            The solution v; its xi = 0 component is zero

        Raises:
            NotInRangeError: A frequency leaves a residual above tolerance
        """
        if i < 0:
            raise ValueError(f"Power must be non-negative, got {i}")
        if i == 0:
            return TensorField(w.grid, w.m, w.data.copy())
        tolerance = self.range_tolerance if tolerance is None else tolerance
        n, k = w.n, w.m
        spectrum = forward_transform(w)
        rhs = spectrum.data.reshape(-1, sym_dimension(n, k))
        xi = derivative_wavevectors(w.grid).reshape(-1, n)
        radius = np.linalg.norm(xi, axis=1)
        active = radius > 0
        matrices = delta_d_matrices(xi, n, k, i)

        solution = np.zeros_like(rhs)
        if solenoidal and k > 0:
            omegas = xi[active] / radius[active, np.newaxis]
            basis = _solenoidal_basis(omegas, n, k)
            reduced = matrices[active] @ basis
            weights = np.linalg.pinv(reduced, rcond=1e-10) @ rhs[active][..., np.newaxis]
            solution[active] = (basis @ weights)[..., 0]
        else:
            inverse = np.linalg.pinv(matrices[active], rcond=1e-10)
            solution[active] = (inverse @ rhs[active][..., np.newaxis])[..., 0]

        misfit = _weighted_norm(np.einsum("fab,fb->fa", matrices, solution) - rhs, n, k)
        scale = np.max(_weighted_norm(rhs, n, k)) if rhs.size else 0.0
        worst = int(np.argmax(misfit))
        if scale > 0 and misfit[worst] > tolerance * scale:
            logger.error(f"delta^{i} d^{i} data not in range: residual {misfit[worst] / scale:.3e} at xi={xi[worst].tolist()}")
            raise NotInRangeError(
                f"Data not in the range of delta^{i} d^{i}: relative residual {misfit[worst] / scale:.3e} "
                f"exceeds {tolerance:.1e} at xi={xi[worst].tolist()}"
            )
        return inverse_transform(SpectralField(w.grid, k, solution.reshape(spectrum.data.shape)))

    def solenoidal_part(self, f: TensorField) -> TensorField:
        """The v_0 component: projection of f onto solenoidal fields (for m >= 1)."""
        return self.decompose(f).v[0]


# Create a default instance of the service
decomposition_service = DecompositionService()


# Functions for backward compatibility
def decompose(f: TensorField) -> DecompositionResult:
    return decomposition_service.decompose(f)


def delta_d_apply(v: TensorField, i: int) -> TensorField:
    return decomposition_service.delta_d_apply(v, i)


def solve_delta_d(w: TensorField, i: int, solenoidal: bool = True, tolerance: Optional[float] = None) -> TensorField:
    return decomposition_service.solve_delta_d(w, i, solenoidal, tolerance)


def solenoidal_part(f: TensorField) -> TensorField:
    return decomposition_service.solenoidal_part(f)
