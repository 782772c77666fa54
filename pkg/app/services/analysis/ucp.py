"""
Unique Continuation Experiments.

This module provides the two experiments around unique continuation for
generalized Radon data on a ball U:

- odd n: data built from a compactly supported offset profile vanishes on
  every hyperplane meeting U, yet the recovered component v_i is nonzero
  (it lives in the shell 1 < |x| < a and vanishes on U);
- even n: fields whose component v_i vanishes on U but not identically
  always leave nonzero data on hyperplanes meeting U; the margin is
  measured.

Both build v_i as the solenoidal field ((|xi|^2 I - xi xi^T)^{(x)k} E) psi^,
k = m - i. For odd n psi is radial and only its transform is needed; for
even n psi is a polynomial on the shell and v_i is evaluated in real space,
so it is exactly zero on U.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P
from numpy.polynomial.legendre import leggauss
from scipy.signal import convolve

from app.config.settings import (
    DEFAULT_SEED,
    UCP_EXTERIOR_FLOOR,
    UCP_MARGIN_THRESHOLD,
    UCP_RATIO_THRESHOLD,
)
from app.models.reports import UcpRegion, UcpReport, verdict_of
from app.services.algebra.symtensor import (
    compress,
    degree_signatures,
    expand,
    frame_tensor_coeffs,
    pair_coeffs,
    sym_product_coeffs,
    vector_power,
)
from app.services.decomposition.decomp import apply_d_power, derivative_wavevectors
from app.services.fields.field import Grid, SpectralField, TensorField, inverse_transform, relative_error
from app.services.inversion.invert import GrtDataset, InversionService, inversion_service
from app.services.transforms.directions import DirectionGrid, default_direction_grid
from app.services.transforms.radon import Parametrization, RadonService, Sinogram, radon_service
from app.utils.errors import UcpConfigurationError

# Configure logging
logger = logging.getLogger(__name__)

ZERO_DATA_TOLERANCE = 1e-14


@dataclass
class BumpProfile:
    """
    Even profile q(p) = c ((|p| - 1)(a - |p|))^K on 1 < |p| < a, zero elsewhere.

    K - 1 derivatives are continuous; c normalizes the peak to amplitude.
    """
    a: float
    smoothness: int
    amplitude: float = 1.0
    inner: float = 1.0

    def __post_init__(self):
        if not self.a > self.inner:
            raise UcpConfigurationError(f"Profile support ({self.inner}, {self.a}) is empty")
        if self.smoothness < 1:
            raise UcpConfigurationError(f"Profile smoothness must be positive, got {self.smoothness}")
        base = Polynomial([-self.inner, 1.0]) * Polynomial([self.a, -1.0])
        peak = ((self.a - self.inner) / 2.0) ** (2 * self.smoothness)
        self.polynomial = base ** self.smoothness * (self.amplitude / peak)

    def derivative(self, p: np.ndarray, order: int = 0) -> np.ndarray:
        """q^(order)(p); for p < 0 the even extension contributes (-1)^order."""
        p = np.asarray(p, dtype=float)
        r = np.abs(p)
        inside = (r > self.inner) & (r < self.a)
        values = self.polynomial.deriv(order)(r) if order else self.polynomial(r)
        sign = np.where(p < 0, (-1.0) ** order, 1.0)
        return np.where(inside, values * sign, 0.0)

    def spectrum(self, s: np.ndarray, nodes: int = 96) -> np.ndarray:
        """1-D transform (2 pi)^{-1/2} int q(p) exp(-i p s) dp by Gauss-Legendre."""
        x, w = leggauss(nodes)
        p = 0.5 * (self.a - self.inner) * x + 0.5 * (self.a + self.inner)
        w = 0.5 * (self.a - self.inner) * w
        s = np.asarray(s, dtype=float)
        kernel = np.cos(np.multiply.outer(s, p))
        return 2.0 * (kernel @ (w * self.polynomial(p))) / math.sqrt(2.0 * math.pi)


def validate_profile(profile: BumpProfile, offsets: np.ndarray, region_radius: float = 1.0):
    """Support in region_radius < |p| < a and evenness, checked on the offset grid."""
    values = profile.derivative(offsets)
    outside = (np.abs(offsets) <= region_radius) | (np.abs(offsets) >= profile.a)
    if np.any(values[outside] != 0.0):
        raise UcpConfigurationError("Offset profile does not vanish on |p| <= 1 and |p| >= a")
    # compare h(p) with h(-p) at the same points; a mirrored float grid is not exactly symmetric
    mirrored = profile.derivative(-np.asarray(offsets, dtype=float))
    if not np.allclose(values, mirrored, rtol=0.0, atol=1e-14 * max(np.max(np.abs(values)), 1.0)):
        raise UcpConfigurationError("Offset profile must be even")


def default_tensor(n: int, k: int) -> np.ndarray:
    """Constant tensor e^{(.)k} for a fixed generic unit vector e."""
    e = np.arange(1, n + 1, dtype=float)
    return vector_power(e / np.linalg.norm(e), k)


def transverse_spectrum(xi: np.ndarray, tensor: np.ndarray, k: int) -> np.ndarray:
    """
    (|xi|^2 I - xi xi^T)^{(x)k} applied to a constant order-k tensor.

    Args:
        xi: Wavevectors, shape (F, n)
        tensor: Stored coefficients of E
        k: Order of E

    Returns:
        Coefficients, shape (F, C_k)
    """
    n = xi.shape[-1]
    if k == 0:
        return np.broadcast_to(np.asarray(tensor, dtype=float), (xi.shape[0], 1)).copy()
    projector = np.einsum("f,ij->fij", np.sum(xi * xi, axis=1), np.eye(n)) - np.einsum("fi,fj->fij", xi, xi)
    dense = np.broadcast_to(expand(tensor, n, k), (xi.shape[0],) + (n,) * k).copy()
    for axis in range(1, k + 1):
        moved = np.moveaxis(dense, axis, -1)
        moved = np.einsum("fij,f...j->f...i", projector, moved)
        dense = np.moveaxis(moved, -1, axis)
    return compress(dense, n, k)


def solenoidal_from_scalar(psi_hat: SpectralField, k: int, tensor: Optional[np.ndarray] = None) -> SpectralField:
    """Spectrum of the solenoidal order-k field ((|xi|^2 I - xi xi^T)^{(x)k} E) psi^."""
    grid = psi_hat.grid
    tensor = default_tensor(grid.n, k) if tensor is None else np.asarray(tensor)
    xi = derivative_wavevectors(grid).reshape(-1, grid.n)
    factor = transverse_spectrum(xi, tensor, k)
    data = psi_hat.data.reshape(-1, 1) * factor
    return SpectralField(grid, k, data.reshape(grid.shape + (-1,)))


def _masked_norm(field: TensorField, mask: np.ndarray) -> float:
    density = np.real(pair_coeffs(field.data, field.data, field.n, field.m))
    return math.sqrt(max(float(np.sum(density[mask])) * field.grid.cell_volume(), 0.0))


def _region_norms(field: TensorField, inner: float, outer: float) -> tuple:
    radius = np.linalg.norm(field.grid.coordinates(), axis=-1)
    total = field.norm()
    if total == 0.0:
        return 0.0, 0.0
    interior = _masked_norm(field, radius < inner) / total
    exterior = _masked_norm(field, (radius > inner) & (radius < outer)) / total
    return interior, exterior


def _poly_derivative(coeffs: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Partial derivative of a coefficient array, zero-padded back to its shape."""
    if order == 0:
        return coeffs
    result = P.polyder(coeffs, order, axis=axis)
    padding = [(0, 0)] * coeffs.ndim
    padding[axis] = (0, order)
    return np.pad(result, padding)


def _poly_values(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate an n-variate coefficient array at points of shape (Q, n)."""
    values = P.polyval(points[:, 0], coeffs)
    for axis in range(1, points.shape[1]):
        values = P.polyval(points[:, axis], values, tensor=False)
    return values


def shell_polynomial(n: int, c0: float, c: np.ndarray, inner: float, outer: float, smoothness: int,
                     amplitude: float = 1.0) -> np.ndarray:
    """
    Coefficients of (c_0 + c . x) ((|x|^2 - inner^2)(outer^2 - |x|^2))^K.

    The bump factor peaks at amplitude on the middle sphere and has K - 1
    continuous derivatives across both boundary spheres.
    """
    unit = np.zeros((3,) * n)
    unit[(0,) * n] = 1.0
    square = np.zeros((3,) * n)
    for axis in range(n):
        index = [0] * n
        index[axis] = 2
        square[tuple(index)] = 1.0
    factor = convolve(square - inner ** 2 * unit, outer ** 2 * unit - square, method="direct")
    bump = unit
    for _ in range(smoothness):
        bump = convolve(bump, factor, method="direct")
    linear = np.zeros((2,) * n)
    linear[(0,) * n] = c0
    for axis in range(n):
        index = [0] * n
        index[axis] = 1
        linear[tuple(index)] = c[axis]
    peak = ((outer ** 2 - inner ** 2) / 2.0) ** (2 * smoothness)
    return convolve(bump, linear, method="direct") * (amplitude / peak)


def transverse_polynomials(psi: np.ndarray, tensor: np.ndarray, k: int) -> np.ndarray:
    """
    ((-Laplacian) I + grad grad^T)^{(x)k} E applied to a polynomial psi.

    Real-space form of transverse_spectrum; returns stored coefficients
    along the last axis, polynomial axes first.
    """
    n = psi.ndim
    dense = psi.reshape(psi.shape + (1,) * k) * expand(np.asarray(tensor, dtype=float), n, k)
    for slot in range(n, n + k):
        laplacian = sum(_poly_derivative(dense, axis, 2) for axis in range(n))
        divergence = sum(_poly_derivative(np.take(dense, b, axis=slot), b) for b in range(n))
        gradient = np.stack([_poly_derivative(divergence, a) for a in range(n)], axis=slot)
        dense = gradient - laplacian
    return compress(dense, n, k)


def d_polynomials(coeffs: np.ndarray, order: int, power: int) -> np.ndarray:
    """d^power (symmetrized gradient) of a polynomial tensor field of the given order."""
    n = coeffs.ndim - 1
    for level in range(order, order + power):
        coeffs = sum(
            sym_product_coeffs(np.eye(n)[a], _poly_derivative(coeffs, a), n, 1, level) for a in range(n)
        )
    return coeffs


class UcpService:
    """Service for the unique continuation experiments"""

    def __init__(
        self,
        ratio_threshold: float = UCP_RATIO_THRESHOLD,
        exterior_floor: float = UCP_EXTERIOR_FLOOR,
        margin_threshold: float = UCP_MARGIN_THRESHOLD,
        inversion: Optional[InversionService] = None,
        radon: Optional[RadonService] = None,
    ):
        self.ratio_threshold = ratio_threshold
        self.exterior_floor = exterior_floor
        self.margin_threshold = margin_threshold
        self.inversion = inversion or inversion_service
        self.radon = radon or radon_service

    def counterexample_data(self, n: int, m: int, i: int, profile: BumpProfile, dgrid: DirectionGrid,
                            tensor: np.ndarray) -> GrtDataset:
        """
        Frame data of the l_n = i family in closed form:
        g_l = (-1)^k q^(2k+i)(p) <E, omega_1^{l_1} (.) ..> / C(m, i).

        This is the data of d^i v_i for v_i built from the radial psi with
        R psi = q (see _reference_component); for m = 0 it is q itself.
        The derivatives keep the support in 1 < |p| < a.
        """
        k = m - i
        offsets = dgrid.offsets()
        profile_row = profile.derivative(offsets, 2 * k + i) * (-1) ** k / math.comb(m, i)
        frames = dgrid.frames()
        sinograms = {}
        for degrees in _family(n, m, i):
            tangential = frame_tensor_coeffs(frames, dgrid.omegas, degrees[:-1] + (0,))
            weights = pair_coeffs(tangential, tensor, n, k)
            sinograms[degrees] = Sinogram(m, degrees, dgrid, np.outer(weights, profile_row), Parametrization.frame)
        return GrtDataset(n, m, dgrid, sinograms)

    def ucp_counterexample(
        self,
        n: int,
        m: int,
        i: int,
        degree: Optional[Sequence[int]] = None,
        a: float = 2.0,
        grid: Optional[Grid] = None,
        dgrid: Optional[DirectionGrid] = None,
        smoothness: Optional[int] = None,
        amplitude: float = 1.0,
        tensor: Optional[np.ndarray] = None,
    ) -> UcpReport:
        """
        Odd-dimensional non-uniqueness: data vanishing on planes meeting U with v_i nonzero.

        Args:
            n: Odd dimension >= 3
            m: Tensor order
            i: Component index 0..m
            degree: Signature of the family (l_n must equal i); used for reporting
            a: Outer support radius of the profile, 1 < a < L
            grid: Reconstruction grid (default N = 48 on [-3, 3]^n)
            dgrid: Direction grid (default 1000 normals for n = 3)
            smoothness: Exponent K of the profile (default 2(m - i) + i + 4)
            amplitude: Peak of the profile; 0 gives the trivial dataset
            tensor: Constant tensor E of order m - i

        Returns:
            UcpReport on the unit ball U
        """
        if n % 2 == 0 or n < 3:
            raise UcpConfigurationError(f"The counterexample needs odd n >= 3, got n={n}")
        if not 0 <= i <= m:
            raise UcpConfigurationError(f"Component index must lie in 0..{m}, got {i}")
        if degree is not None and (len(degree) != n or sum(degree) != m or degree[-1] != i):
            raise UcpConfigurationError(f"Signature {tuple(degree)} is not in the l_n = {i} family of order {m}")
        grid = grid or Grid(n, 3.0, 48)
        if not a < grid.half_width:
            raise UcpConfigurationError(f"Support radius a={a} must stay inside the cube of half width {grid.half_width}")
        k = m - i
        smoothness = smoothness or 2 * k + i + 4
        profile = BumpProfile(a=a, smoothness=smoothness, amplitude=amplitude)
        dgrid = dgrid or default_direction_grid(grid, count=1000 if n == 3 else None, with_tangents=False)
        if dgrid.p_count * dgrid.p_spacing < a:
            raise UcpConfigurationError(f"Offset grid reaches {dgrid.p_count * dgrid.p_spacing:.3g} < a={a}")
        validate_profile(BumpProfile(a=a, smoothness=smoothness), dgrid.offsets())
        tensor = default_tensor(n, k) if tensor is None else np.asarray(tensor, dtype=float)

        dataset = self.counterexample_data(n, m, i, profile, dgrid, tensor)
        inside = np.abs(dgrid.offsets()) < 1.0
        data_scale = max((s.max_abs() for s in dataset.sinograms.values()), default=0.0)
        data_on_u = max((float(np.max(np.abs(s.values[:, inside]))) for s in dataset.sinograms.values()), default=0.0)

        v, stage = self.inversion.recover_component_with_report(dataset, i, grid)
        interior, exterior = _region_norms(v, 1.0, a)
        field = apply_d_power(v, i)
        field_interior, field_exterior = _region_norms(field, 1.0, a)

        reference = self._reference_component(grid, profile, k, tensor)
        reference_error = relative_error(v, reference) if reference.norm() > 0 else v.norm()

        ok = (
            data_on_u <= ZERO_DATA_TOLERANCE * max(data_scale, 1.0)
            and exterior > self.exterior_floor
            and interior <= self.ratio_threshold * exterior
        )
        report = UcpReport(
            experiment="ucp-odd",
            n=n,
            m=m,
            component=i,
            region=UcpRegion(center=[0.0] * n, radius=1.0),
            interior_norm=interior,
            exterior_norm=exterior,
            data_norm_on_U_planes=data_on_u,
            verdict=verdict_of(ok),
            details={
                "a": a,
                "smoothness": smoothness,
                "degree": list(degree) if degree is not None else None,
                "family": [list(d) for d in dataset.sinograms],
                "data_max": data_scale,
                "field_interior_norm": field_interior,
                "field_exterior_norm": field_exterior,
                "reference_error": reference_error,
                "imag_residue": stage.imag_residue,
                "range_residual": stage.range_residual,
            },
        )
        logger.info(
            f"UCP odd n={n} m={m} i={i}: interior {interior:.3e}, exterior {exterior:.3e}, "
            f"data on U-planes {data_on_u:.1e} -> {report.verdict.value}"
        )
        return report

    def _reference_component(self, grid: Grid, profile: BumpProfile, k: int, tensor: np.ndarray) -> TensorField:
        """v_i built spectrally from the radial psi with R psi = q."""
        radius = np.linalg.norm(grid.frequencies(), axis=-1)
        psi_hat = profile.spectrum(radius.reshape(-1)).reshape(grid.shape + (1,)) / (2.0 * math.pi) ** ((grid.n - 1) / 2.0)
        return inverse_transform(solenoidal_from_scalar(SpectralField(grid, 0, psi_hat), k, tensor))

    def shell_component(self, grid: Grid, rng: np.random.Generator, k: int, i: int, tensor: np.ndarray,
                        inner: float = 1.0, outer: float = 2.0, smoothness: Optional[int] = None,
                        amplitude: float = 1.0) -> Tuple[TensorField, TensorField]:
        """
        Solenoidal v supported in inner <= |x| <= outer, and d^i v.

        v is the transverse operator applied to E psi with the shell
        polynomial psi of random c_0, c; both fields are evaluated exactly
        inside the shell and are zero elsewhere.

        Returns:
            (v of order k, d^i v of order k + i)
        """
        n = grid.n
        smoothness = smoothness or 2 * k + i + 4
        psi = shell_polynomial(n, rng.normal(), rng.normal(size=n), inner, outer, smoothness, amplitude)
        v_coeffs = transverse_polynomials(psi, tensor, k)
        f_coeffs = d_polynomials(v_coeffs, k, i)

        x = grid.coordinates()
        radius = np.linalg.norm(x, axis=-1)
        shell = (radius > inner) & (radius < outer)
        fields = []
        for order, coeffs in ((k, v_coeffs), (k + i, f_coeffs)):
            data = np.zeros(grid.shape + (coeffs.shape[-1],))
            for c in range(coeffs.shape[-1]):
                data[shell, c] = _poly_values(coeffs[..., c], x[shell])
            fields.append(TensorField(grid, order, data))
        return fields[0], fields[1]

    def ucp_uniqueness_experiment(
        self,
        n: int,
        m: int,
        i: int,
        grid: Optional[Grid] = None,
        dgrid: Optional[DirectionGrid] = None,
        seed: int = DEFAULT_SEED,
        family: str = "single",
        amplitude: float = 1.0,
        tensor: Optional[np.ndarray] = None,
    ) -> UcpReport:
        """
        Even-dimensional experiment: v_i vanishes on U but its data on planes meeting U does not.

        Args:
            n: Even dimension
            m: Tensor order
            i: Component index
            grid: Field grid (default N = 64 on [-6, 6]^n)
            dgrid: Direction grid
            seed: Seed of the shell phantom
            family: "single" uses the l_n = i family, "all" every signature
            amplitude: Scale of the phantom; 0 gives the vacuous case
            tensor: Constant tensor E of order m - i

        Returns:
            UcpReport whose data_norm_on_U_planes is the margin max|g on |p| < 1| / max|g|
        """
        if n % 2:
            raise UcpConfigurationError(f"The uniqueness experiment needs even n, got n={n}")
        if not 0 <= i <= m:
            raise UcpConfigurationError(f"Component index must lie in 0..{m}, got {i}")
        if family not in ("single", "all"):
            raise UcpConfigurationError(f"Unknown data family {family!r}")
        grid = grid or Grid(n, 6.0, 64)
        dgrid = dgrid or default_direction_grid(grid, with_tangents=False)
        rng = np.random.default_rng(seed)
        k = m - i
        tensor = default_tensor(n, k) if tensor is None else np.asarray(tensor, dtype=float)

        vi, f = self.shell_component(grid, rng, k, i, tensor, amplitude=amplitude)

        data = self.radon.grt_all_signatures(f, dgrid)
        selected = [d for d in data if family == "all" or d[-1] == i]
        inside = np.abs(dgrid.offsets()) < 1.0
        scale = max(data[d].max_abs() for d in selected)
        on_u = max(float(np.max(np.abs(data[d].values[:, inside]))) for d in selected)
        margin = on_u / scale if scale > 0 else 0.0
        interior, exterior = _region_norms(vi, 1.0, 2.0)

        ok = (scale == 0.0 or margin >= self.margin_threshold) and interior <= ZERO_DATA_TOLERANCE
        report = UcpReport(
            experiment="ucp-even",
            n=n,
            m=m,
            component=i,
            region=UcpRegion(center=[0.0] * n, radius=1.0),
            interior_norm=interior,
            exterior_norm=exterior,
            data_norm_on_U_planes=margin,
            verdict=verdict_of(ok),
            details={"seed": seed, "family": family, "signatures": [list(d) for d in selected], "data_max": scale},
        )
        logger.info(f"UCP even n={n} m={m} i={i} seed={seed}: margin {margin:.3e} -> {report.verdict.value}")
        return report

    def uniqueness_corpus(self, n: int, m: int, i: int, count: int = 10, seed: int = DEFAULT_SEED,
                          **kwargs) -> List[UcpReport]:
        """The even-n experiment over a seeded corpus of shell phantoms."""
        seeds = np.random.SeedSequence(seed).generate_state(count)
        return [self.ucp_uniqueness_experiment(n, m, i, seed=int(s), **kwargs) for s in seeds]


def _family(n: int, m: int, i: int) -> List[tuple]:
    return [d for d in degree_signatures(n, m) if d[-1] == i]


# Create a default instance of the service
ucp_service = UcpService()


# Functions for backward compatibility
def ucp_counterexample(n: int, m: int, i: int, degree=None, a: float = 2.0, grid: Optional[Grid] = None,
                       **kwargs) -> UcpReport:
    return ucp_service.ucp_counterexample(n, m, i, degree=degree, a=a, grid=grid, **kwargs)


def ucp_uniqueness_experiment(n: int, m: int, i: int, grid: Optional[Grid] = None, **kwargs) -> UcpReport:
    return ucp_service.ucp_uniqueness_experiment(n, m, i, grid=grid, **kwargs)


def ucp_even_corpus(n: int, m: int, i: int, count: int = 10, seed: int = DEFAULT_SEED, **kwargs) -> List[UcpReport]:
    return ucp_service.uniqueness_corpus(n, m, i, count=count, seed=seed, **kwargs)
