"""
Weighted Sobolev Norm Service.

This module provides quadratures of the Fourier-side norms
    ||f||^2 = int |y|^{2t} (1 + |y|^2)^{s-t} |f^(y)|^2 dy
on R^n, on S^{n-1} x R and on the tangent bundle Z (both with the prefactor
1 / (2 (2 pi)^{n-1})), a tensor-weighted variant, and the isometry check
between GRT data and the field.
"""
import logging
import math
from typing import Optional, Sequence, Union

import numpy as np

from app.config.settings import P_PADDING
from app.models.reports import ReshetnyakReport, SobolevIndex
from app.services.algebra.symtensor import direction_tensor_coeffs, multiplicities, pair_coeffs, tangent_frames
from app.services.fields.field import TensorField, forward_transform
from app.services.transforms.directions import circle_tangents, default_direction_grid, sphere_area
from app.services.transforms.ptransform import p_forward, p_frequencies, pad_offsets
from app.services.transforms.radon import Parametrization, RadonService, Sinogram, radon_service
from app.utils.errors import DimensionMismatchError

# Configure logging
logger = logging.getLogger(__name__)

CIRCLE_POINTS = 32


def _radial_weight(radius: np.ndarray, exponent: float, smooth: float) -> np.ndarray:
    """|r|^exponent (1 + r^2)^smooth, zero where the power is singular at r = 0."""
    r = np.abs(radius)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(r > 0, r ** exponent, 1.0 if exponent == 0 else 0.0) * (1.0 + r * r) ** smooth
    return weight


def _sphere_tangents(unit: np.ndarray) -> tuple:
    """Tangent unit vectors v in y^perp and their weights: 2 points (n = 2), a circle rule (n = 3)."""
    n = unit.shape[-1]
    frames = tangent_frames(unit)
    if n == 2:
        vectors = np.stack([frames[:, 0, :], -frames[:, 0, :]], axis=1)
        return vectors, np.ones(2)
    if n == 3:
        return circle_tangents(frames, CIRCLE_POINTS), np.full(CIRCLE_POINTS, sphere_area(2) / CIRCLE_POINTS)
    raise DimensionMismatchError(f"Tensor-weighted norms are available for n = 2, 3, not n={n}")


class NormService:
    """Service for weighted Sobolev norms and the isometry check"""

    def __init__(self, p_padding: int = P_PADDING, radon: Optional[RadonService] = None):
        self.p_padding = p_padding
        self.radon = radon or radon_service

    def field_norm(self, f: TensorField, idx: SobolevIndex, degree: Optional[Sequence[int]] = None) -> float:
        """
        Norm of a field on R^n.

        Args:
            f: Tensor field
            idx: Sobolev index
            degree: (l1, l2) for the tensor-weighted variant

        Returns:
            The norm (not squared)
        """
        idx.check_dimension(f.n)
        spectrum = forward_transform(f)
        xi = f.grid.frequencies().reshape(-1, f.n)
        coeffs = spectrum.data.reshape(xi.shape[0], -1)
        radius = np.linalg.norm(xi, axis=1)
        if degree is None:
            density = np.real(pair_coeffs(coeffs, np.conj(coeffs), f.n, f.m))
            weight = _radial_weight(radius, 2 * idx.t, idx.s - idx.t)
        else:
            l1, l2 = degree
            if l1 + l2 != f.m:
                raise DimensionMismatchError(f"Degree {tuple(degree)} does not sum to m={f.m}")
            active = radius > 0
            unit = np.zeros_like(xi)
            unit[active] = xi[active] / radius[active, np.newaxis]
            unit[~active, -1] = 1.0
            vectors, weights = _sphere_tangents(unit)
            tensors = direction_tensor_coeffs(unit[:, np.newaxis, :], vectors, l1, l2)
            values = np.einsum("fc,fvc,c->fv", coeffs, tensors, multiplicities(f.n, f.m))
            density = np.abs(values) ** 2 @ weights
            weight = _radial_weight(radius, 2 * idx.t + 2 * f.m, idx.s - idx.t)
        total = np.sum(weight * density) * f.grid.frequency_step ** f.n
        return math.sqrt(max(float(total), 0.0))

    def sinogram_norm(self, g: Sinogram, idx: SobolevIndex) -> float:
        """Norm on S^{n-1} x R (scalar or frame data) or on Z (tangent data)."""
        n = g.n
        dgrid = g.dgrid
        padded = pad_offsets(g.values, self.p_padding)
        sigmas = p_frequencies(padded.shape[-1], dgrid.p_spacing)
        spectrum = p_forward(padded, dgrid.p_spacing)
        step = sigmas[1] - sigmas[0]
        exponent = 2 * idx.t
        radial = step * _radial_weight(sigmas, exponent, idx.s - idx.t)
        center = int(np.argmin(np.abs(sigmas)))
        if exponent < 0:
            radial[center] = 0.0
        elif exponent == 1:
            radial[center] = step ** 2 / 6.0
        energy = np.abs(spectrum) ** 2 @ radial
        if g.parametrization == Parametrization.tangent:
            energy = energy @ dgrid.tangent_weights
        total = (energy @ dgrid.weights) / (2.0 * (2.0 * math.pi) ** (n - 1))
        return math.sqrt(max(float(total), 0.0))

    def weighted_norm(self, obj: Union[TensorField, Sinogram], idx: SobolevIndex, domain: str = "Rn",
                      degree: Optional[Sequence[int]] = None) -> float:
        """
        Evaluate a weighted Sobolev norm.

        Args:
            obj: TensorField for domain "Rn", Sinogram for "SxR" or "Z"
            idx: Sobolev index (s, t)
            domain: "Rn", "SxR" or "Z"
            degree: Tensor weight (l1, l2), only for domain "Rn"

        Returns:
            The norm
        """
        if domain == "Rn":
            if not isinstance(obj, TensorField):
                raise DimensionMismatchError("Domain Rn needs a TensorField")
            return self.field_norm(obj, idx, degree)
        if domain in ("SxR", "Z"):
            if not isinstance(obj, Sinogram):
                raise DimensionMismatchError(f"Domain {domain} needs a Sinogram")
            if (domain == "Z") != (obj.parametrization == Parametrization.tangent):
                raise DimensionMismatchError(f"Domain {domain} does not match {obj.parametrization.value} data")
            idx.check_dimension(obj.n)
            return self.sinogram_norm(obj, idx)
        raise ValueError(f"Unsupported domain: {domain}")

    def reshetnyak_check(self, f: TensorField, degree: Sequence[int], idx: SobolevIndex,
                         dgrid=None) -> ReshetnyakReport:
        """
        Compare ||R_{l1 l2} f|| in H^{s+m+(n-1)/2}_{t+m+(n-1)/2}(Z) with the tensor-weighted ||f||.

        Args:
            f: Phantom field
            degree: (l1, l2)
            idx: Sobolev index of the field side
            dgrid: Direction grid with tangents; a default one is built when omitted

        Returns:
            ReshetnyakReport with both sides and the relative gap
        """
        dgrid = dgrid or default_direction_grid(f.grid)
        data = self.radon.grt_fourier(f, degree, dgrid, Parametrization.tangent)
        lhs = self.sinogram_norm(data, idx.shifted(f.m + (f.n - 1) / 2.0))
        rhs = self.field_norm(f, idx, degree)
        scale = max(lhs, rhs)
        gap = abs(lhs - rhs) / scale if scale > 0 else 0.0
        logger.info(f"Isometry check degree {tuple(degree)}, (s, t)=({idx.s}, {idx.t}): lhs={lhs:.6e} rhs={rhs:.6e} gap={gap:.2e}")
        return ReshetnyakReport(degree=list(degree), index=idx, lhs=lhs, rhs=rhs, rel_gap=gap)


# Create a default instance of the service
norm_service = NormService()


# Functions for backward compatibility
def weighted_norm(obj, idx: SobolevIndex, domain: str = "Rn", degree: Optional[Sequence[int]] = None) -> float:
    return norm_service.weighted_norm(obj, idx, domain, degree)


def reshetnyak_check(f: TensorField, degree: Sequence[int], idx: SobolevIndex, dgrid=None) -> ReshetnyakReport:
    return norm_service.reshetnyak_check(f, degree, idx, dgrid)
