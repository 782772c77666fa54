"""
Kernel Check Service.

This module provides a check of the kernel description of the frame
parametrized transform: the data with signature l depends on f only
through d^{l_n} v_{l_n}, so removing that component from the decomposition
must annihilate it.

The components v_i of a compactly supported f are not compactly supported,
so the removal happens along the slice rays: the hyperplane data of f is
taken to the p-frequency domain and the d^i v_i term of f^(sigma omega) is
subtracted there. At sigma = 0 the term is the limit along the ray.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from app.config.settings import KERNEL_THRESHOLD
from app.models.reports import KernelReport, verdict_of
from app.services.algebra.symtensor import multiplicities, sym_dimension
from app.services.decomposition.decomp import DecompositionService, decomposition_service
from app.services.fields.field import TensorField
from app.services.transforms.directions import DirectionGrid, default_direction_grid
from app.services.transforms.ptransform import p_forward, p_frequencies, pad_offsets
from app.services.transforms.radon import Parametrization, RadonService, direction_tensors, radon_service
from app.utils.errors import DimensionMismatchError

# Configure logging
logger = logging.getLogger(__name__)


class KernelCheckService:
    """Service for the kernel check of frame data"""

    def __init__(self, threshold: float = KERNEL_THRESHOLD, radon: Optional[RadonService] = None,
                 decomposition: Optional[DecompositionService] = None):
        self.threshold = threshold
        self.radon = radon or radon_service
        self.decomposition = decomposition or decomposition_service

    def removed_spectrum(self, f: TensorField, degree: Sequence[int], dgrid: DirectionGrid,
                         sigmas: np.ndarray) -> np.ndarray:
        """Slice spectrum of R_l (d^i v_i), i = l_n, on the rays sigma * omega; shape (K, S)."""
        n, m = f.n, f.m
        samples = self.radon.polar_samples(f, dgrid, sigmas).reshape(-1, sym_dimension(n, m))
        # the i-th term only depends on the ray direction, also in the limit sigma -> 0
        directions = np.repeat(dgrid.omegas, sigmas.shape[0], axis=0)
        term = self.decomposition.potential_terms(samples, directions, m)[degree[-1]]
        term = term.reshape(dgrid.K, sigmas.shape[0], -1)
        tensors = direction_tensors(dgrid, degree, Parametrization.frame)
        scale = (2.0 * math.pi) ** ((n - 1) / 2.0)
        return scale * np.einsum("ksc,kc,c->ks", term, tensors, multiplicities(n, m))

    def kernel_check(self, f: TensorField, degree: Sequence[int], dgrid: Optional[DirectionGrid] = None) -> KernelReport:
        """
        Remove d^i v_i (i = l_n) from the l data of f and measure what is left.

        Args:
            f: Order-m field
            degree: Frame signature (l_1, .., l_n)
            dgrid: Direction grid; a default one is built when omitted

        Returns:
            KernelReport whose defect is max|R_l f - R_l d^i v_i| over the
            largest frame datum of f, both in p-frequency up to half Nyquist
        """
        degree = tuple(degree)
        if len(degree) != f.n or sum(degree) != f.m:
            raise DimensionMismatchError(f"Signature {degree} is not a frame signature of order {f.m} on R^{f.n}")
        dgrid = dgrid or default_direction_grid(f.grid, with_tangents=False)
        i = degree[-1]
        padding = self.radon.p_padding
        sigmas = p_frequencies(2 * padding * dgrid.p_count + 1, dgrid.p_spacing)
        band = np.abs(sigmas) <= f.grid.nyquist / 2.0

        data = self.radon.grt_all_signatures(f, dgrid)
        spectra = {
            degrees: p_forward(pad_offsets(sinogram.values, padding), dgrid.p_spacing)[:, band]
            for degrees, sinogram in data.items()
        }
        scale = max(float(np.max(np.abs(values))) for values in spectra.values())
        removed = self.removed_spectrum(f, degree, dgrid, sigmas[band])
        remainder = float(np.max(np.abs(spectra[degree] - removed)))
        defect = remainder / scale if scale > 0 else 0.0
        report = KernelReport(
            degree=list(degree),
            removed_component=i,
            defect=float(defect),
            scale=float(scale),
            verdict=verdict_of(defect <= self.threshold),
        )
        logger.info(f"Kernel check {degree}: removed v_{i}, defect {defect:.3e} -> {report.verdict.value}")
        return report


# Create a default instance of the service
kernel_check_service = KernelCheckService()


# Functions for backward compatibility
def kernel_check(f: TensorField, degree: Sequence[int], dgrid: Optional[DirectionGrid] = None) -> KernelReport:
    return kernel_check_service.kernel_check(f, degree, dgrid)
