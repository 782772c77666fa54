"""
Range Characterization Service.

This module provides functionality to test whether sampled data can be the
generalized Radon transform of a field: the parity relation
g(-omega, -p, -u) = (-1)^m g(omega, p, u), and for every k the moment
int p^k g dp being a polynomial homogeneous of degree k + l1 in omega and
l2 in u.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from app.config.settings import RANGE_K_MAX, RANGE_THRESHOLD
from app.models.reports import MomentFit, RangeReport, verdict_of
from app.services.algebra.symtensor import vector_power
from app.services.transforms.radon import Parametrization, Sinogram

# Configure logging
logger = logging.getLogger(__name__)


class RangeCheckService:
    """Service for the parity and moment conditions of the range"""

    def __init__(self, threshold: float = RANGE_THRESHOLD, k_max: int = RANGE_K_MAX):
        self.threshold = threshold
        self.k_max = k_max

    def parity_defect(self, g: Sinogram) -> float:
        """max |g(-omega, -p, -u) - (-1)^m g(omega, p, u)| / max |g|."""
        dgrid = g.dgrid
        if not dgrid.antipodally_closed:
            raise ValueError("Range check needs a direction grid closed under omega -> -omega and u -> -u")
        values = g.values
        if g.parametrization == Parametrization.tangent:
            mirrored = values[dgrid.antipode[:, np.newaxis], dgrid.tangent_antipode][..., ::-1]
        else:
            mirrored = values[dgrid.antipode][..., ::-1]
        scale = g.max_abs()
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(mirrored - (-1) ** g.m * values)) / scale)

    def _design(self, g: Sinogram, k: int, l1: int, l2: int) -> np.ndarray:
        """Monomials omega^alpha u^beta, |alpha| = k + l1, |beta| = l2, one row per sample."""
        dgrid = g.dgrid
        omega_part = vector_power(dgrid.omegas, k + l1)
        if g.parametrization != Parametrization.tangent:
            return omega_part
        u_part = vector_power(dgrid.tangents, l2)
        rows = omega_part[:, np.newaxis, :, np.newaxis] * u_part[:, :, np.newaxis, :]
        return rows.reshape(dgrid.K * dgrid.U, -1)

    def range_check(self, g: Sinogram, degree: Optional[Sequence[int]] = None,
                    k_max: Optional[int] = None) -> RangeReport:
        """
        Check the range conditions on a sinogram.

        Args:
            g: Scalar (classical) or tangent-parametrized data on an antipodally closed grid
            degree: (l1, l2); defaults to the sinogram's own degree, () for scalar data
            k_max: Highest moment checked

        Returns:
            RangeReport with verdict pass iff every defect is within the threshold
        """
        if g.parametrization == Parametrization.frame:
            raise ValueError("Moment conditions are stated for the tangent parametrization; frame data is not polynomial in omega")
        k_max = self.k_max if k_max is None else k_max
        if k_max > 6:
            raise ValueError(f"Moments beyond k = 6 are not resolved by the offset quadrature, got k_max={k_max}")
        degree = tuple(g.degree) if degree is None else tuple(degree)
        l1, l2 = degree if g.parametrization == Parametrization.tangent else (0, 0)

        parity = self.parity_defect(g)
        offsets = g.dgrid.offsets()
        spacing = g.dgrid.p_spacing
        fits = []
        for k in range(k_max + 1):
            moments = (g.values @ offsets ** k) * spacing
            magnitude = (np.abs(g.values) @ np.abs(offsets) ** k) * spacing
            target = moments.reshape(-1)
            design = self._design(g, k, l1, l2)
            coefficients, *_ = np.linalg.lstsq(design, target, rcond=None)
            scale = np.linalg.norm(magnitude)
            residual = np.linalg.norm(design @ coefficients - target)
            relative = float(residual / scale) if scale > 0 else 0.0
            fits.append(MomentFit(k=k, coefficients=[float(c) for c in coefficients], residual=relative))

        ok = parity <= self.threshold and all(fit.residual <= self.threshold for fit in fits)
        report = RangeReport(
            degree=list(degree),
            parity_defect=parity,
            moment_fits=fits,
            threshold=self.threshold,
            verdict=verdict_of(ok),
        )
        logger.info(
            f"Range check degree {degree}: parity {parity:.2e}, "
            f"worst moment residual {max(fit.residual for fit in fits):.2e} -> {report.verdict.value}"
        )
        return report


# Create a default instance of the service
range_check_service = RangeCheckService()


# Functions for backward compatibility
def range_check(g: Sinogram, degree: Optional[Sequence[int]] = None, k_max: Optional[int] = None) -> RangeReport:
    return range_check_service.range_check(g, degree, k_max)
