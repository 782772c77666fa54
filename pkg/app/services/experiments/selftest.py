"""
Selftest Service.

This module provides the acceptance suite run by ``selftest``: forward
cross-validation, the Fourier slice relation, kernel annihilation, the
divergence identity, decomposition, inversion, the isometry, the range
conditions and both unique continuation experiments. Every suite yields one
or more SuiteResult rows; the run passes when all of them do.
"""
import logging
import time
from typing import Callable, List, Optional

import numpy as np

from app.config.settings import DEFAULT_SEED
from app.models.experiment import ToleranceConfig
from app.models.reports import SobolevIndex, SuiteResult, Verdict, verdict_of
from app.services.algebra.symtensor import degree_signatures
from app.services.analysis.kernel import KernelCheckService
from app.services.analysis.norms import NormService
from app.services.analysis.range_check import RangeCheckService
from app.services.analysis.ucp import UcpService
from app.services.decomposition.decomp import DecompositionService, apply_d_power
from app.services.fields.field import Grid, TensorField, relative_error
from app.services.fields.phantom import make_phantom, random_phantom_spec
from app.services.inversion.invert import GrtDataset, InversionService
from app.services.transforms.directions import default_direction_grid
from app.services.transforms.radon import (
    Parametrization,
    RadonService,
    derivative_identity_defect,
    divergence_identity_defect,
)
from app.utils.run_logging import RunStage

# Configure logging
logger = logging.getLogger(__name__)

PRIMARY_GRID = Grid(2, 6.0, 64)


def _result(suite: str, metric: str, value: float, threshold: float, ok: Optional[bool] = None,
            note: Optional[str] = None) -> SuiteResult:
    ok = value <= threshold if ok is None else ok
    return SuiteResult(suite=suite, metric=metric, value=float(value), threshold=threshold,
                       verdict=verdict_of(ok), note=note)


class SelftestService:
    """Service for the end-to-end acceptance suite"""

    def __init__(
        self,
        radon: Optional[RadonService] = None,
        decomposition: Optional[DecompositionService] = None,
        inversion: Optional[InversionService] = None,
        range_checker: Optional[RangeCheckService] = None,
        norms: Optional[NormService] = None,
        ucp: Optional[UcpService] = None,
        tolerances: Optional[ToleranceConfig] = None,
        seed: int = DEFAULT_SEED,
        quick: bool = False,
    ):
        """
        Initialize the Selftest Service.

        Args:
            radon, decomposition, inversion, range_checker, norms, ucp: Services under test
            tolerances: Pass/fail thresholds
            seed: Seed of every random corpus
            quick: Smaller corpora and orders, no refinement study
        """
        self.radon = radon or RadonService()
        self.decomposition = decomposition or DecompositionService()
        self.inversion = inversion or InversionService(decomposition=self.decomposition)
        self.range_checker = range_checker or RangeCheckService()
        self.norms = norms or NormService(radon=self.radon)
        self.ucp = ucp or UcpService(inversion=self.inversion, radon=self.radon)
        self.tolerances = tolerances or ToleranceConfig()
        self.kernel = KernelCheckService(self.tolerances.kernel, radon=self.radon, decomposition=self.decomposition)
        self.seed = seed
        self.quick = quick

    def suites(self) -> List[Callable[[], List[SuiteResult]]]:
        return [
            self.cross_validation,
            self.fourier_slice,
            self.kernel_annihilation,
            self.divergence_identity,
            self.decomposition_suite,
            self.inversion_suite,
            self.isometry,
            self.range_suite,
            self.ucp_odd,
            self.ucp_even,
        ]

    def run(self, only: Optional[List[str]] = None) -> List[SuiteResult]:
        """
        Run every suite (or the named ones) and time them.

        Returns:
            One SuiteResult per measured criterion
        """
        results: List[SuiteResult] = []
        for suite in self.suites():
            if only is not None and suite.__name__ not in only:
                continue
            start = time.perf_counter()
            with RunStage(f"selftest {suite.__name__}", logger, suite=suite.__name__):
                rows = suite()
            seconds = time.perf_counter() - start
            for row in rows:
                row.seconds = seconds / len(rows)
                if row.verdict == Verdict.failed:
                    logger.warning(f"Suite {row.suite} failed: {row.metric}={row.value:.3e} > {row.threshold:.1e}")
            results.extend(rows)
        return results

    def _rng(self, offset: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def _corpus(self, m: int, count: int, grid: Grid = PRIMARY_GRID) -> List[TensorField]:
        rng = self._rng(m)
        return [make_phantom(grid, m, random_phantom_spec(grid.n, m, rng)) for _ in range(count)]

    def _orders(self, highest: int) -> range:
        return range(min(highest, 1) + 1) if self.quick else range(highest + 1)

    def cross_validation(self) -> List[SuiteResult]:
        dgrid = default_direction_grid(PRIMARY_GRID)
        worst = 0.0
        for m in self._orders(2):
            for f in self._corpus(m, 2 if self.quick else 5):
                for l1 in range(m + 1):
                    degree = (l1, m - l1)
                    quadrature = self.radon.grt(f, degree, dgrid, Parametrization.tangent).values
                    spectral = self.radon.grt_fourier(f, degree, dgrid, Parametrization.tangent).values
                    scale = np.linalg.norm(spectral)
                    if scale > 0:
                        worst = max(worst, float(np.linalg.norm(quadrature - spectral) / scale))
        return [_result("cross-validation", "max rel L2", worst, self.tolerances.slice)]

    def fourier_slice(self) -> List[SuiteResult]:
        dgrid = default_direction_grid(PRIMARY_GRID)
        worst = 0.0
        for m in self._orders(2):
            f = self._corpus(m, 1)[0]
            for l1 in range(m + 1):
                worst = max(worst, self.radon.slice_check(f, (l1, m - l1), dgrid, Parametrization.tangent))
        return [_result("fourier-slice", "max rel discrepancy", worst, self.tolerances.slice)]

    def kernel_annihilation(self) -> List[SuiteResult]:
        dgrid = default_direction_grid(PRIMARY_GRID, with_tangents=False)
        vanishing, derivative = 0.0, 0.0
        for k in (1, 2):
            for order in self._orders(1):
                v = self._corpus(order, 1)[0]
                for degrees in degree_signatures(2, order + k):
                    defect = derivative_identity_defect(v, k, degrees, dgrid, method="spectral", service=self.radon)
                    if defect.branch == "vanishing":
                        vanishing = max(vanishing, defect.defect)
                    else:
                        derivative = max(derivative, defect.defect)
        f = self._corpus(2, 1)[0]
        kernel = max(self.kernel.kernel_check(f, degrees, dgrid).defect for degrees in degree_signatures(2, 2))
        return [
            _result("kernel-vanishing", "max |R_l d^k v| / scale", vanishing, self.tolerances.kernel),
            _result("potential-identity", "max rel gap", derivative, self.tolerances.identity),
            _result("kernel-check", "max defect", kernel, self.tolerances.kernel),
        ]

    def divergence_identity(self) -> List[SuiteResult]:
        dgrid = default_direction_grid(PRIMARY_GRID, with_tangents=False)
        worst = 0.0
        for k in self._orders(2):
            for j in (1, 2):
                v = self._corpus(k + j, 1)[0]
                for degrees in degree_signatures(2, k):
                    worst = max(worst, divergence_identity_defect(v, j, degrees, dgrid, method="spectral",
                                                                  service=self.radon).defect)
        return [_result("divergence-identity", "max rel gap", worst, self.tolerances.identity)]

    def decomposition_suite(self) -> List[SuiteResult]:
        residual, solenoidal, uniqueness = 0.0, 0.0, 0.0
        grid = Grid(2, 6.0, 32 if self.quick else 64)
        for m in range(1, 3 if self.quick else 4):
            for f in self._corpus(m, 2, grid):
                result = self.decomposition.decompose(f)
                residual = max(residual, result.residual)
                solenoidal = max([solenoidal] + result.solenoidality)
                rebuilt = TensorField.zeros(grid, m)
                for i, component in enumerate(result.v):
                    rebuilt = rebuilt + apply_d_power(component, i)
                again = self.decomposition.decompose(rebuilt)
                for first, second in zip(result.v, again.v):
                    if first.norm() > 0:
                        uniqueness = max(uniqueness, relative_error(second, first))
        return [
            _result("decomposition-residual", "max residual", residual, 1e-6),
            _result("decomposition-solenoidal", "max certificate", solenoidal, 1e-8),
            _result("decomposition-uniqueness", "max round trip", uniqueness, 1e-6),
        ]

    def inversion_suite(self) -> List[SuiteResult]:
        dgrid = default_direction_grid(PRIMARY_GRID, with_tangents=False)
        worst, independence = 0.0, 0.0
        for m in self._orders(2):
            f = self._corpus(m, 1)[0]
            dataset = GrtDataset.from_field(f, dgrid, self.radon)
            worst = max(worst, relative_error(self.inversion.invert_full(dataset, PRIMARY_GRID), f))
            if m == 0:
                continue
            baseline = [self.inversion.recover_component(dataset, i, PRIMARY_GRID) for i in range(m + 1)]
            perturbed = dataset.with_family(m)
            for i in range(m):
                recovered = self.inversion.recover_component(perturbed, i, PRIMARY_GRID)
                if baseline[i].norm() > 0:
                    independence = max(independence, relative_error(recovered, baseline[i]))
        return [
            _result("inversion", "max rel L2", worst, self.tolerances.inversion),
            _result("component-independence", "max rel change", independence, 1e-3),
        ]

    def isometry(self) -> List[SuiteResult]:
        rows = []
        worst = 0.0
        refinement_ok = True
        coarse_grid, fine_grid = PRIMARY_GRID, Grid(2, 6.0, 128)
        for m in (0, 1):
            f = self._corpus(m, 1)[0]
            fine = None if self.quick else make_phantom(fine_grid, m, random_phantom_spec(2, m, self._rng(m)))
            for s, t in ((0.0, 0.0), (1.0, 0.0)):
                idx = SobolevIndex(s=s, t=t)
                for l1 in range(m + 1):
                    degree = (l1, m - l1)
                    gap = self.norms.reshetnyak_check(f, degree, idx, default_direction_grid(coarse_grid)).rel_gap
                    worst = max(worst, gap)
                    if fine is not None:
                        finer = self.norms.reshetnyak_check(
                            fine, degree, idx, default_direction_grid(fine_grid, count=360)
                        ).rel_gap
                        refinement_ok = refinement_ok and finer <= gap + 1e-4
        rows.append(_result("isometry", "max rel gap", worst, self.tolerances.reshetnyak))
        if not self.quick:
            rows.append(_result("isometry-refinement", "N=128 gap not above N=64", 0.0, 0.0, ok=refinement_ok))
        return rows

    def range_suite(self) -> List[SuiteResult]:
        dgrid = default_direction_grid(PRIMARY_GRID)
        worst_parity, worst_moment = 0.0, 0.0
        for m in self._orders(2):
            f = self._corpus(m, 1)[0]
            for l1 in range(m + 1):
                g = self.radon.grt(f, (l1, m - l1), dgrid, Parametrization.tangent)
                report = self.range_checker.range_check(g)
                worst_parity = max(worst_parity, report.parity_defect)
                worst_moment = max(worst_moment, max(fit.residual for fit in report.moment_fits))

        scalar = self.radon.radon_scalar(self._corpus(0, 1)[0], dgrid)
        omega_1 = dgrid.omegas[:, 0]
        violators = {
            "parity": scalar.with_values(np.roll(scalar.values, 3, axis=1)),
            "non-polynomial": scalar.with_values(scalar.values * (1.0 + np.abs(omega_1))[:, np.newaxis]),
            "homogeneity": scalar.with_values(scalar.values * (omega_1 ** 2)[:, np.newaxis]),
        }
        caught = [name for name, g in violators.items() if self.range_checker.range_check(g).verdict == Verdict.failed]
        missed = sorted(set(violators) - set(caught))
        return [
            _result("range-parity", "max parity defect", worst_parity, 1e-10),
            _result("range-moments", "max moment residual", worst_moment, self.tolerances.range),
            _result("range-violators", "violators accepted", float(len(missed)), 0.0,
                    note=f"missed: {', '.join(missed)}" if missed else None),
        ]

    def ucp_odd(self) -> List[SuiteResult]:
        grid = Grid(3, 3.0, 32 if self.quick else 48)
        dgrid = default_direction_grid(grid, count=500 if self.quick else 1000, with_tangents=False)
        cases = ((0, 0),) if self.quick else ((0, 0), (2, 0))
        rows = []
        for m, i in cases:
            report = self.ucp.ucp_counterexample(3, m, i, grid=grid, dgrid=dgrid)
            ratio = report.interior_norm / report.exterior_norm if report.exterior_norm > 0 else float("inf")
            rows.append(_result(f"ucp-odd-m{m}", "interior / exterior", ratio, self.tolerances.ucp_ratio,
                                ok=report.verdict == Verdict.passed,
                                note=f"exterior {report.exterior_norm:.3e}, data on U {report.data_norm_on_U_planes:.1e}"))
        return rows

    def ucp_even(self) -> List[SuiteResult]:
        reports = self.ucp.uniqueness_corpus(2, 1, 0, count=3 if self.quick else 10, seed=self.seed)
        margin = min(report.data_norm_on_U_planes for report in reports)
        ok = all(report.verdict == Verdict.passed for report in reports)
        return [_result("ucp-even", "min margin", margin, self.tolerances.ucp_margin, ok=ok,
                        note="margin must stay above the threshold")]
