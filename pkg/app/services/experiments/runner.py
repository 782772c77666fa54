"""
Experiment Runner Service.

This module provides the batch driver behind the command line: it builds
phantoms, runs forward transforms, inversions and decompositions, executes
the checkers and persists every artifact (TFLD, SINO, JSON reports) in the
run's output directory.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.models.experiment import ExperimentConfig
from app.models.phantom import PhantomSpec
from app.models.reports import (
    DecompositionReport,
    InversionReport,
    SignatureCheck,
    SliceReport,
    SobolevIndex,
    Verdict,
    verdict_of,
)
from app.services.algebra.symtensor import degree_signatures
from app.services.analysis.norms import NormService
from app.services.analysis.range_check import RangeCheckService
from app.services.analysis.ucp import UcpService
from app.services.decomposition.decomp import DecompositionService
from app.services.experiments.selftest import SelftestService
from app.services.fields.field import Grid, TensorField, relative_error
from app.services.fields.phantom import gaussian_spec, make_phantom, random_phantom_spec
from app.services.inversion.invert import GrtDataset, InversionService
from app.services.storage.artifact_io import ArtifactStore
from app.services.transforms.directions import DirectionGrid, default_direction_grid
from app.services.transforms.radon import Parametrization, RadonService, Sinogram
from app.utils.errors import DimensionMismatchError
from app.utils.report_printer import RunReportPrinter, print_report
from app.utils.run_logging import RunStage

# Configure logging
logger = logging.getLogger(__name__)


def build_grid(config: ExperimentConfig) -> Grid:
    return Grid(config.grid.n, config.grid.L, config.grid.N)


def build_direction_grid(config: ExperimentConfig, grid: Grid, with_tangents: Optional[bool] = None) -> DirectionGrid:
    directions = config.directions
    return default_direction_grid(
        grid,
        count=directions.count,
        p_count=directions.p_count,
        p_spacing=directions.p_spacing,
        with_tangents=directions.tangents if with_tangents is None else with_tangents,
        tangent_count=directions.tangent_count,
    )


def build_phantom_spec(kind: str, n: int, m: int, seed: int) -> PhantomSpec:
    """Phantom of the requested kind: random (seeded), a centered Gaussian, or zero."""
    if kind == "random":
        return random_phantom_spec(n, m, np.random.default_rng(seed))
    if kind == "gaussian":
        return gaussian_spec(n, m)
    return PhantomSpec(n=n, m=m, terms=[])


def requested_signatures(config: ExperimentConfig, n: int, m: int, parametrization: Parametrization) -> List[Tuple[int, ...]]:
    """Configured signatures, or all of them: frame n-tuples or tangent pairs (l1, l2)."""
    listed = config.signature_list()
    if listed is None:
        if parametrization == Parametrization.frame:
            return degree_signatures(n, m)
        return [(l1, m - l1) for l1 in range(m, -1, -1)]
    width = n if parametrization == Parametrization.frame else 2
    for degrees in listed:
        if len(degrees) != width or sum(degrees) != m:
            raise DimensionMismatchError(
                f"Signature {degrees} is not a {parametrization.value} signature of order {m} on R^{n}"
            )
    return listed


class ExperimentRunner:
    """Service that executes one configured subcommand"""

    def __init__(self, config: ExperimentConfig):
        """
        Initialize the Experiment Runner.

        Args:
            config: Validated experiment configuration
        """
        self.config = config
        self.output = Path(config.output)
        self.store = ArtifactStore(self.output)
        self.printer = RunReportPrinter(self.output)
        tolerances = config.tolerances
        self.radon = RadonService()
        self.decomposition = DecompositionService()
        self.inversion = InversionService(
            imag_tolerance=tolerances.imag,
            range_tolerance=tolerances.inversion_range,
            decomposition=self.decomposition,
        )
        self.range_checker = RangeCheckService(tolerances.range, tolerances.range_k_max)
        self.norms = NormService(radon=self.radon)
        self.ucp = UcpService(
            ratio_threshold=tolerances.ucp_ratio,
            exterior_floor=tolerances.ucp_floor,
            margin_threshold=tolerances.ucp_margin,
            inversion=self.inversion,
            radon=self.radon,
        )

    def commands(self) -> Dict[str, Callable[[], bool]]:
        return {
            "phantom": self.run_phantom,
            "forward": self.run_forward,
            "invert": self.run_invert,
            "decompose": self.run_decompose,
            "slice-check": self.run_slice_check,
            "reshetnyak": self.run_reshetnyak,
            "range-check": self.run_range_check,
            "ucp-odd": self.run_ucp_odd,
            "ucp-even": self.run_ucp_even,
            "selftest": self.run_selftest,
        }

    def run(self) -> int:
        """
        Execute the configured subcommand.

        Returns:
            0 when every verdict passed, 1 when a checker failed
        """
        command = self.config.command
        self.output.mkdir(parents=True, exist_ok=True)
        with RunStage(command, logger, command=command, seed=self.config.seed) as stage:
            ok = stage.record_verdict(self.commands()[command]())
        if not ok:
            logger.warning(f"{command}: at least one verdict failed")
        return 0 if ok else 1

    def input_field(self, m: Optional[int] = None) -> TensorField:
        """The input TFLD when given, otherwise the configured phantom."""
        if self.config.input is not None:
            field = self.store.load_field(self.config.input)
            if m is not None and field.m != m:
                raise DimensionMismatchError(f"Input field has order {field.m}, configuration asks for {m}")
            return field
        grid = build_grid(self.config)
        m = self.config.transform.m if m is None else m
        spec = build_phantom_spec(self.config.phantom, grid.n, m, self.config.seed)
        return make_phantom(grid, m, spec)

    def forward_sinogram(self, f: TensorField, degrees, dgrid: DirectionGrid, parametrization: Parametrization) -> Sinogram:
        if self.config.transform.method == "fourier":
            return self.radon.grt_fourier(f, degrees, dgrid, parametrization)
        return self.radon.grt(f, degrees, dgrid, parametrization)

    def run_phantom(self) -> bool:
        f = self.input_field()
        self.store.save_field(f, "phantom.tfld")
        return True

    def run_forward(self) -> bool:
        f = self.input_field()
        parametrization = Parametrization(self.config.transform.parametrization)
        dgrid = build_direction_grid(self.config, f.grid, with_tangents=parametrization == Parametrization.tangent)
        signatures = requested_signatures(self.config, f.n, f.m, parametrization)
        with RunStage("forward transform", logger, m=f.m, directions=dgrid.K):
            if parametrization == Parametrization.frame and self.config.transform.method == "quadrature":
                every = self.radon.grt_all_signatures(f, dgrid)
                sinograms = {degrees: every[degrees] for degrees in signatures}
            else:
                sinograms = {degrees: self.forward_sinogram(f, degrees, dgrid, parametrization) for degrees in signatures}
        if parametrization == Parametrization.frame:
            self.store.save_dataset(GrtDataset(f.n, f.m, dgrid, sinograms), "sinograms")
        else:
            for degrees, sinogram in sinograms.items():
                self.store.save_sinogram(sinogram, Path("sinograms") / f"tangent_{degrees[0]}_{degrees[1]}.sino")
        return True

    def run_invert(self) -> bool:
        if self.config.input is None:
            raise ValueError("invert needs input=<directory of SINO files>")
        dataset = self.store.load_dataset(self.config.input)
        grid = build_grid(self.config)
        with RunStage("inversion", logger, m=dataset.m):
            f, stages = self.inversion.invert_full_with_report(dataset, grid)
        self.store.save_field(f, "reconstruction.tfld")
        error = None
        if self.config.reference is not None:
            error = relative_error(f, self.store.load_field(self.config.reference))
        threshold = self.config.tolerances.inversion
        report = InversionReport(
            m=dataset.m,
            stages=[stage.model_dump() for stage in stages],
            relative_error=error,
            threshold=threshold,
            verdict=verdict_of(error is None or error <= threshold),
        )
        self.store.save_report(report, "inversion_report.json")
        print_report(report, "inversion")
        return report.verdict == Verdict.passed

    def run_decompose(self) -> bool:
        f = self.input_field()
        with RunStage("decomposition", logger, m=f.m):
            result = self.decomposition.decompose(f)
        for i, component in enumerate(result.v):
            self.store.save_field(component, f"component_{i}.tfld")
        report = DecompositionReport(
            m=f.m,
            residual=result.residual,
            solenoidality=result.solenoidality,
            norm_ratios=result.norm_ratios(f),
        )
        self.store.save_report(report, "decomposition_report.json")
        print_report(report, "decomposition")
        return True

    def run_slice_check(self) -> bool:
        f = self.input_field()
        parametrization = Parametrization(self.config.transform.parametrization)
        dgrid = build_direction_grid(self.config, f.grid, with_tangents=parametrization == Parametrization.tangent)
        checks = []
        for degrees in requested_signatures(self.config, f.n, f.m, parametrization):
            value = self.radon.slice_check(f, degrees, dgrid, parametrization)
            checks.append(SignatureCheck(degree=list(degrees), parametrization=parametrization.value, value=value))
        threshold = self.config.tolerances.slice
        report = SliceReport(
            checks=checks,
            threshold=threshold,
            verdict=verdict_of(all(check.value <= threshold for check in checks)),
        )
        self.store.save_report(report, "slice_report.json")
        print_report(report, "slice check")
        return report.verdict == Verdict.passed

    def run_reshetnyak(self) -> bool:
        f = self.input_field()
        dgrid = build_direction_grid(self.config, f.grid, with_tangents=True)
        idx = SobolevIndex(s=self.config.s, t=self.config.t)
        ok = True
        for degrees in requested_signatures(self.config, f.n, f.m, Parametrization.tangent):
            report = self.norms.reshetnyak_check(f, degrees, idx, dgrid)
            self.store.save_report(report, f"reshetnyak_{degrees[0]}_{degrees[1]}.json")
            print_report(report, f"isometry {degrees}")
            ok = ok and report.rel_gap <= self.config.tolerances.reshetnyak
        return ok

    def run_range_check(self) -> bool:
        if self.config.input is not None and Path(self.config.input).is_file():
            sinograms = [self.store.load_sinogram(self.config.input)]
        else:
            f = self.input_field()
            dgrid = build_direction_grid(self.config, f.grid, with_tangents=True)
            sinograms = [
                self.forward_sinogram(f, degrees, dgrid, Parametrization.tangent)
                for degrees in requested_signatures(self.config, f.n, f.m, Parametrization.tangent)
            ]
        ok = True
        for sinogram in sinograms:
            report = self.range_checker.range_check(sinogram)
            name = "_".join(str(l) for l in sinogram.degree) or "scalar"
            self.store.save_report(report, f"range_{name}.json")
            print_report(report, f"range check {sinogram.degree}")
            ok = ok and report.verdict == Verdict.passed
        return ok

    def _ucp_grid(self) -> Optional[Grid]:
        return build_grid(self.config) if "grid" in self.config.model_fields_set else None

    def run_ucp_odd(self) -> bool:
        grid = self._ucp_grid()
        n = grid.n if grid is not None else 3
        dgrid = None
        if grid is not None and self.config.directions.count is not None:
            dgrid = build_direction_grid(self.config, grid, with_tangents=False)
        report = self.ucp.ucp_counterexample(
            n, self.config.transform.m, self.config.component, a=self.config.a, grid=grid, dgrid=dgrid
        )
        self.store.save_report(report, "ucp_odd.json")
        print_report(report, "ucp odd")
        return report.verdict == Verdict.passed

    def run_ucp_even(self) -> bool:
        grid = self._ucp_grid()
        n = grid.n if grid is not None else 2
        reports = self.ucp.uniqueness_corpus(
            n, self.config.transform.m, self.config.component, count=self.config.corpus,
            seed=self.config.seed, grid=grid, family=self.config.family,
        )
        ok = True
        for number, report in enumerate(reports):
            self.store.save_report(report, f"ucp_even_{number}.json")
            ok = ok and report.verdict == Verdict.passed
        margins = [report.data_norm_on_U_planes for report in reports]
        logger.info(f"UCP even corpus of {len(reports)}: smallest margin {min(margins):.3e}")
        print_report(reports[int(np.argmin(margins))], "ucp even (smallest margin)")
        return ok

    def run_selftest(self) -> bool:
        selftest = SelftestService(
            radon=self.radon,
            decomposition=self.decomposition,
            inversion=self.inversion,
            range_checker=self.range_checker,
            norms=self.norms,
            ucp=self.ucp,
            tolerances=self.config.tolerances,
            seed=self.config.seed,
            quick=self.config.quick,
        )
        results = selftest.run()
        self.printer.write_summary(results)
        self.printer.print_summary("selftest", results)
        return all(result.verdict == Verdict.passed for result in results)


# Functions for backward compatibility
def run(config: ExperimentConfig) -> int:
    return ExperimentRunner(config).run()
