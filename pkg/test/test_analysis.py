import numpy as np
import pytest

from app.models.reports import SobolevIndex, Verdict
from app.services.algebra.symtensor import degree_signatures
from app.services.analysis.kernel import KernelCheckService, kernel_check
from app.services.analysis.norms import NormService, reshetnyak_check, weighted_norm
from app.services.analysis.range_check import RangeCheckService, range_check
from app.services.transforms.directions import default_direction_grid
from app.services.transforms.radon import Parametrization, grt, radon_scalar, radon_service
from app.utils.errors import DimensionMismatchError


@pytest.fixture(scope="module")
def tangent_dgrid(grid2):
    return default_direction_grid(grid2, count=48)


def test_plain_norm_is_l2_norm(phantom_factory):
    f = phantom_factory(2)
    assert weighted_norm(f, SobolevIndex()) == pytest.approx(f.norm(), rel=1e-10)


def test_norms_are_homogeneous(phantom_factory, tangent_dgrid):
    f = phantom_factory(1)
    idx = SobolevIndex(s=1.0, t=0.5)
    assert weighted_norm(f * -2.5, idx) == pytest.approx(2.5 * weighted_norm(f, idx), rel=1e-12)
    assert weighted_norm(f * 3.0, idx, degree=(1, 0)) == pytest.approx(3.0 * weighted_norm(f, idx, degree=(1, 0)),
                                                                       rel=1e-12)
    g = grt(f, (0, 1), tangent_dgrid, Parametrization.tangent)
    assert weighted_norm(g.with_values(2.0 * g.values), idx, "Z") == pytest.approx(2.0 * weighted_norm(g, idx, "Z"),
                                                                                 rel=1e-12)


def test_smoothness_weight_raises_norm(phantom_factory):
    f = phantom_factory(0)
    assert weighted_norm(f, SobolevIndex(s=1.0)) > weighted_norm(f, SobolevIndex())


def test_norm_argument_checks(phantom_factory, tangent_dgrid):
    f = phantom_factory(1)
    g = grt(f, (1, 0), tangent_dgrid, Parametrization.tangent)
    with pytest.raises(ValueError):
        weighted_norm(f, SobolevIndex(t=-1.0))
    with pytest.raises(ValueError):
        weighted_norm(f, SobolevIndex(), domain="torus")
    with pytest.raises(DimensionMismatchError):
        weighted_norm(g, SobolevIndex(), domain="Rn")
    with pytest.raises(DimensionMismatchError):
        weighted_norm(g, SobolevIndex(), domain="SxR")
    with pytest.raises(DimensionMismatchError):
        weighted_norm(f, SobolevIndex(), degree=(2, 0))


@pytest.mark.slow
@pytest.mark.parametrize('m,degree,bound', [(0, (0, 0), 2e-2), (1, (0, 1), 3e-2), (1, (1, 0), 3e-2)])
def test_isometry(phantom_factory, m, degree, bound):
    f = phantom_factory(m)
    for idx in (SobolevIndex(), SobolevIndex(s=1.0)):
        report = reshetnyak_check(f, degree, idx)
        assert report.lhs > 0 and report.rhs > 0
        assert report.rel_gap <= (bound if idx.s == 0 else 3e-2)


@pytest.mark.parametrize('m', [0, 1, 2])
def test_forward_data_is_in_the_range(phantom_factory, tangent_dgrid, m):
    f = phantom_factory(m)
    for l1 in range(m + 1):
        report = range_check(grt(f, (l1, m - l1), tangent_dgrid, Parametrization.tangent))
        assert report.verdict == Verdict.passed
        assert report.parity_defect <= 1e-10
        assert [fit.k for fit in report.moment_fits] == [0, 1, 2, 3, 4]
        assert max(fit.residual for fit in report.moment_fits) <= 1e-3


def test_range_violators_are_caught(phantom_factory, tangent_dgrid):
    g = radon_scalar(phantom_factory(0), tangent_dgrid)
    omega_1 = tangent_dgrid.omegas[:, 0]
    checker = RangeCheckService()
    assert checker.range_check(g).verdict == Verdict.passed
    parity = g.with_values(np.roll(g.values, 3, axis=1))
    assert checker.parity_defect(parity) > 1e-3
    non_polynomial = g.with_values(g.values * (1.0 + np.abs(omega_1))[:, np.newaxis])
    wrong_degree = g.with_values(g.values * (omega_1 ** 2)[:, np.newaxis])
    for violator in (parity, non_polynomial, wrong_degree):
        assert checker.range_check(violator).verdict == Verdict.failed


def test_range_check_arguments(phantom_factory, tangent_dgrid):
    f = phantom_factory(1)
    with pytest.raises(ValueError):
        range_check(grt(f, (1, 0), tangent_dgrid, Parametrization.frame))
    with pytest.raises(ValueError):
        range_check(grt(f, (1, 0), tangent_dgrid, Parametrization.tangent), k_max=7)


def test_kernel_check_removes_the_signature_component(phantom_factory, grid2):
    f = phantom_factory(2)
    dgrid = default_direction_grid(grid2, count=48, with_tangents=False)
    service = KernelCheckService()
    for degrees in degree_signatures(2, 2):
        report = service.kernel_check(f, degrees, dgrid)
        assert report.removed_component == degrees[-1]
        assert report.scale > 0
        assert report.defect <= 1e-3
        assert report.verdict == Verdict.passed
    with pytest.raises(DimensionMismatchError):
        kernel_check(f, (1, 0), dgrid)


@pytest.mark.parametrize('degrees', [(2, 0), (0, 2)])
def test_removed_term_carries_the_whole_slice_spectrum(phantom_factory, grid2, degrees):
    f = phantom_factory(2)
    dgrid = default_direction_grid(grid2, count=16, with_tangents=False)
    sigmas, expected = radon_service.grt_fourier_spectrum(f, degrees, dgrid, Parametrization.frame)
    removed = KernelCheckService().removed_spectrum(f, degrees, dgrid, sigmas)
    # includes sigma = 0, where the term is the limit along the ray
    np.testing.assert_allclose(removed, expected, atol=1e-10 * np.max(np.abs(expected)))


def test_isometry_rejects_bad_weight(phantom_factory):
    with pytest.raises(ValueError):
        NormService().field_norm(phantom_factory(0), SobolevIndex(t=-2.0))
