import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as P
from scipy.integrate import trapezoid

from app.models.reports import Verdict
from app.services.algebra.symtensor import contract_vector
from app.services.analysis.ucp import (
    BumpProfile,
    UcpService,
    d_polynomials,
    default_tensor,
    shell_polynomial,
    transverse_polynomials,
    transverse_spectrum,
    ucp_counterexample,
    ucp_even_corpus,
    ucp_uniqueness_experiment,
    validate_profile,
)
from app.services.fields.field import Grid
from app.services.transforms.directions import default_direction_grid
from app.utils.errors import UcpConfigurationError


@pytest.fixture(scope="module")
def grid3():
    return Grid(3, 3.0, 32)


@pytest.fixture(scope="module")
def dgrid3(grid3):
    return default_direction_grid(grid3, count=500, with_tangents=False)


def test_bump_profile_shape():
    profile = BumpProfile(a=2.0, smoothness=4, amplitude=3.0)
    p = np.linspace(-2.5, 2.5, 1001)
    values = profile.derivative(p)
    assert np.all(values[np.abs(p) <= 1.0] == 0.0)
    assert np.all(values[np.abs(p) >= 2.0] == 0.0)
    np.testing.assert_array_equal(values, profile.derivative(-p))
    assert profile.derivative(np.array([1.5]))[0] == pytest.approx(3.0)
    # odd derivatives of an even profile are odd
    np.testing.assert_array_equal(profile.derivative(p, 1), -profile.derivative(-p, 1))


def test_bump_spectrum_matches_direct_quadrature():
    profile = BumpProfile(a=2.0, smoothness=4)
    p = np.linspace(-2.0, 2.0, 8001)
    s = np.linspace(0.0, 12.0, 25)
    direct = trapezoid(profile.derivative(p)[np.newaxis, :] * np.exp(-1j * np.outer(s, p)), p, axis=1)
    direct = direct / math.sqrt(2.0 * math.pi)
    np.testing.assert_allclose(profile.spectrum(s), direct.real, atol=1e-7 * np.max(np.abs(direct)))


@pytest.mark.parametrize('a,smoothness', [(1.0, 4), (0.5, 4), (2.0, 0)])
def test_bump_profile_rejects_bad_parameters(a, smoothness):
    with pytest.raises(UcpConfigurationError):
        BumpProfile(a=a, smoothness=smoothness)


def test_validate_profile_checks_support():
    profile = BumpProfile(a=2.0, smoothness=4)
    validate_profile(profile, np.linspace(-3.0, 3.0, 61))
    # float offsets that are not mirror images of each other
    validate_profile(profile, np.linspace(-2.5, 2.5, 1001))
    with pytest.raises(UcpConfigurationError):
        validate_profile(profile, np.linspace(-3.0, 3.0, 61), region_radius=1.5)


@pytest.mark.parametrize('k', [0, 1, 2])
def test_transverse_tensors_are_solenoidal(rng, k):
    xi = rng.normal(size=(30, 3))
    values = transverse_spectrum(xi, default_tensor(3, k), k)
    assert values.shape == (30, {0: 1, 1: 3, 2: 6}[k])
    if k > 0:
        contracted = contract_vector(values, xi, 3, k)
        assert np.max(np.abs(contracted)) <= 1e-12 * np.max(np.abs(values))


@pytest.mark.parametrize('m,i', [(0, 0), (2, 0), (2, 2)])
def test_counterexample_data_vanishes_near_the_ball(grid3, dgrid3, m, i):
    profile = BumpProfile(a=2.0, smoothness=2 * (m - i) + i + 4)
    dataset = UcpService().counterexample_data(3, m, i, profile, dgrid3, default_tensor(3, m - i))
    offsets = dgrid3.offsets()
    assert sorted(dataset.sinograms) == sorted(dataset.family(i))
    for g in dataset.sinograms.values():
        assert np.all(g.values[:, np.abs(offsets) < 1.0] == 0.0)
        # even profile and even order: odd moments vanish
        scale = np.max(np.abs(g.values)) * np.sum(np.abs(offsets))
        for k in (1, 3):
            assert np.max(np.abs(g.values @ offsets ** k)) <= 1e-12 * max(scale, 1.0) * 3.0 ** k


def test_counterexample_configuration_errors():
    with pytest.raises(UcpConfigurationError):
        ucp_counterexample(2, 0, 0)
    with pytest.raises(UcpConfigurationError):
        ucp_counterexample(3, 1, 2)
    with pytest.raises(UcpConfigurationError):
        ucp_counterexample(3, 2, 1, degree=(2, 0, 0))
    with pytest.raises(UcpConfigurationError):
        ucp_counterexample(3, 0, 0, a=3.5)


@pytest.mark.slow
def test_odd_dimension_counterexample(grid3, dgrid3):
    report = ucp_counterexample(3, 0, 0, grid=grid3, dgrid=dgrid3)
    assert report.experiment == "ucp-odd"
    assert report.data_norm_on_U_planes == 0.0
    assert report.exterior_norm > 1e-3
    assert report.interior_norm <= 5e-2 * report.exterior_norm
    assert report.verdict == Verdict.passed
    assert report.details["family"] == [[0, 0, 0]]


@pytest.mark.slow
def test_zero_profile_gives_zero_field(grid3, dgrid3):
    report = ucp_counterexample(3, 0, 0, grid=grid3, dgrid=dgrid3, amplitude=0.0)
    assert report.interior_norm == 0.0
    assert report.exterior_norm == 0.0
    assert report.data_norm_on_U_planes == 0.0


@pytest.mark.parametrize('m,i', [(0, 0), (1, 0), (1, 1)])
def test_even_dimension_data_does_not_vanish(m, i):
    report = ucp_uniqueness_experiment(2, m, i)
    assert report.experiment == "ucp-even"
    assert report.interior_norm == 0.0
    assert report.exterior_norm > 0.5
    assert report.data_norm_on_U_planes >= 1e-3
    assert report.verdict == Verdict.passed


def test_shell_polynomial_matches_its_formula(rng):
    c = np.array([0.4, -1.1])
    psi = shell_polynomial(2, 0.7, c, 1.0, 2.0, 3, amplitude=2.0)
    x = rng.uniform(-1.4, 1.4, size=(40, 2))
    s = np.sum(x * x, axis=1)
    expected = 2.0 * (0.7 + x @ c) * ((s - 1.0) * (4.0 - s)) ** 3 / 1.5 ** 6
    np.testing.assert_allclose(P.polyval2d(x[:, 0], x[:, 1], psi), expected, atol=1e-10 * np.max(np.abs(expected)))


def test_transverse_polynomials_are_divergence_free():
    psi = shell_polynomial(2, 0.3, np.array([1.0, -0.5]), 1.0, 2.0, 4)
    v = transverse_polynomials(psi, default_tensor(2, 1), 1)
    divergence = P.polyder(v[..., 0], axis=0)[:, :-1] + P.polyder(v[..., 1], axis=1)[:-1, :]
    assert np.max(np.abs(divergence)) <= 1e-10 * np.max(np.abs(v))
    # order 0: the operator is the identity
    np.testing.assert_array_equal(transverse_polynomials(psi, default_tensor(2, 0), 0)[..., 0], psi)


def test_d_polynomials_of_a_scalar_is_the_gradient():
    psi = shell_polynomial(2, 0.3, np.array([1.0, -0.5]), 1.0, 2.0, 4)
    gradient = d_polynomials(psi[..., np.newaxis], 0, 1)
    np.testing.assert_allclose(gradient[:-1, :, 0], P.polyder(psi, axis=0), atol=1e-12 * np.max(np.abs(psi)))
    np.testing.assert_allclose(gradient[:, :-1, 1], P.polyder(psi, axis=1), atol=1e-12 * np.max(np.abs(psi)))


@pytest.mark.parametrize('k,i', [(0, 1), (1, 0), (1, 1), (2, 0)])
def test_shell_component_vanishes_off_the_shell(rng, k, i):
    grid = Grid(2, 6.0, 64)
    v, f = UcpService().shell_component(grid, rng, k, i, default_tensor(2, k))
    assert (v.m, f.m) == (k, k + i)
    radius = np.linalg.norm(grid.coordinates(), axis=-1)
    off_shell = (radius <= 1.0) | (radius >= 2.0)
    assert np.all(v.data[off_shell] == 0.0)
    assert np.all(f.data[off_shell] == 0.0)
    assert v.norm() > 0 and f.norm() > 0


def test_even_dimension_options():
    assert ucp_uniqueness_experiment(2, 1, 0, amplitude=0.0).verdict == Verdict.passed
    everything = ucp_uniqueness_experiment(2, 1, 0, family="all")
    assert len(everything.details["signatures"]) == 2
    with pytest.raises(UcpConfigurationError):
        ucp_uniqueness_experiment(3, 0, 0)
    with pytest.raises(UcpConfigurationError):
        ucp_uniqueness_experiment(2, 1, 0, family="some")


def test_even_corpus_is_seeded():
    first = ucp_even_corpus(2, 0, 0, count=3, seed=5)
    second = ucp_even_corpus(2, 0, 0, count=3, seed=5)
    assert [r.details["seed"] for r in first] == [r.details["seed"] for r in second]
    assert len({r.details["seed"] for r in first}) == 3
    assert all(r.verdict == Verdict.passed for r in first)
