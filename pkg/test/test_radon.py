import math

import numpy as np
import pytest

from app.services.algebra.symtensor import degree_signatures
from app.services.fields.field import Grid, TensorField
from app.services.fields.phantom import gaussian_spec, make_phantom
from app.services.transforms.directions import (
    default_direction_grid,
    equiangular_directions,
    fibonacci_directions,
)
from app.services.transforms.radon import (
    Parametrization,
    RadonService,
    Sinogram,
    derivative_identity_defect,
    differentiation_defect,
    divergence_identity_defect,
    grt,
    grt_fourier,
    radon_componentwise,
    radon_scalar,
    slice_check,
)
from app.utils.errors import DimensionMismatchError


@pytest.fixture(scope="module")
def coarse_dgrid(grid2):
    return default_direction_grid(grid2, count=32)


@pytest.fixture(scope="module")
def frame_dgrid(grid2):
    return default_direction_grid(grid2, count=32, with_tangents=False)


def test_direction_grids_are_antipodally_closed():
    planar = equiangular_directions(12, 8, 0.5)
    assert planar.antipodally_closed
    np.testing.assert_allclose(planar.omegas[planar.antipode], -planar.omegas, atol=1e-15)
    spatial = fibonacci_directions(40, 8, 0.5, tangent_count=8)
    assert spatial.antipodally_closed
    assert spatial.weights.sum() == pytest.approx(4 * math.pi)
    with pytest.raises(ValueError):
        equiangular_directions(7, 8, 0.5)


def test_gaussian_radon_transform_closed_form():
    grid = Grid(2, 6.0, 128)
    dgrid = default_direction_grid(grid, count=16, with_tangents=False)
    g = radon_scalar(make_phantom(grid, 0, gaussian_spec(2)), dgrid)
    expected = math.sqrt(math.pi) * np.exp(-dgrid.offsets() ** 2)
    assert np.max(np.abs(g.values - expected)) <= 1e-4 * math.sqrt(math.pi)


def test_componentwise_matches_scalar_transform(phantom_factory, coarse_dgrid):
    f = phantom_factory(2)
    rows = radon_componentwise(f, coarse_dgrid)
    assert len(rows) == 3
    for c, row in enumerate(rows):
        component = TensorField(f.grid, 0, f.data[..., c:c + 1])
        np.testing.assert_allclose(row.values, radon_scalar(component, coarse_dgrid).values, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize('m', [0, 1, 2])
def test_quadrature_and_fourier_agree(phantom_factory, coarse_dgrid, m):
    f = phantom_factory(m)
    for l1 in range(m + 1):
        quadrature = grt(f, (l1, m - l1), coarse_dgrid, Parametrization.tangent).values
        spectral = grt_fourier(f, (l1, m - l1), coarse_dgrid, Parametrization.tangent).values
        assert np.linalg.norm(quadrature - spectral) <= 1e-3 * np.linalg.norm(spectral)


def test_fourier_slice_relation(phantom_factory, coarse_dgrid):
    f = phantom_factory(1)
    assert slice_check(f, (1, 0), coarse_dgrid, Parametrization.tangent) <= 1e-3
    assert slice_check(f, (0, 1), coarse_dgrid, Parametrization.tangent) <= 1e-3


def test_parity_under_antipodes(phantom_factory, coarse_dgrid):
    f = phantom_factory(2)
    g = grt(f, (1, 1), coarse_dgrid, Parametrization.tangent)
    flipped = g.values[coarse_dgrid.antipode][:, :, ::-1]
    flipped = np.take_along_axis(flipped, coarse_dgrid.tangent_antipode[:, :, np.newaxis], axis=1)
    assert np.max(np.abs(flipped - g.values)) <= 1e-10 * g.max_abs()


def test_frame_and_tangent_forms_agree_in_the_plane(phantom_factory, coarse_dgrid):
    # for n = 2 the first tangent is omega_1, so tangent degree (a, b) is frame signature (b, a)
    f = phantom_factory(2)
    for a, b in [(2, 0), (1, 1), (0, 2)]:
        tangent = grt(f, (a, b), coarse_dgrid, Parametrization.tangent).values[:, 0, :]
        framed = grt(f, (b, a), coarse_dgrid, Parametrization.frame).values
        np.testing.assert_allclose(tangent, framed, rtol=1e-12, atol=1e-14)


def test_all_signatures_share_one_pass(phantom_factory, frame_dgrid):
    f = phantom_factory(2)
    service = RadonService()
    every = service.grt_all_signatures(f, frame_dgrid)
    assert list(every) == degree_signatures(2, 2)
    for degrees, g in every.items():
        np.testing.assert_allclose(g.values, service.grt(f, degrees, frame_dgrid, Parametrization.frame).values,
                                   atol=1e-14)


def test_differentiation_property_converges(phantom_factory, grid2):
    # centered differences in p: halving the offset spacing cuts the defect by about four
    f = phantom_factory(0)
    coarse = default_direction_grid(grid2, count=16, with_tangents=False)
    fine = default_direction_grid(grid2, count=16, with_tangents=False, p_count=grid2.size, p_spacing=grid2.spacing / 2)
    first = differentiation_defect(f, [0.3, -0.7], coarse)
    second = differentiation_defect(f, [0.3, -0.7], fine)
    assert first.shape == (16,)
    assert np.max(first) <= 0.2
    assert np.max(second) <= 0.35 * np.max(first)


@pytest.mark.parametrize('k', [1, 2])
def test_potential_fields_and_frame_signatures(phantom_factory, frame_dgrid, k):
    v = phantom_factory(1)
    for degrees in degree_signatures(2, 1 + k):
        defect = derivative_identity_defect(v, k, degrees, frame_dgrid, method="spectral")
        assert defect.branch == ("vanishing" if degrees[-1] < k else "derivative")
        assert defect.defect <= 1e-3


def test_divergence_identity(phantom_factory, frame_dgrid):
    v = phantom_factory(2)
    for j, degrees in [(1, (1, 0)), (1, (0, 1)), (2, (0, 0))]:
        defect = divergence_identity_defect(v, j, degrees, frame_dgrid, method="spectral")
        assert defect.defect <= 1e-3


def test_shape_and_degree_validation(phantom_factory, coarse_dgrid):
    f = phantom_factory(1)
    with pytest.raises(DimensionMismatchError):
        radon_scalar(f, coarse_dgrid)
    with pytest.raises(DimensionMismatchError):
        grt(f, (1, 1), coarse_dgrid)
    with pytest.raises(DimensionMismatchError):
        Sinogram(1, (1, 0), coarse_dgrid, np.zeros((coarse_dgrid.K, 3)), Parametrization.frame)
    with pytest.raises(DimensionMismatchError):
        derivative_identity_defect(f, 1, (1, 0), coarse_dgrid)
