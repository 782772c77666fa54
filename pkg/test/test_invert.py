import numpy as np
import pytest

from app.models.phantom import ComponentPolynomial, Monomial, PhantomSpec, PhantomTerm
from app.services.decomposition.decomp import apply_d, decompose, delta_d_apply, solenoidal_part
from app.services.fields.field import relative_error
from app.services.fields.phantom import make_phantom
from app.services.inversion.invert import (
    GrtDataset,
    InversionService,
    assemble_normal_data,
    invert_full,
    radon_invert,
    recover_component,
)
from app.services.transforms.directions import default_direction_grid
from app.services.transforms.radon import Parametrization, Sinogram, radon_componentwise, radon_scalar
from app.utils.errors import DimensionMismatchError, IncompleteDatasetError

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def dgrid(grid2):
    return default_direction_grid(grid2, with_tangents=False)


def two_gaussians():
    components = [ComponentPolynomial(index=[], monomials=[Monomial(powers=[0, 0], coefficient=1.0)])]
    shifted = [ComponentPolynomial(index=[], monomials=[Monomial(powers=[0, 0], coefficient=-0.6)])]
    return PhantomSpec(n=2, m=0, terms=[
        PhantomTerm(center=[0.8, -0.4], width=0.7, components=components),
        PhantomTerm(center=[-1.0, 0.9], width=0.9, components=shifted),
    ])


def test_radon_inversion_round_trip(grid2, dgrid, gaussian2):
    recovered = radon_invert(radon_scalar(gaussian2, dgrid), grid2)
    assert relative_error(recovered, gaussian2) <= 2e-2


def test_two_gaussian_round_trip(grid2, dgrid):
    f = make_phantom(grid2, 0, two_gaussians())
    assert relative_error(radon_invert(radon_scalar(f, dgrid), grid2), f) <= 3e-2


@pytest.mark.parametrize('m', [0, 1, 2])
def test_full_inversion_round_trip(phantom_factory, grid2, dgrid, m):
    f = phantom_factory(m)
    dataset = GrtDataset.from_field(f, dgrid)
    recovered, reports = InversionService().invert_full_with_report(dataset, grid2)
    assert relative_error(recovered, f) <= 5e-2
    assert [report.component for report in reports] == list(range(m + 1))
    assert all(report.imag_residue <= 1e-3 for report in reports)


def test_components_match_decomposition(phantom_factory, grid2, dgrid):
    f = phantom_factory(1)
    dataset = GrtDataset.from_field(f, dgrid)
    parts = decompose(f)
    for i in range(2):
        recovered = recover_component(dataset, i, grid2)
        assert recovered.m == 1 - i
        assert relative_error(recovered, parts.v[i]) <= 5e-2


def test_solenoidal_component_carries_the_field_integral(phantom_factory, grid2, dgrid):
    f = phantom_factory(1)
    dataset = GrtDataset.from_field(f, dgrid)
    integral = f.data.sum(axis=(0, 1)) * grid2.cell_volume()
    service = InversionService()
    np.testing.assert_allclose(service.field_integral(dataset), integral, atol=1e-3 * np.linalg.norm(integral))
    v0 = service.recover_component(dataset, 0, grid2)
    np.testing.assert_allclose(v0.data.sum(axis=(0, 1)) * grid2.cell_volume(), integral,
                               atol=1e-3 * np.linalg.norm(integral))


def test_reconstruction_is_idempotent(phantom_factory, grid2, dgrid):
    once = invert_full(GrtDataset.from_field(phantom_factory(1), dgrid), grid2)
    twice = invert_full(GrtDataset.from_field(once, dgrid), grid2)
    assert relative_error(twice, once) <= 1e-2


def test_normal_data_is_the_radon_transform_of_delta_d(phantom_factory, dgrid):
    f = phantom_factory(1)
    dataset = GrtDataset.from_field(f, dgrid)
    # delta d v_1 = delta f stays inside the box, so the hyperplane integrals compare directly
    expected = radon_componentwise(delta_d_apply(decompose(f).v[1], 1), dgrid)
    assembled = assemble_normal_data(dataset, 1)
    assert len(assembled) == len(expected) == 1
    scale = np.max(np.abs(expected[0].values))
    assert np.max(np.abs(assembled[0].values - expected[0].values)) <= 1e-3 * scale


@pytest.mark.parametrize('i', [0, 1])
def test_component_ignores_the_other_components(phantom_factory, grid2, dgrid, gaussian2, i):
    f = phantom_factory(1)
    if i == 0:
        # adds to v_1 only
        other = f + apply_d(gaussian2)
    else:
        # adds to v_0 only
        other = f + solenoidal_part(phantom_factory(1, seed=7))
    baseline = recover_component(GrtDataset.from_field(f, dgrid), i, grid2)
    changed = recover_component(GrtDataset.from_field(other, dgrid), i, grid2)
    assert relative_error(changed, baseline) <= 1e-2


@pytest.mark.parametrize('i', [0, 1])
def test_zeroed_family_gives_a_zero_component(phantom_factory, grid2, dgrid, i):
    f = phantom_factory(1)
    dataset = GrtDataset.from_field(f, dgrid)
    zeroed = dataset.with_family(i)
    assert recover_component(zeroed, i, grid2).norm() <= 1e-2 * f.norm()
    kept = 1 - i
    assert relative_error(recover_component(zeroed, kept, grid2), recover_component(dataset, kept, grid2)) <= 1e-2


def test_components_use_only_their_family(phantom_factory, grid2, dgrid):
    f = phantom_factory(1)
    dataset = GrtDataset.from_field(f, dgrid)
    perturbed = dataset.with_family(1)
    baseline = recover_component(dataset, 0, grid2)
    assert relative_error(recover_component(perturbed, 0, grid2), baseline) <= 1e-3


def test_pure_potential_has_no_solenoidal_part(grid2, dgrid, gaussian2):
    f = apply_d(gaussian2)
    v0 = recover_component(GrtDataset.from_field(f, dgrid), 0, grid2)
    assert v0.norm() <= 1e-2 * f.norm()


def test_incomplete_dataset(phantom_factory, grid2, dgrid):
    dataset = GrtDataset.from_field(phantom_factory(1), dgrid)
    partial = GrtDataset(2, 1, dgrid, {(1, 0): dataset.sinograms[(1, 0)]})
    assert partial.missing(1) == [(0, 1)]
    # the l_n = 0 family alone still gives v_0
    assert recover_component(partial, 0, grid2).m == 1
    with pytest.raises(IncompleteDatasetError):
        recover_component(partial, 1, grid2)
    with pytest.raises(IncompleteDatasetError):
        invert_full(partial, grid2)


def test_dataset_validation(dgrid):
    zeros = np.zeros((dgrid.K, dgrid.p_size))
    frame_data = Sinogram(1, (1, 0), dgrid, zeros, Parametrization.frame)
    with pytest.raises(DimensionMismatchError):
        GrtDataset(2, 1, dgrid, {(0, 1): frame_data})
    with pytest.raises(DimensionMismatchError):
        GrtDataset(2, 2, dgrid, {(1, 0): frame_data})
    assert GrtDataset(2, 2, dgrid).family(1) == [(1, 1)]
