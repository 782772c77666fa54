import numpy as np
import pytest

from app.models.phantom import PhantomSpec
from app.services.fields.field import (
    Grid,
    SpectralField,
    TensorField,
    dft_field,
    forward_transform,
    inverse_transform,
    pad_field,
    crop_field,
    refine_spectrum,
    relative_error,
    sample_fourier_polar,
)
from app.services.fields.phantom import (
    gaussian_spec,
    make_phantom,
    phantom_service,
    phantom_spectrum,
    random_phantom_spec,
)
from app.utils.errors import DimensionMismatchError, NyquistError, PhantomSupportError


def test_grid_geometry():
    grid = Grid(2, 6.0, 64)
    assert grid.spacing == pytest.approx(12.0 / 64)
    assert grid.axis()[0] == -6.0
    assert grid.axis()[-1] == pytest.approx(6.0 - grid.spacing)
    assert grid.coordinates().shape == (64, 64, 2)
    assert grid.nyquist == pytest.approx(np.pi * 64 / 12.0)
    assert grid.frequency_axis()[32] == 0.0


@pytest.mark.parametrize('n,half_width,size', [(0, 1.0, 16), (2, 1.0, 7), (2, 1.0, 4), (2, 0.0, 16)])
def test_grid_rejects_bad_parameters(n, half_width, size):
    with pytest.raises(ValueError):
        Grid(n, half_width, size)


def test_field_validation(grid2):
    with pytest.raises(DimensionMismatchError):
        TensorField(grid2, 1, np.zeros(grid2.shape + (3,)))
    data = np.zeros(grid2.shape + (1,))
    data[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        TensorField(grid2, 0, data)


def test_round_trip_and_parseval(phantom_factory):
    f = phantom_factory(2)
    F = dft_field(f)
    np.testing.assert_allclose(dft_field(F, "inverse").data, f.data, atol=1e-12)
    assert F.norm() == pytest.approx(f.norm(), rel=1e-10)
    with pytest.raises(ValueError):
        dft_field(f, "sideways")


def test_real_field_spectrum_is_hermitian(phantom_factory):
    F = forward_transform(phantom_factory(1))
    # centered order: index j <-> frequency (j - N/2) step, so -xi sits at N - j except for j = 0
    inner = F.data[1:, 1:]
    mirrored = np.conj(inner[::-1, ::-1])
    assert np.max(np.abs(inner - mirrored)) <= 1e-10 * np.max(np.abs(F.data))


def test_gaussian_matches_closed_form(grid2):
    spec = gaussian_spec(2)
    F = forward_transform(make_phantom(grid2, 0, spec))
    xi = grid2.frequencies()
    inside = np.linalg.norm(xi, axis=-1) <= grid2.nyquist / 2
    expected = 0.5 * np.exp(-np.sum(xi ** 2, axis=-1) / 4.0)
    np.testing.assert_allclose(phantom_spectrum(spec, xi)[..., 0], expected, atol=1e-14)
    gap = np.max(np.abs(F.data[..., 0] - expected)[inside])
    assert gap <= 1e-6 * np.max(np.abs(expected))


def test_random_phantom_matches_closed_form(grid2, rng):
    spec = random_phantom_spec(2, 2, rng)
    F = forward_transform(make_phantom(grid2, 2, spec))
    xi = grid2.frequencies()
    inside = np.linalg.norm(xi, axis=-1) <= grid2.nyquist / 2
    expected = phantom_spectrum(spec, xi)
    assert np.max(np.abs(F.data - expected)[inside]) <= 1e-6 * np.max(np.abs(expected))


def test_translation_is_modulation(phantom_factory, grid2):
    f = phantom_factory(0)
    shifted = TensorField(grid2, 0, np.roll(f.data, 1, axis=0))
    xi = grid2.frequencies()[..., 0]
    expected = np.exp(-1j * xi * grid2.spacing)[..., np.newaxis] * forward_transform(f).data
    assert np.max(np.abs(forward_transform(shifted).data - expected)) <= 1e-10


def test_pad_and_refine(phantom_factory, grid2):
    f = phantom_factory(1)
    big = pad_field(f, 2)
    assert big.grid == grid2.padded(2)
    np.testing.assert_array_equal(crop_field(big, grid2).data, f.data)
    assert big.norm() == pytest.approx(f.norm(), rel=1e-12)
    fine = refine_spectrum(forward_transform(f), 2)
    # every second fine node is a coarse node
    np.testing.assert_allclose(fine.data[::2, ::2], forward_transform(f).data, atol=1e-12)


def test_polar_samples_follow_closed_form(grid2):
    spec = gaussian_spec(2, center=(0.5, -0.25), width=0.8)
    F = refine_spectrum(forward_transform(make_phantom(grid2, 0, spec)), 4)
    omega = np.array([0.6, 0.8])
    sigmas = np.linspace(-grid2.nyquist / 2, grid2.nyquist / 2, 41)
    samples = np.array([t.coeffs[0] for t in sample_fourier_polar(F, omega, sigmas)])
    expected = phantom_spectrum(spec, sigmas[:, np.newaxis] * omega)[:, 0]
    assert np.max(np.abs(samples - expected)) <= 1e-3 * np.max(np.abs(expected))


def test_polar_sampling_rejects_out_of_band(grid2, gaussian2):
    F = forward_transform(gaussian2)
    with pytest.raises(NyquistError):
        sample_fourier_polar(F, [1.0, 0.0], [1.5 * grid2.nyquist])
    with pytest.raises(ValueError):
        sample_fourier_polar(F, [1.0, 1.0], [0.0])


def test_relative_error(phantom_factory):
    f = phantom_factory(1)
    assert relative_error(f, f) == 0.0
    assert relative_error(f * 1.1, f) == pytest.approx(0.1, rel=1e-12)
    zero = TensorField.zeros(f.grid, 1)
    assert relative_error(zero, zero) == 0.0


def test_spectral_field_shape_checked(grid2):
    with pytest.raises(DimensionMismatchError):
        SpectralField(grid2, 2, np.zeros(grid2.shape + (2,)))


def test_phantom_support_enforced():
    grid = Grid(2, 2.0, 32)
    with pytest.raises(PhantomSupportError):
        make_phantom(grid, 0, gaussian_spec(2, center=(1.5, 0.0)))
    with pytest.raises(DimensionMismatchError):
        make_phantom(grid, 1, gaussian_spec(2))


def test_zero_phantom(grid2):
    f = phantom_service.make_phantom(grid2, PhantomSpec(n=2, m=2, terms=[]))
    assert f.norm() == 0.0
    assert inverse_transform(forward_transform(f)).norm() == 0.0
