import json

import numpy as np
import pytest

from app.models.reports import KernelReport, Verdict
from app.services.inversion.invert import GrtDataset
from app.services.storage.artifact_io import ArtifactStore, load_field, load_sinogram, save_field, save_sinogram
from app.services.transforms.directions import default_direction_grid
from app.services.transforms.radon import Parametrization, grt
from app.utils.errors import ArtifactFormatError


@pytest.fixture(scope="module")
def small_dgrid(grid2):
    return default_direction_grid(grid2, count=12)


def test_field_round_trip_is_bit_exact(phantom_factory, tmp_path):
    f = phantom_factory(2)
    path = save_field(f, tmp_path / "f.tfld")
    assert path.read_bytes().startswith(b"TFLD1 ")
    loaded = load_field(path)
    assert (loaded.n, loaded.m, loaded.grid) == (f.n, f.m, f.grid)
    np.testing.assert_array_equal(loaded.data, f.data)


@pytest.mark.parametrize('parametrization', [Parametrization.tangent, Parametrization.frame])
def test_sinogram_round_trip_is_bit_exact(phantom_factory, small_dgrid, tmp_path, parametrization):
    g = grt(phantom_factory(1), (1, 0), small_dgrid, parametrization)
    loaded = load_sinogram(save_sinogram(g, tmp_path / "g.sino"))
    assert loaded.parametrization == parametrization
    assert tuple(loaded.degree) == (1, 0)
    np.testing.assert_array_equal(loaded.values, g.values)
    np.testing.assert_array_equal(loaded.dgrid.omegas, small_dgrid.omegas)
    np.testing.assert_array_equal(loaded.dgrid.offsets(), small_dgrid.offsets())


def test_bad_magic_and_truncated_payload(phantom_factory, tmp_path):
    path = save_field(phantom_factory(0), tmp_path / "f.tfld")
    raw = path.read_bytes()
    with pytest.raises(ArtifactFormatError):
        load_sinogram(path)
    (tmp_path / "cut.tfld").write_bytes(raw[:-8])
    with pytest.raises(ArtifactFormatError):
        load_field(tmp_path / "cut.tfld")
    (tmp_path / "odd.tfld").write_bytes(raw[:-3])
    with pytest.raises(ArtifactFormatError):
        load_field(tmp_path / "odd.tfld")
    (tmp_path / "bare.tfld").write_bytes(b"TFLD1 {}")
    with pytest.raises(ArtifactFormatError):
        load_field(tmp_path / "bare.tfld")


def test_dataset_directory_round_trip(phantom_factory, grid2, tmp_path):
    dgrid = default_direction_grid(grid2, count=12, with_tangents=False)
    dataset = GrtDataset.from_field(phantom_factory(2), dgrid)
    store = ArtifactStore(tmp_path)
    directory = store.save_dataset(dataset, "data")
    assert sorted(p.name for p in directory.glob("*.sino")) == ["sino_0_2.sino", "sino_1_1.sino", "sino_2_0.sino"]
    loaded = store.load_dataset(directory)
    assert (loaded.n, loaded.m) == (2, 2)
    for degrees, sinogram in dataset.sinograms.items():
        np.testing.assert_array_equal(loaded.sinograms[degrees].values, sinogram.values)
    with pytest.raises(ArtifactFormatError):
        store.load_dataset(tmp_path / "empty")


def test_reports_are_written_as_json(tmp_path):
    report = KernelReport(degree=[1, 0], removed_component=0, defect=2e-5, scale=1.0, verdict=Verdict.passed)
    path = ArtifactStore(tmp_path).save_report(report, "kernel.json")
    assert path == tmp_path.resolve() / "kernel.json"
    assert json.loads(path.read_text())["verdict"] == "pass"
