"""
Artifact Storage Service.

This module provides functionality to save and load the files a run
produces:

- TFLD: one header line ``TFLD1 {json}`` (n, m, N, L and the coefficient
  ordering) followed by little-endian float64 values, node-major C order
  over the grid axes and then the coefficient index;
- SINO: one header line ``SINO1 {json}`` (m, n, degree, parametrization,
  explicit directions and tangents, offset grid, quadrature weights)
  followed by float64 values indexed (omega, u, p);
- reports as indented JSON, one file per checker.

Values round-trip bit-exactly.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from app.services.algebra.symtensor import sym_basis, sym_dimension
from app.services.fields.field import Grid, TensorField
from app.services.inversion.invert import GrtDataset
from app.services.transforms.directions import DirectionGrid
from app.services.transforms.radon import Parametrization, Sinogram
from app.utils.errors import ArtifactFormatError
from app.utils.run_logging import log_artifact_write

# Configure logging
logger = logging.getLogger(__name__)

FIELD_MAGIC = "TFLD1"
SINOGRAM_MAGIC = "SINO1"
COEFFICIENT_ORDERING = "lexicographic-nondecreasing"
PAYLOAD_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


def _write(path: Path, magic: str, header: dict, values: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(f"{magic} {json.dumps(header)}\n".encode("utf-8"))
        handle.write(np.ascontiguousarray(values, dtype=PAYLOAD_DTYPE).tobytes())


def _read(path: Path, magic: str) -> Tuple[dict, np.ndarray]:
    with open(path, "rb") as handle:
        raw = handle.read()
    line, separator, payload = raw.partition(b"\n")
    if not separator:
        raise ArtifactFormatError(f"{path}: missing header line")
    try:
        found, _, text = line.decode("utf-8").partition(" ")
        header = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArtifactFormatError(f"{path}: unreadable header ({e})") from e
    if found != magic:
        raise ArtifactFormatError(f"{path}: expected magic {magic}, found {found!r}")
    if len(payload) % PAYLOAD_DTYPE.itemsize:
        raise ArtifactFormatError(f"{path}: payload of {len(payload)} bytes is not a float64 array")
    return header, np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(float)


def _reshape(path: Path, values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if values.size != int(np.prod(shape)):
        raise ArtifactFormatError(f"{path}: payload holds {values.size} values, header announces shape {shape}")
    return values.reshape(shape)


def _signature_name(degree) -> str:
    return "_".join(str(l) for l in degree) if len(degree) else "scalar"


class ArtifactStore:
    """Service for TFLD, SINO and report files."""

    def __init__(self, output_dir: Optional[PathLike] = None):
        """
        Initialize the Artifact Store.

        Args:
            output_dir: Directory that relative save paths are resolved against
        """
        self.output_dir = Path(output_dir).resolve() if output_dir is not None else None

    def _resolve(self, path: PathLike) -> Path:
        path = Path(path)
        if self.output_dir is not None and not path.is_absolute():
            return self.output_dir / path
        return path

    def save_field(self, f: TensorField, path: PathLike) -> Path:
        """
        Write a tensor field as TFLD.

        Args:
            f: Field to store
            path: Target file

        Returns:
            Path written
        """
        path = self._resolve(path)
        header = {
            "n": f.n,
            "m": f.m,
            "N": f.grid.size,
            "L": f.grid.half_width,
            "ordering": COEFFICIENT_ORDERING,
            "basis": [list(index) for index in sym_basis(f.n, f.m)],
        }
        if np.iscomplexobj(f.data):
            raise ArtifactFormatError(f"{path}: TFLD stores real fields only")
        _write(path, FIELD_MAGIC, header, f.data)
        log_artifact_write("TFLD", path, f.data.size, logger)
        return path

    def load_field(self, path: PathLike) -> TensorField:
        """Read a TFLD file back into a TensorField."""
        path = Path(path)
        header, values = _read(path, FIELD_MAGIC)
        try:
            n, m, size, half_width = int(header["n"]), int(header["m"]), int(header["N"]), float(header["L"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactFormatError(f"{path}: incomplete TFLD header ({e})") from e
        if header.get("ordering", COEFFICIENT_ORDERING) != COEFFICIENT_ORDERING:
            raise ArtifactFormatError(f"{path}: unsupported coefficient ordering {header['ordering']!r}")
        grid = Grid(n, half_width, size)
        data = _reshape(path, values, grid.shape + (sym_dimension(n, m),))
        return TensorField(grid, m, data)

    def save_sinogram(self, g: Sinogram, path: PathLike) -> Path:
        """Write a sinogram as SINO with its direction grid spelled out."""
        path = self._resolve(path)
        dgrid = g.dgrid
        tangent = g.parametrization == Parametrization.tangent
        header = {
            "m": g.m,
            "n": g.n,
            "parametrization": g.parametrization.value,
            "degree": list(g.degree),
            "directions": dgrid.omegas.tolist(),
            "tangents": dgrid.tangents.tolist() if dgrid.tangents is not None else None,
            "p": {"count": dgrid.p_count, "spacing": dgrid.p_spacing, "offset": dgrid.p_offset},
            "weights": dgrid.weights.tolist(),
            "tangent_weights": dgrid.tangent_weights.tolist() if dgrid.tangent_weights is not None else None,
            "shape": list(g.values.shape),
            "axes": ["omega", "u", "p"] if tangent else ["omega", "p"],
        }
        _write(path, SINOGRAM_MAGIC, header, g.values)
        log_artifact_write("SINO", path, g.values.size, logger)
        return path

    def load_sinogram(self, path: PathLike) -> Sinogram:
        """Read a SINO file back into a Sinogram."""
        path = Path(path)
        header, values = _read(path, SINOGRAM_MAGIC)
        try:
            p_grid = header["p"]
            dgrid = DirectionGrid(
                omegas=np.array(header["directions"], dtype=float),
                p_count=int(p_grid["count"]),
                p_spacing=float(p_grid["spacing"]),
                tangents=None if header["tangents"] is None else np.array(header["tangents"], dtype=float),
                weights=np.array(header["weights"], dtype=float),
                tangent_weights=None if header.get("tangent_weights") is None
                else np.array(header["tangent_weights"], dtype=float),
            )
            parametrization = Parametrization(header["parametrization"])
            shape = tuple(int(s) for s in header["shape"])
            m, degree = int(header["m"]), tuple(int(l) for l in header["degree"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactFormatError(f"{path}: incomplete SINO header ({e})") from e
        return Sinogram(m, degree, dgrid, _reshape(path, values, shape), parametrization)

    def save_dataset(self, dataset: GrtDataset, directory: PathLike) -> Path:
        """One SINO file per frame signature, named sino_<l_1>_.._<l_n>.sino."""
        directory = self._resolve(directory)
        for degrees, sinogram in dataset.sinograms.items():
            self.save_sinogram(sinogram, directory / f"sino_{_signature_name(degrees)}.sino")
        return directory

    def load_dataset(self, directory: PathLike) -> GrtDataset:
        """Collect every frame SINO file of a directory into a dataset."""
        directory = Path(directory)
        files = sorted(directory.glob("*.sino"))
        if not files:
            raise ArtifactFormatError(f"{directory}: no SINO files found")
        sinograms: Dict[Tuple[int, ...], Sinogram] = {}
        for path in files:
            sinogram = self.load_sinogram(path)
            if sinogram.parametrization != Parametrization.frame:
                logger.warning(f"Skipping {path.name}: {sinogram.parametrization.value} data is not part of a frame dataset")
                continue
            sinograms[tuple(sinogram.degree)] = sinogram
        first = next(iter(sinograms.values()), None)
        if first is None:
            raise ArtifactFormatError(f"{directory}: no frame-parametrized SINO files found")
        dgrid = first.dgrid
        for degrees, sinogram in sinograms.items():
            same = (
                sinogram.dgrid.K == dgrid.K
                and np.array_equal(sinogram.dgrid.omegas, dgrid.omegas)
                and sinogram.dgrid.p_count == dgrid.p_count
                and sinogram.dgrid.p_spacing == dgrid.p_spacing
            )
            if not same:
                raise ArtifactFormatError(f"{directory}: signature {degrees} uses a different direction grid")
            sinograms[degrees] = Sinogram(sinogram.m, degrees, dgrid, sinogram.values, Parametrization.frame)
        return GrtDataset(first.n, first.m, dgrid, sinograms)

    def save_report(self, report: BaseModel, path: PathLike) -> Path:
        """Write a pydantic report as indented JSON."""
        path = self._resolve(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2))
        log_artifact_write("report", path, 1, logger)
        return path


# Create a default instance of the service
artifact_store = ArtifactStore()


# Functions for backward compatibility
def save_field(f: TensorField, path: PathLike) -> Path:
    return artifact_store.save_field(f, path)


def load_field(path: PathLike) -> TensorField:
    return artifact_store.load_field(path)


def save_sinogram(g: Sinogram, path: PathLike) -> Path:
    return artifact_store.save_sinogram(g, path)


def load_sinogram(path: PathLike) -> Sinogram:
    return artifact_store.load_sinogram(path)
