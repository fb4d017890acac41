"""CSV/JSON persistence: field files, sample sets, snapshot matrices, manifests, surrogate directories"""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from app import __version__
from app.core.exceptions import ArtifactError, SampleMismatch
from app.models.fields import MacroField
from app.models.sample import BlockLayout, ParameterSample
from app.schemas.manifest import FileEntry, SurrogateManifest, SweepMarker
from app.schemas.scenario import ScenarioConfig
from app.services.bifidelity import BiFidelitySurrogate, Fidelity, SelectionResult, Snapshot, assemble_surrogate
from app.services.scenarios import layout_for

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FIELD_COLUMNS = ["x", "rho", "u1", "u2", "T"]
SURROGATE_MANIFEST = "manifest.json"
LOW_SNAPSHOTS = "low_snapshots.csv"
HIGH_SNAPSHOTS = "high_snapshots.csv"
SELECTED_LOW = "selected_low_snapshots.csv"


def write_frame(frame: pd.DataFrame, path: Path):
    # str(float) is the shortest round-trip representation
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    frame.to_csv(tmp, index=False, float_format=None, lineterminator="\n")
    os.replace(tmp, path)


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e


def field_frame(x: np.ndarray, macro: Union[MacroField, np.ndarray]) -> pd.DataFrame:
    """Columns x, rho, u1, u2, T; a concatenated [rho; u1; T] vector is written as is with u2 = 0"""
    if isinstance(macro, MacroField):
        rho, u, temperature = macro.primitive()
        u1, u2 = u[:, 0], u[:, 1]
    else:
        rho, u1, temperature = np.split(np.asarray(macro, dtype=float), 3)
        u2 = np.zeros_like(rho)
    return pd.DataFrame({"x": x, "rho": rho, "u1": u1, "u2": u2, "T": temperature}, columns=FIELD_COLUMNS)


def write_field(path: PathLike, x: np.ndarray, macro: Union[MacroField, np.ndarray]) -> Path:
    path = Path(path)
    write_frame(field_frame(x, macro), path)
    return path


def read_field(path: PathLike) -> Tuple[np.ndarray, MacroField]:
    frame = _read_csv(Path(path))
    missing = set(FIELD_COLUMNS) - set(frame.columns)
    if missing:
        raise ArtifactError(f"{path} lacks columns {sorted(missing)}")
    macro = MacroField.from_primitive(frame["rho"].to_numpy(), frame["u1"].to_numpy(), frame["u2"].to_numpy(), frame["T"].to_numpy())
    return frame["x"].to_numpy(), macro


def field_name(sample_id: int) -> str:
    return f"sample_{sample_id:05d}.csv"


class TrajectoryWriter:
    """Observer that dumps the macroscopic field every `every` steps"""

    def __init__(self, directory: PathLike, x: np.ndarray, every: int = 1):
        self.directory = Path(directory)
        self.x = np.asarray(x)
        self.every = max(1, int(every))
        self.count = 0
        self.paths: List[Path] = []

    def __call__(self, time: float, macro: MacroField):
        if self.count % self.every == 0:
            path = self.directory / f"t_{self.count:06d}.csv"
            frame = field_frame(self.x, macro)
            frame.insert(0, "time", time)
            write_frame(frame, path)
            self.paths.append(path)
        self.count += 1


def write_samples(path: PathLike, samples: Sequence[ParameterSample]) -> Path:
    path = Path(path)
    dimension = samples[0].layout.dimension
    frame = pd.DataFrame([s.z for s in samples], columns=[f"z{i + 1}" for i in range(dimension)])
    frame.insert(0, "id", [s.sample_id for s in samples])
    write_frame(frame, path)
    return path


def read_samples(path: PathLike, layout: BlockLayout, stream: str = "train") -> List[ParameterSample]:
    frame = _read_csv(Path(path))
    z_columns = [c for c in frame.columns if c != "id"]
    if "id" not in frame.columns or len(z_columns) != layout.dimension:
        raise SampleMismatch(
            f"{path} has columns {list(frame.columns)}, expected id and {layout.dimension} z components"
        )
    if frame["id"].duplicated().any():
        raise SampleMismatch(f"{path} repeats sample ids")
    try:
        values = frame[z_columns].to_numpy(dtype=float)
        return [
            ParameterSample(sample_id=int(i), z=z, layout=layout, stream=stream)
            for i, z in zip(frame["id"].to_numpy(), values)
        ]
    except ValueError as e:
        # non-numeric entries, or z outside [-1, 1] rejected by ParameterSample
        raise SampleMismatch(f"{path}: {e}") from e


def write_snapshots(path: PathLike, snapshots: Sequence[Snapshot]) -> Path:
    path = Path(path)
    frame = pd.DataFrame({str(s.sample_id): s.values for s in snapshots})
    write_frame(frame, path)
    return path


def read_snapshots(path: PathLike, fidelity: Fidelity) -> List[Snapshot]:
    frame = _read_csv(Path(path))
    return [Snapshot(int(column), frame[column].to_numpy(), fidelity) for column in frame.columns]


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def inventory(paths: Iterable[Path], root: Path) -> List[FileEntry]:
    return [
        FileEntry(path=str(Path(p).relative_to(root)), sha256=file_digest(p), size=Path(p).stat().st_size)
        for p in sorted(paths)
    ]


def write_json(path: PathLike, model: BaseModel) -> Path:
    """Atomic write; used last so a manifest marks a finished run"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(model.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def save_surrogate(
    directory: PathLike,
    surrogate: BiFidelitySurrogate,
    scenario: ScenarioConfig,
    samples: Dict[int, ParameterSample],
    timings: Optional[Dict[str, float]] = None,
    extra_files: Sequence[Path] = (),
) -> SurrogateManifest:
    directory = Path(directory)
    selection = surrogate.selection
    low = [Snapshot(i, selection.low_matrix[:, k], Fidelity.LOW) for k, i in enumerate(selection.selected_ids)]
    high = [Snapshot(i, surrogate.high_matrix[:, k], Fidelity.HIGH) for k, i in enumerate(selection.selected_ids)]
    files = [write_snapshots(directory / SELECTED_LOW, low), write_snapshots(directory / HIGH_SNAPSHOTS, high)]

    manifest = SurrogateManifest(
        config_hash=scenario.config_hash(),
        scenario=scenario.model_dump(mode="json"),
        artifact_version=__version__,
        layout=layout_for(scenario.family, scenario.d1).describe(),
        selected_ids=list(selection.selected_ids),
        selected_z=[samples[i].z.tolist() for i in selection.selected_ids],
        residuals=selection.residuals.tolist(),
        requested_budget=selection.requested,
        stopped_early=selection.stopped_early,
        rank=surrogate.rank,
        condition_number=surrogate.condition_number,
        x_spacing=selection.x_spacing,
        block_weights=selection.block_weights.tolist(),
        timings=timings or {},
        files=inventory(files + [Path(p) for p in extra_files], directory),
    )
    write_json(directory / SURROGATE_MANIFEST, manifest)
    logger.info(f"Saved surrogate with {selection.size} snapshots to {directory}")
    return manifest


def load_manifest(directory: PathLike) -> SurrogateManifest:
    path = Path(directory) / SURROGATE_MANIFEST
    if not path.exists():
        raise ArtifactError(f"no surrogate manifest in {directory}")
    try:
        return SurrogateManifest.model_validate_json(path.read_text())
    except ValidationError as e:
        raise ArtifactError(f"invalid surrogate manifest {path}: {e}") from e


def load_surrogate(directory: PathLike) -> Tuple[BiFidelitySurrogate, SurrogateManifest, ScenarioConfig]:
    directory = Path(directory)
    manifest = load_manifest(directory)
    for entry in manifest.files:
        if file_digest(directory / entry.path) != entry.sha256:
            raise ArtifactError(f"checksum mismatch for {entry.path} in {directory}")

    low = read_snapshots(directory / SELECTED_LOW, Fidelity.LOW)
    high = read_snapshots(directory / HIGH_SNAPSHOTS, Fidelity.HIGH)
    if [s.sample_id for s in low] != manifest.selected_ids:
        raise ArtifactError(f"stored low-fidelity snapshots do not match the manifest in {directory}")

    low_matrix = np.stack([s.values for s in low], axis=1)
    weights = np.asarray(manifest.block_weights, dtype=float)
    # recover the orthonormal basis and residuals by replaying the greedy steps on the stored columns
    selection = SelectionResult(
        selected_ids=tuple(manifest.selected_ids),
        residuals=np.asarray(manifest.residuals, dtype=float),
        basis=_orthonormal_basis(low_matrix, manifest.x_spacing, weights),
        low_matrix=low_matrix,
        x_spacing=manifest.x_spacing,
        block_weights=weights,
        requested=manifest.requested_budget,
        stopped_early=manifest.stopped_early,
    )
    scenario = ScenarioConfig.from_dict(manifest.scenario)
    return assemble_surrogate(selection, high), manifest, scenario


def _orthonormal_basis(low_matrix: np.ndarray, x_spacing: float, weights: np.ndarray) -> np.ndarray:
    x_count = low_matrix.shape[0] // 3
    scaled = low_matrix * (np.sqrt(x_spacing) * np.repeat(weights, x_count))[:, None]
    basis, _ = np.linalg.qr(scaled)
    return basis


def sweep_key(scenario: ScenarioConfig, samples: Sequence[ParameterSample]) -> str:
    """Digest of the scenario and the exact z values a low-fidelity sweep was run with"""
    digest = hashlib.sha256(scenario.config_hash().encode())
    for sample in samples:
        digest.update(np.int64(sample.sample_id).tobytes())
        digest.update(np.ascontiguousarray(sample.z, dtype="<f8").tobytes())
    return digest.hexdigest()


def sweep_marker(path: PathLike) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def write_low_sweep(path: PathLike, snapshots: Sequence[Snapshot], key: str) -> List[Path]:
    """Snapshot CSV plus its sidecar marker, written after the CSV"""
    path = write_snapshots(path, snapshots)
    marker = write_json(sweep_marker(path), SweepMarker(sweep_key=key, sample_ids=[s.sample_id for s in snapshots]))
    return [path, marker]


def read_low_sweep(path: PathLike, expected_ids: Sequence[int], key: str) -> Optional[List[Snapshot]]:
    """Previously completed low-fidelity sweep, or None when absent or produced by another config or sample set"""
    path = Path(path)
    marker_path = sweep_marker(path)
    if not path.exists():
        return None
    if not marker_path.exists():
        logger.warning(f"Ignoring {path}: no sweep marker {marker_path.name}")
        return None
    try:
        marker = SweepMarker.model_validate_json(marker_path.read_text())
    except ValidationError as e:
        raise ArtifactError(f"invalid sweep marker {marker_path}: {e}") from e
    if marker.sweep_key != key:
        logger.warning(f"Ignoring {path}: it was produced by a different scenario config or sample set")
        return None

    snapshots = read_snapshots(path, Fidelity.LOW)
    if [s.sample_id for s in snapshots] != list(expected_ids) or marker.sample_ids != list(expected_ids):
        logger.warning(f"Ignoring {path}: sample ids differ from the current training set")
        return None
    logger.info(f"Resuming from {len(snapshots)} stored low-fidelity snapshots in {path}")
    return snapshots
