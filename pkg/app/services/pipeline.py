"""Offline and online stages end to end: sample sweeps, training, evaluation, studies"""
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app import __version__
from app.evaluation.evaluator import StudyEvaluator, StudyResult
from app.models.sample import ParameterSample
from app.schemas.manifest import RunManifest, SurrogateManifest
from app.schemas.scenario import ScenarioConfig
from app.services import storage
from app.services.bifidelity import BiFidelitySurrogate, Fidelity, assemble_surrogate, greedy_select
from app.services.runner import SweepResult, run_model, sweep
from app.services.scenarios import draw_samples, initial_macro, layout_for, zero_sample

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRAIN_STREAM = "train"
TEST_STREAM = "test"
TRAIN_SAMPLES = "train_samples.csv"
TEST_SAMPLES = "test_samples.csv"
RUN_MANIFEST = "manifest.json"
REPORT = "report.json"
CONVERGENCE = "convergence.csv"
STATISTICS = "statistics.csv"
RECONSTRUCTIONS = "reconstructions.csv"
STUDY = "study.csv"
SAMPLE_SIZE_NOTE = "errors averaged over n={} test samples drawn independently of the training set"


def _run_manifest(command: str, scenario: ScenarioConfig, root: Path, files: Sequence[Path], **extra) -> RunManifest:
    manifest = RunManifest(
        command=command,
        config_hash=scenario.config_hash(),
        scenario=scenario.model_dump(mode="json"),
        artifact_version=__version__,
        files=storage.inventory(files, root),
        **extra,
    )
    storage.write_json(root / RUN_MANIFEST, manifest)
    return manifest


def load_samples(
    scenario: ScenarioConfig,
    path: Optional[PathLike] = None,
    count: Optional[int] = None,
    seed: Optional[int] = None,
    stream: str = TRAIN_STREAM,
) -> List[ParameterSample]:
    """Samples from a CSV when given, otherwise the seeded stream"""
    if path is not None:
        return storage.read_samples(path, layout_for(scenario.family, scenario.d1), stream=stream)
    default = scenario.n_train if stream == TRAIN_STREAM else scenario.n_test
    return draw_samples(scenario, count or default, scenario.seed if seed is None else seed, stream=stream)


def block_weights(scenario: ScenarioConfig) -> np.ndarray:
    """Reciprocal L2 norms of the z = 0 initial rho, u1, T blocks, or ones when scaling is off"""
    if not scenario.block_scaling:
        return np.ones(3)
    grid = scenario.high_grid()
    blocks = np.split(initial_macro(scenario.family, zero_sample(scenario), grid).snapshot(), 3)
    norms = np.array([np.sqrt(grid.x_spacing * np.sum(b ** 2)) for b in blocks])
    # a vanishing block (u1 at rest) keeps unit weight
    return np.where(norms > 1e-12, 1.0 / np.where(norms > 1e-12, norms, 1.0), 1.0)


def run_samples(
    fidelity: Fidelity,
    scenario: ScenarioConfig,
    samples: Sequence[ParameterSample],
    out_dir: PathLike,
    workers: int = 1,
    trajectory_every: Optional[int] = None,
) -> RunManifest:
    """One field CSV per sample, named by id; the manifest is written last"""
    out_dir = Path(out_dir)
    x = scenario.high_grid().x_centers
    files = []
    start = time.perf_counter()
    if trajectory_every:
        # observers write files, so trajectories are recorded in this process
        fields, seconds = [], []
        for sample in samples:
            writer = storage.TrajectoryWriter(out_dir / "trajectories" / f"sample_{sample.sample_id:05d}", x, trajectory_every)
            begin = time.perf_counter()
            fields.append(run_model(fidelity, sample, scenario, observer=writer))
            seconds.append(time.perf_counter() - begin)
            files += writer.paths
        result = SweepResult(Fidelity(fidelity), tuple(samples), tuple(fields), tuple(seconds))
    else:
        result = sweep(fidelity, samples, scenario, workers=workers)
    elapsed = time.perf_counter() - start

    files += [
        storage.write_field(out_dir / storage.field_name(s.sample_id), x, macro)
        for s, macro in zip(result.samples, result.fields)
    ]
    return _run_manifest(
        f"run --model {Fidelity(fidelity).value}",
        scenario,
        out_dir,
        files,
        timings={"sweep": elapsed, "mean_run": result.mean_seconds},
        workers=workers,
        sample_count=len(samples),
    )


@dataclass(frozen=True)
class TrainResult:
    surrogate: BiFidelitySurrogate
    manifest: SurrogateManifest


def train(
    scenario: ScenarioConfig,
    out_dir: PathLike,
    budget: Optional[int] = None,
    workers: int = 1,
    samples: Optional[Sequence[ParameterSample]] = None,
) -> TrainResult:
    """Low-fidelity sweep, greedy selection, high-fidelity runs at the selected points, assembly"""
    out_dir = Path(out_dir)
    budget = scenario.budget if budget is None else budget
    samples = list(samples) if samples is not None else load_samples(scenario)
    by_id = {s.sample_id: s for s in samples}
    timings: Dict[str, float] = {}
    logger.info(f"Training {scenario.family.value} surrogate: M={len(samples)}, N={budget}")

    sample_file = storage.write_samples(out_dir / TRAIN_SAMPLES, samples)
    start = time.perf_counter()
    low_path = out_dir / storage.LOW_SNAPSHOTS
    key = storage.sweep_key(scenario, samples)
    low = storage.read_low_sweep(low_path, [s.sample_id for s in samples], key)
    if low is None:
        result = sweep(Fidelity.LOW, samples, scenario, workers=workers)
        low = result.snapshots()
        storage.write_low_sweep(low_path, low, key)
        timings["low_mean_run"] = result.mean_seconds
    timings["low_sweep"] = time.perf_counter() - start

    start = time.perf_counter()
    selection = greedy_select(low, budget, scenario.high_grid().x_spacing, block_weights(scenario))
    timings["selection"] = time.perf_counter() - start

    start = time.perf_counter()
    high = sweep(Fidelity.HIGH, [by_id[i] for i in selection.selected_ids], scenario, workers=workers)
    timings["high_runs"] = time.perf_counter() - start
    timings["high_mean_run"] = high.mean_seconds

    surrogate = assemble_surrogate(selection, high.snapshots())
    manifest = storage.save_surrogate(
        out_dir, surrogate, scenario, by_id, timings=timings, extra_files=[sample_file, low_path, storage.sweep_marker(low_path)]
    )
    return TrainResult(surrogate, manifest)


def _write_study_outputs(result: StudyResult, scenario: ScenarioConfig, out_dir: Path, fields: bool) -> List[Path]:
    x = scenario.high_grid().x_centers
    files = []
    if fields:
        for sample_id, reconstruction in result.reconstructions.items():
            files.append(storage.write_field(out_dir / "bifidelity" / storage.field_name(sample_id), x, reconstruction.values))
        if result.high is not None:
            for s, macro in zip(result.high.samples, result.high.fields):
                files.append(storage.write_field(out_dir / "reference" / storage.field_name(s.sample_id), x, macro))

    recon_path = out_dir / RECONSTRUCTIONS
    storage.write_frame(result.reconstruction_frame(), recon_path)
    stats_path = out_dir / STATISTICS
    storage.write_frame(result.statistics_frame(x), stats_path)
    files += [recon_path, stats_path]
    if result.report.with_reference:
        convergence_path = out_dir / CONVERGENCE
        storage.write_frame(result.convergence_frame(), convergence_path)
        files.append(convergence_path)
    files.append(storage.write_json(out_dir / REPORT, result.report))
    return files


def evaluate(
    surrogate_dir: PathLike,
    out_dir: PathLike,
    samples: Optional[Sequence[ParameterSample]] = None,
    r_list: Optional[Sequence[int]] = None,
    with_reference: Optional[bool] = None,
    workers: int = 1,
) -> StudyResult:
    """Online stage over the test set; reference runs only when requested"""
    out_dir = Path(out_dir)
    surrogate, _, scenario = storage.load_surrogate(surrogate_dir)
    with_reference = scenario.with_reference if with_reference is None else with_reference
    samples = list(samples) if samples is not None else load_samples(scenario, stream=TEST_STREAM)

    start = time.perf_counter()
    result = StudyEvaluator(surrogate, scenario, workers=workers).evaluate(samples, r_list, with_reference)
    elapsed = time.perf_counter() - start

    files = [storage.write_samples(out_dir / TEST_SAMPLES, samples)]
    files += _write_study_outputs(result, scenario, out_dir, fields=True)
    _run_manifest(
        "eval",
        scenario,
        out_dir,
        files,
        timings={"evaluation": elapsed, "low_mean_run": result.low.mean_seconds},
        workers=workers,
        sample_count=len(samples),
        notes=[SAMPLE_SIZE_NOTE.format(len(samples))] if with_reference else [],
    )
    return result


def _variants(scenario: ScenarioConfig, epsilons: Optional[Sequence[float]], low_lattices: Optional[Sequence[int]]):
    for epsilon in epsilons or [None]:
        for n_v_low in low_lattices or [None]:
            variant = scenario if epsilon is None else scenario.with_epsilon(epsilon)
            variant = variant if n_v_low is None else variant.with_low_lattice(n_v_low)
            parts = []
            if epsilon is not None:
                parts.append(f"eps_{epsilon:g}")
            if n_v_low is not None:
                parts.append(f"nvl_{n_v_low}")
            yield "_".join(parts), variant


def study(
    scenario: ScenarioConfig,
    out_dir: PathLike,
    r_list: Optional[Sequence[int]] = None,
    epsilons: Optional[Sequence[float]] = None,
    low_lattices: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """Train once per variant at max(r) and evaluate all nested budgets against references"""
    out_dir = Path(out_dir)
    budget = max(r_list) if r_list else scenario.budget
    test = load_samples(scenario, stream=TEST_STREAM)
    train_set = load_samples(scenario)
    tables = []
    files = [storage.write_samples(out_dir / TEST_SAMPLES, test)]
    start = time.perf_counter()

    for name, variant in _variants(scenario, epsilons, low_lattices):
        variant_dir = out_dir / name if name else out_dir
        trained = train(variant, variant_dir / "surrogate", budget=budget, workers=workers, samples=train_set)
        result = StudyEvaluator(trained.surrogate, variant, workers=workers).evaluate(test, r_list, with_reference=True)
        files += _write_study_outputs(result, variant, variant_dir, fields=False)

        table = result.convergence_frame()
        table.insert(0, "n_v_low", variant.grid.n_v_low)
        table.insert(0, "epsilon", result.report.epsilon)
        tables.append(table)

    combined = pd.concat(tables, ignore_index=True)
    combined_path = out_dir / STUDY
    storage.write_frame(combined, combined_path)
    files.append(combined_path)
    _run_manifest(
        "study",
        scenario,
        out_dir,
        sorted(set(files)),
        timings={"study": time.perf_counter() - start},
        workers=workers,
        sample_count=len(test),
        notes=[SAMPLE_SIZE_NOTE.format(len(test))],
    )
    return combined
