"""Sample sweeps over a process pool"""
import logging
import time
from dataclasses import dataclass
from functools import lru_cache, partial
from multiprocessing import get_context
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import KineticUQError
from app.models.fields import MacroField
from app.models.grid import PhaseGrid
from app.models.sample import ParameterSample
from app.schemas.scenario import ScenarioConfig
from app.services.bifidelity import Fidelity, Snapshot
from app.services.collision import SpectralKernel, precompute_spectral
from app.services.fluid_solver import run_low_fidelity
from app.services.kinetic_solver import Observer, run_high_fidelity

logger = logging.getLogger(__name__)


@lru_cache(maxsize=4)
def _kernel(v_count: int, v_extent: float, n_sigma: int) -> SpectralKernel:
    # one table per worker process, reused across its samples
    return precompute_spectral(PhaseGrid(2, v_count, v_extent), n_sigma=n_sigma)


def scenario_kernel(scenario: ScenarioConfig) -> SpectralKernel:
    return _kernel(scenario.grid.n_v_high, scenario.grid.v_extent, scenario.grid.n_sigma)


def run_model(
    fidelity: Fidelity,
    sample: ParameterSample,
    scenario: ScenarioConfig,
    observer: Optional[Observer] = None,
) -> MacroField:
    if Fidelity(fidelity) == Fidelity.HIGH:
        return run_high_fidelity(sample, scenario, kernel=scenario_kernel(scenario), observer=observer)
    return run_low_fidelity(sample, scenario, observer=observer)


def _run_one(fidelity: Fidelity, scenario: ScenarioConfig, sample: ParameterSample) -> Tuple[MacroField, float]:
    start = time.perf_counter()
    try:
        macro = run_model(fidelity, sample, scenario)
    except KineticUQError as e:
        raise type(e)(f"sample {sample.sample_id}: {e}") from e
    return macro, time.perf_counter() - start


@dataclass(frozen=True)
class SweepResult:
    fidelity: Fidelity
    samples: Tuple[ParameterSample, ...]
    fields: Tuple[MacroField, ...]
    seconds: Tuple[float, ...]

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds))

    def snapshots(self) -> List[Snapshot]:
        return [Snapshot.from_field(s.sample_id, m, self.fidelity) for s, m in zip(self.samples, self.fields)]


def sweep(
    fidelity: Fidelity,
    samples: Sequence[ParameterSample],
    scenario: ScenarioConfig,
    workers: int = 1,
) -> SweepResult:
    """Run one model over every sample; results keep the input order"""
    fidelity = Fidelity(fidelity)
    if workers < 1:
        raise KineticUQError(f"workers must be at least 1, got {workers}")
    task = partial(_run_one, fidelity, scenario)
    processes = min(workers, len(samples))
    logger.info(f"Running {len(samples)} {fidelity.value}-fidelity samples on {processes} process(es)")

    if processes <= 1:
        results = [task(sample) for sample in samples]
    else:
        with get_context("spawn").Pool(processes=processes) as pool:
            results = pool.map(task, samples)

    fields, seconds = zip(*results) if results else ((), ())
    return SweepResult(fidelity, tuple(samples), tuple(fields), tuple(seconds))
