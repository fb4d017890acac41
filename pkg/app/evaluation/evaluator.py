import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.core.exceptions import KineticUQError
from app.evaluation.metrics import EvaluationMetrics
from app.models.fields import MacroField
from app.models.sample import ParameterSample
from app.schemas.manifest import ErrorReport, ErrorRow
from app.schemas.scenario import EpsilonKind, ScenarioConfig
from app.services.bifidelity import BiFidelitySurrogate, Fidelity, Reconstruction
from app.services.runner import SweepResult, sweep

logger = logging.getLogger(__name__)


def resolve_r_list(r_list: Optional[Sequence[int]], available: int) -> List[int]:
    """Sorted unique budgets; all of them must be covered by the trained selection"""
    if not r_list:
        return list(range(1, available + 1))
    unique = sorted(set(int(r) for r in r_list))
    if len(unique) != len(r_list):
        logger.warning(f"Dropping duplicate budgets from {list(r_list)}")
    if unique[0] < 1 or unique[-1] > available:
        raise KineticUQError(f"budgets {unique} must lie in 1..{available}")
    return unique


@dataclass(frozen=True)
class StudyResult:
    report: ErrorReport
    reconstructions: Dict[int, Reconstruction]
    low: SweepResult
    high: Optional[SweepResult] = None

    def convergence_frame(self) -> pd.DataFrame:
        """One row per budget r: bi-fidelity errors and the low-fidelity baseline"""
        baseline = self.report.low_fidelity
        rows = []
        for row in self.report.rows:
            rows.append({
                "r": row.r,
                "err_rho": row.bifidelity.rho,
                "err_u1": row.bifidelity.u1,
                "err_T": row.bifidelity.T,
                "err_lowfi": baseline.rho,
                "err_lowfi_u1": baseline.u1,
                "err_lowfi_T": baseline.T,
            })
        return pd.DataFrame(rows, columns=["r", "err_rho", "err_u1", "err_T", "err_lowfi", "err_lowfi_u1", "err_lowfi_T"])

    def statistics_frame(self, x: np.ndarray) -> pd.DataFrame:
        """Mean and standard deviation fields of every available fidelity"""
        columns = {"x": np.asarray(x)}
        groups = [("bifi", [r.values for r in self.reconstructions.values()]), ("low", list(self.low.fields))]
        if self.high is not None:
            groups.insert(0, ("high", list(self.high.fields)))
        for prefix, fields in groups:
            for name, values in EvaluationMetrics.field_statistics(fields).items():
                columns[f"{prefix}_{name}"] = values
        return pd.DataFrame(columns)

    def reconstruction_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "id": list(self.reconstructions),
            "low_residual": [r.low_residual for r in self.reconstructions.values()],
            "physical": [r.physical for r in self.reconstructions.values()],
        })


class StudyEvaluator:
    """Online stage over a test set, with optional high-fidelity references for error tables"""

    def __init__(self, surrogate: BiFidelitySurrogate, scenario: ScenarioConfig, workers: int = 1):
        self.surrogate = surrogate
        self.scenario = scenario
        self.workers = workers
        self.metrics = EvaluationMetrics()

    @property
    def _epsilon(self) -> Optional[float]:
        epsilon = self.scenario.epsilon
        return epsilon.value if epsilon.kind == EpsilonKind.CONSTANT else None

    def evaluate(
        self,
        samples: Sequence[ParameterSample],
        r_list: Optional[Sequence[int]] = None,
        with_reference: bool = False,
    ) -> StudyResult:
        budgets = resolve_r_list(r_list, self.surrogate.selection.size)
        low = sweep(Fidelity.LOW, samples, self.scenario, workers=self.workers)
        low_fields = {s.sample_id: f for s, f in zip(low.samples, low.fields)}
        reconstructions = {i: self.surrogate.reconstruct_from_low(f) for i, f in low_fields.items()}
        nonphysical = sorted(i for i, r in reconstructions.items() if not r.physical)
        if nonphysical:
            logger.warning(f"{len(nonphysical)} reconstructions have rho <= 0 or T <= 0 somewhere, first ids {nonphysical[:5]}")

        if not with_reference:
            report = ErrorReport(
                n_test=len(samples),
                with_reference=False,
                epsilon=self._epsilon,
                n_v_low=self.scenario.grid.n_v_low,
                nonphysical_ids=nonphysical,
            )
            return StudyResult(report, reconstructions, low)

        high = sweep(Fidelity.HIGH, samples, self.scenario, workers=self.workers)
        high_fields = {s.sample_id: f for s, f in zip(high.samples, high.fields)}
        dx = self.surrogate.x_spacing
        baseline = self.metrics.mean_l2_error(high_fields, low_fields, dx)

        rows = []
        for r in budgets:
            nested = self.surrogate if r == self.surrogate.selection.size else self.surrogate.prefix(r)
            approximations = self._reconstruct(nested, low_fields)
            errors = self.metrics.mean_l2_error(high_fields, approximations, dx)
            rows.append(ErrorRow(r=r, bifidelity=errors, low_fidelity=baseline))
            logger.info(f"r={r}: rho {errors.rho:.3e}, u1 {errors.u1:.3e}, T {errors.T:.3e} (low-fidelity rho {baseline.rho:.3e})")

        speedup = self.metrics.speedup_ratio(high.seconds, low.seconds)
        logger.info(f"Mean run time: high {high.mean_seconds:.3f}s, low {low.mean_seconds:.3f}s, speedup {speedup:.1f}x")
        report = ErrorReport(
            rows=rows,
            low_fidelity=baseline,
            speedup=speedup,
            n_test=len(samples),
            with_reference=True,
            epsilon=self._epsilon,
            n_v_low=self.scenario.grid.n_v_low,
            nonphysical_ids=nonphysical,
        )
        return StudyResult(report, reconstructions, low, high)

    @staticmethod
    def _reconstruct(surrogate: BiFidelitySurrogate, low_fields: Dict[int, MacroField]) -> Dict[int, np.ndarray]:
        return {i: surrogate.reconstruct_from_low(f).values for i, f in low_fields.items()}

