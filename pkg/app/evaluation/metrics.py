from typing import Dict, Mapping, Sequence, Union

import numpy as np

from app.core.exceptions import SampleMismatch
from app.models.fields import MacroField
from app.schemas.manifest import QuantityErrors

QUANTITIES = ("rho", "u1", "T")

FieldLike = Union[MacroField, np.ndarray]


def quantity_values(macro: FieldLike) -> Dict[str, np.ndarray]:
    """rho, u1 and T of a field, or of a concatenated [rho; u1; T] vector that may be unphysical"""
    if isinstance(macro, MacroField):
        return {"rho": macro.density, "u1": macro.velocity[:, 0], "T": macro.temperature}
    return dict(zip(QUANTITIES, np.split(np.asarray(macro, dtype=float), len(QUANTITIES))))


class EvaluationMetrics:
    @staticmethod
    def l2_norm(values: np.ndarray, x_spacing: float) -> float:
        """Discrete L2 norm sqrt(dx * sum v_i^2)"""
        return float(np.sqrt(x_spacing * np.sum(np.square(values))))

    @staticmethod
    def mean_l2_error(
        reference: Mapping[int, MacroField],
        approximation: Mapping[int, FieldLike],
        x_spacing: float,
    ) -> QuantityErrors:
        """Average over the test set of ||u_ref - u_approx||, separately for rho, u1 and T"""
        if not reference:
            raise SampleMismatch("no samples to compare")
        if set(reference) != set(approximation):
            missing = sorted(set(reference) ^ set(approximation))
            raise SampleMismatch(f"sample sets differ in ids {missing[:5]}")

        totals = dict.fromkeys(QUANTITIES, 0.0)
        for sample_id, ref in reference.items():
            other = approximation[sample_id]
            ref_values, other_values = quantity_values(ref), quantity_values(other)
            if ref_values["rho"].size != other_values["rho"].size:
                raise SampleMismatch(f"sample {sample_id}: {ref_values['rho'].size} cells against {other_values['rho'].size}")
            for name in QUANTITIES:
                totals[name] += EvaluationMetrics.l2_norm(ref_values[name] - other_values[name], x_spacing)

        count = len(reference)
        return QuantityErrors(**{name: total / count for name, total in totals.items()})

    @staticmethod
    def field_statistics(fields: Sequence[FieldLike]) -> Dict[str, np.ndarray]:
        """Pointwise mean and standard deviation of rho, u1, T over a sample set"""
        if not fields:
            raise SampleMismatch("no fields for statistics")
        stacked = {name: np.stack([quantity_values(f)[name] for f in fields]) for name in QUANTITIES}
        statistics = {}
        for name, values in stacked.items():
            statistics[f"{name}_mean"] = values.mean(axis=0)
            statistics[f"{name}_std"] = values.std(axis=0)
        return statistics

    @staticmethod
    def speedup_ratio(high_seconds: Sequence[float], low_seconds: Sequence[float]) -> float:
        """Mean high-fidelity runtime over mean low-fidelity runtime"""
        low = float(np.mean(low_seconds))
        if low <= 0:
            return float("inf")
        return float(np.mean(high_seconds)) / low
