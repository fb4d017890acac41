import logging

import numpy as np
import pytest

from app.core.exceptions import KineticUQError, SampleMismatch
from app.evaluation import evaluator
from app.evaluation.evaluator import resolve_r_list
from app.evaluation.metrics import EvaluationMetrics
from app.models.fields import MacroField
from app.models.sample import ParameterSample
from app.services.bifidelity import Fidelity, assemble_surrogate, greedy_select
from app.services.runner import SweepResult
from app.services.scenarios import layout_for

from conftest import crossing_pair, smooth_field

X = (np.arange(10) + 0.5) / 10
DX = 0.1


def test_l2_norm():
    assert EvaluationMetrics.l2_norm(np.full(4, 2.0), 0.25) == pytest.approx(2.0)


def test_identical_fields_have_zero_error():
    fields = {i: smooth_field(X, 0.3 * i) for i in range(3)}
    errors = EvaluationMetrics.mean_l2_error(fields, dict(fields), DX)
    assert (errors.rho, errors.u1, errors.T) == (0.0, 0.0, 0.0)


def test_constant_offset_gives_its_size():
    reference, shifted = {}, {}
    for i in range(4):
        field = smooth_field(X, 0.5 * i)
        reference[i] = field
        rho, u, temperature = field.primitive()
        shifted[i] = MacroField.from_primitive(rho + 0.01, u[:, 0], u[:, 1], temperature)
    errors = EvaluationMetrics.mean_l2_error(reference, shifted, DX)
    assert errors.rho == pytest.approx(0.01, rel=1e-8)
    assert errors.u1 == pytest.approx(0.0, abs=1e-14)
    assert errors.T < 1e-14


def test_error_needs_matching_samples():
    a = {0: smooth_field(X, 0.0), 1: smooth_field(X, 1.0)}
    with pytest.raises(SampleMismatch):
        EvaluationMetrics.mean_l2_error(a, {0: a[0]}, DX)
    with pytest.raises(SampleMismatch):
        EvaluationMetrics.mean_l2_error({}, {}, DX)
    with pytest.raises(SampleMismatch):
        EvaluationMetrics.mean_l2_error({0: a[0]}, {0: smooth_field(X[:5], 0.0)}, DX)


def test_field_statistics():
    fields = [smooth_field(X, 0.0, amplitude=0.1), smooth_field(X, 0.0, amplitude=0.3)]
    statistics = EvaluationMetrics.field_statistics(fields)
    assert set(statistics) == {"rho_mean", "rho_std", "u1_mean", "u1_std", "T_mean", "T_std"}
    np.testing.assert_allclose(statistics["rho_mean"], smooth_field(X, 0.0, amplitude=0.2).density)
    np.testing.assert_allclose(statistics["rho_std"], np.abs(fields[1].density - fields[0].density) / 2)
    with pytest.raises(SampleMismatch):
        EvaluationMetrics.field_statistics([])


def test_speedup_ratio():
    assert EvaluationMetrics.speedup_ratio([2.0, 4.0], [0.1, 0.2]) == pytest.approx(20.0)
    assert EvaluationMetrics.speedup_ratio([1.0], [0.0]) == float("inf")


def test_resolve_r_list(caplog):
    assert resolve_r_list(None, 3) == [1, 2, 3]
    assert resolve_r_list([3, 1], 4) == [1, 3]
    with caplog.at_level(logging.WARNING, logger=evaluator.__name__):
        assert resolve_r_list([2, 2, 1], 4) == [1, 2]
    assert "duplicate" in caplog.text
    with pytest.raises(KineticUQError):
        resolve_r_list([5], 4)
    with pytest.raises(KineticUQError):
        resolve_r_list([0, 1], 4)


def test_evaluation_survives_nonphysical_reconstruction(monkeypatch, tiny_scenario, caplog):
    x, low, high, target = crossing_pair()
    selection = greedy_select(low, 2, 1.0 / 20)
    surrogate = assemble_surrogate(selection, [high[i] for i in selection.selected_ids])
    layout = layout_for(tiny_scenario.family, tiny_scenario.d1)
    samples = [ParameterSample(7, np.zeros(3), layout), ParameterSample(8, np.full(3, 0.2), layout)]
    fields = {
        Fidelity.LOW: {7: target, 8: low[1].to_field()},
        Fidelity.HIGH: {7: high[1].to_field(), 8: high[1].to_field()},
    }

    def stored_sweep(fidelity, batch, scenario, workers=1):
        fidelity = Fidelity(fidelity)
        chosen = tuple(fields[fidelity][s.sample_id] for s in batch)
        return SweepResult(fidelity, tuple(batch), chosen, tuple(0.1 for _ in batch))

    monkeypatch.setattr(evaluator, "sweep", stored_sweep)
    with caplog.at_level(logging.WARNING, logger=evaluator.__name__):
        result = evaluator.StudyEvaluator(surrogate, tiny_scenario).evaluate(samples, r_list=[2], with_reference=True)

    assert result.report.nonphysical_ids == [7]
    assert "T <= 0" in caplog.text
    assert result.reconstruction_frame()["physical"].tolist() == [False, True]
    # sample 7 misses T by 2 in every cell, sample 8 is exact
    errors = result.report.rows[0].bifidelity
    assert errors.T == pytest.approx(1.0, rel=1e-6)
    assert errors.rho == pytest.approx(0.0, abs=1e-6)
    statistics = result.statistics_frame(x)
    assert np.all(np.isfinite(statistics.drop(columns="x").to_numpy()))
    np.testing.assert_allclose(statistics["bifi_T_mean"], 0.0, atol=1e-6)
