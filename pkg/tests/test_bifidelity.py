import numpy as np
import pytest

from app.core.exceptions import BudgetExceedsRank, IdMismatch, InvalidState, KineticUQError, NonPositiveTemperature
from app.services.bifidelity import Fidelity, Snapshot, assemble_surrogate, greedy_select, reconstruct

from conftest import crossing_pair, smooth_field

DX = 1.0 / 20


def _surrogate(low, high, budget):
    selection = greedy_select(low, budget, DX)
    by_id = {s.sample_id: s for s in high}
    return assemble_surrogate(selection, [by_id[i] for i in selection.selected_ids])


def test_snapshot_validation():
    with pytest.raises(InvalidState):
        Snapshot(0, np.ones(7), Fidelity.LOW)
    with pytest.raises(InvalidState):
        Snapshot(0, np.array([1.0, np.nan, 1.0]), Fidelity.LOW)
    assert Snapshot(0, np.ones(6), "high").fidelity == Fidelity.HIGH


def test_snapshot_field_round_trip(synthetic_snapshots):
    _, _, high = synthetic_snapshots
    field = high[3].to_field()
    np.testing.assert_allclose(field.snapshot(), high[3].values, rtol=1e-14)
    assert high[3].x_count == 20


def test_greedy_residuals_do_not_increase(synthetic_snapshots):
    _, low, _ = synthetic_snapshots
    selection = greedy_select(low, 5, DX)
    assert selection.size == 5
    assert np.all(np.diff(selection.residuals) <= 1e-12)
    assert len(set(selection.selected_ids)) == 5


def test_greedy_first_pick_is_largest_snapshot(synthetic_snapshots):
    _, low, _ = synthetic_snapshots
    norms = [np.sqrt(DX) * np.linalg.norm(s.values) for s in low]
    selection = greedy_select(low, 1, DX)
    assert selection.selected_ids == (int(np.argmax(norms)),)
    assert selection.residuals[0] == pytest.approx(max(norms))


def test_greedy_selection_is_nested(synthetic_snapshots):
    _, low, _ = synthetic_snapshots
    long = greedy_select(low, 5, DX)
    for count in range(1, 5):
        assert greedy_select(low, count, DX).selected_ids == long.selected_ids[:count]
        assert long.prefix(count).selected_ids == long.selected_ids[:count]


def test_greedy_stops_at_numerical_rank(synthetic_snapshots):
    _, low, _ = synthetic_snapshots
    selection = greedy_select(low, 8, DX)
    assert selection.stopped_early
    assert selection.size == 5
    with pytest.raises(BudgetExceedsRank):
        greedy_select(low, 8, DX, require_exact=True)


def test_greedy_budget_bounds(synthetic_snapshots):
    _, low, _ = synthetic_snapshots
    with pytest.raises(KineticUQError):
        greedy_select(low, 0, DX)
    with pytest.raises(KineticUQError):
        greedy_select(low, len(low) + 1, DX)
    with pytest.raises(KineticUQError):
        greedy_select([], 1, DX)


def test_uniform_block_weights_do_not_change_selection(synthetic_snapshots):
    _, low, _ = synthetic_snapshots
    plain = greedy_select(low, 4, DX)
    scaled = greedy_select(low, 4, DX, block_weights=np.full(3, 2.0))
    assert plain.selected_ids == scaled.selected_ids
    np.testing.assert_allclose(scaled.residuals, 2.0 * plain.residuals, rtol=1e-10)


def test_surrogate_interpolates_selected_points(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 3)
    assert surrogate.rank == 3
    assert surrogate.condition_number >= 1.0
    for k, sample_id in enumerate(surrogate.selection.selected_ids):
        result = surrogate.reconstruct_from_low(low[sample_id].to_field())
        np.testing.assert_allclose(result.field.snapshot(), high[sample_id].values, atol=1e-10)
        np.testing.assert_allclose(result.coefficients, np.eye(3)[k], atol=1e-10)
        assert result.low_residual <= 1e-10


def test_single_point_surrogate_scales_one_snapshot(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 1)
    (selected,) = surrogate.selection.selected_ids
    target = low[(selected + 5) % len(low)]

    anchor = low[selected].values
    expected = np.dot(target.values, anchor) / np.dot(anchor, anchor)
    result = surrogate.reconstruct_from_low(target.to_field())
    assert result.coefficients[0] == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(result.field.snapshot(), expected * high[selected].values, rtol=1e-12, atol=1e-14)


def test_reconstruction_tracks_high_fidelity(synthetic_snapshots):
    x, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 5)
    unseen = [s for s in low if s.sample_id not in surrogate.selection.selected_ids]
    for snapshot in unseen:
        result = surrogate.reconstruct_from_low(snapshot.to_field())
        error = np.sqrt(DX) * np.linalg.norm(result.field.snapshot() - high[snapshot.sample_id].values)
        assert error < 1e-6


def test_reconstruct_runs_low_model_once(synthetic_snapshots):
    x, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 3)
    calls = []

    def low_runner(sample):
        calls.append(sample)
        return smooth_field(x, 1.1 + 0.05, amplitude=0.18)

    result = reconstruct(surrogate, "z", low_runner)
    assert calls == ["z"]
    assert result.low_field is not None
    assert result.field.x_count == 20


def test_assembly_rejects_mismatched_ids(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    selection = greedy_select(low, 3, DX)
    reordered = [high[i] for i in reversed(selection.selected_ids)]
    with pytest.raises(IdMismatch):
        assemble_surrogate(selection, reordered)


def test_reconstruction_rejects_wrong_length(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 2)
    short = smooth_field(np.linspace(0.05, 0.95, 10), 0.3)
    with pytest.raises(InvalidState):
        surrogate.reconstruct_from_low(short)


def test_prefix_matches_fresh_assembly(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    full = _surrogate(low, high, 4)
    fresh = _surrogate(low, high, 2)
    prefix = full.prefix(2)
    assert prefix.selection.selected_ids == fresh.selection.selected_ids
    target = low[7].values
    np.testing.assert_allclose(prefix.coefficients(target), fresh.coefficients(target), rtol=1e-12)


def test_gramian_factorization(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 4)
    gramian = surrogate.low_gramian
    np.testing.assert_allclose(gramian, gramian.T)
    np.testing.assert_allclose(surrogate.factorization(), gramian, rtol=1e-10, atol=1e-14 * np.abs(gramian).max())
    assert np.all(surrogate.eigenvalues[surrogate.kept] > 0)


def test_kernel_term_vanishes_for_independent_high_snapshots(synthetic_snapshots):
    _, low, high = synthetic_snapshots
    surrogate = _surrogate(low, high, 3)
    assert surrogate.kernel_term(low[9].values) == 0.0


def test_nonphysical_combination_is_kept_and_flagged():
    _, low, high, target = crossing_pair()
    surrogate = _surrogate(low, high, 2)
    result = surrogate.reconstruct_from_low(target)

    by_id = dict(zip(surrogate.selection.selected_ids, result.coefficients))
    assert by_id[0] == pytest.approx(-1.0, abs=1e-8)
    assert by_id[1] == pytest.approx(2.0, abs=1e-8)
    assert not result.physical
    rho, u1, temperature = np.split(result.values, 3)
    np.testing.assert_allclose(rho, 1.0, atol=1e-7)
    np.testing.assert_allclose(temperature, -1.0, atol=1e-7)
    with pytest.raises(NonPositiveTemperature):
        result.field

    inside = surrogate.reconstruct_from_low(low[1].to_field())
    assert inside.physical
    np.testing.assert_allclose(inside.field.temperature, 1.0, atol=1e-10)
