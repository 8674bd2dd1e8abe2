"""End-to-end checks for the segment-budget solver.

Frozen values come from the brute-force reference solvers (grid search
and the plain O(n^2 K) recursion); randomized instances are cross-checked
against them live.
"""
import itertools
import math

import numpy as np
import pytest

from fpseg.budget import decode, pruning_stats, solve_budget
from fpseg.errors import InfeasibleError
from fpseg.models import ChangeConstraint, ChangeKind, ConstraintSchedule
from fpseg.oracle import dpa_unconstrained, enumerate_constrained, segment_cost
from fpseg.piecewise import LossFamily
from fpseg.sequence import WeightedSequence

Y4 = WeightedSequence.from_values([2, 1, 0, 4])
SQ = LossFamily.SQUARE
PO = LossFamily.POISSON


def _unit_close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _random_instance(rng, loss, n_max=9):
    n = int(rng.integers(4, n_max + 1))
    if loss is SQ:
        vals = np.round(rng.uniform(0, 10, size=n), 3)
    else:
        vals = rng.integers(0, 9, size=n).astype(float)
    use_w = bool(rng.integers(0, 2))
    w = np.round(rng.uniform(0.25, 2.0, size=n), 3) if use_w else None
    return WeightedSequence.from_values(vals, w)


# ---------------------------------------------------------------------------
# frozen examples


def test_square_one_segment_is_weighted_mean_fit():
    res = solve_budget(Y4, 1, ConstraintSchedule.unconstrained(), SQ)
    seg = res[1]
    assert seg.total_cost == pytest.approx(8.75)
    np.testing.assert_allclose(seg.means, [1.75])
    assert list(seg.ends) == [4]
    assert seg.states is None


def test_square_isotonic_two_segments():
    res = solve_budget(Y4, 2, ConstraintSchedule.nondecreasing(), SQ)
    seg = res[2]
    assert seg.total_cost == pytest.approx(2.0)
    np.testing.assert_allclose(seg.means, [1.0, 4.0])
    assert list(seg.ends) == [3, 4]
    assert seg.change_count == 1


def test_poisson_up_down_three_segments():
    data = WeightedSequence.from_values([1, 5, 1])
    res = solve_budget(data, 3, ConstraintSchedule.up_down(), PO)
    seg = res[3]
    assert seg.total_cost == pytest.approx(7 - 5 * math.log(5))
    np.testing.assert_allclose(seg.means, [1.0, 5.0, 1.0])
    assert seg.states == ("background", "peak", "background")


def test_wide_value_range_three_segments():
    data = WeightedSequence.from_values([2, 5, 30, 34, 600, 621])
    res = solve_budget(data, 3, ConstraintSchedule.unconstrained(), SQ)
    seg = res[3]
    assert list(seg.ends) == [2, 4, 6]
    np.testing.assert_allclose(seg.means, [3.5, 32.0, 610.5])


def test_equality_collapse_reported_as_no_change():
    # best nondecreasing 2-segment fit to a decreasing pair is flat
    data = WeightedSequence.from_values([2, 1])
    seg = solve_budget(data, 2, ConstraintSchedule.nondecreasing(), SQ)[2]
    np.testing.assert_allclose(seg.means, [1.5, 1.5])
    assert seg.total_cost == pytest.approx(0.5)
    assert seg.k == 2
    assert seg.change_count == 0


# ---------------------------------------------------------------------------
# agreement with the reference solvers


def test_unconstrained_square_matches_reference_recursion():
    rng = np.random.default_rng(7001)
    for _ in range(12):
        data = _random_instance(rng, SQ)
        K = min(4, data.n)
        res = solve_budget(data, K, ConstraintSchedule.unconstrained(), SQ)
        ref = dpa_unconstrained(data, K, SQ)
        for k in range(1, K + 1):
            assert _unit_close(res[k].total_cost, ref[k - 1], 1e-9)


def test_unconstrained_poisson_matches_reference_recursion():
    rng = np.random.default_rng(7002)
    for _ in range(12):
        data = _random_instance(rng, PO)
        K = min(4, data.n)
        res = solve_budget(data, K, ConstraintSchedule.unconstrained(), PO)
        ref = dpa_unconstrained(data, K, PO)
        for k in range(1, K + 1):
            assert _unit_close(res[k].total_cost, ref[k - 1], 1e-9)


@pytest.mark.parametrize("loss", [SQ, PO], ids=["square", "poisson"])
@pytest.mark.parametrize("name", ["isotonic", "updown"])
def test_constrained_matches_grid_reference(name, loss):
    make = (ConstraintSchedule.nondecreasing if name == "isotonic"
            else ConstraintSchedule.up_down)
    rng = np.random.default_rng(7100 + (loss is PO))
    for _ in range(6):
        data = _random_instance(rng, loss, n_max=7)
        K = min(3, data.n)
        res = solve_budget(data, K, make(), loss)
        for k in range(1, K + 1):
            fit = enumerate_constrained(data, k, make(), loss, grid_size=256)
            # the grid value can only sit above the exact optimum
            assert res[k].total_cost <= fit.cost + 1e-9
            assert _unit_close(res[k].total_cost, fit.cost, 1e-4)


def test_decoded_segments_recompute_to_reported_cost():
    rng = np.random.default_rng(7200)
    for loss in (SQ, PO):
        for _ in range(8):
            data = _random_instance(rng, loss)
            K = min(4, data.n)
            res = solve_budget(data, K, ConstraintSchedule.up_down(), loss)
            for k in range(1, K + 1):
                seg = res[k]
                bounds = np.concatenate(([0], seg.ends))
                total = sum(
                    segment_cost(data, bounds[i], bounds[i + 1],
                                 seg.means[i], loss)
                    for i in range(k))
                assert _unit_close(total, seg.total_cost, 1e-9)


def test_costs_never_increase_with_budget():
    rng = np.random.default_rng(7300)
    for _ in range(10):
        data = _random_instance(rng, SQ)
        K = min(5, data.n)
        res = solve_budget(data, K, ConstraintSchedule.unconstrained(), SQ)
        costs = [res[k].total_cost for k in range(1, K + 1)]
        assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))


# ---------------------------------------------------------------------------
# constraint feasibility of decoded fits


def test_isotonic_fit_is_nondecreasing():
    rng = np.random.default_rng(7400)
    for _ in range(10):
        data = _random_instance(rng, SQ)
        K = min(4, data.n)
        res = solve_budget(data, K, ConstraintSchedule.nondecreasing(), SQ)
        for k in range(1, K + 1):
            diffs = np.diff(res[k].means)
            assert (diffs >= -1e-9).all()


def test_up_down_fit_alternates():
    rng = np.random.default_rng(7401)
    for _ in range(10):
        data = _random_instance(rng, PO)
        K = min(4, data.n)
        res = solve_budget(data, K, ConstraintSchedule.up_down(), PO)
        for k in range(1, K + 1):
            diffs = np.diff(res[k].means)
            signs = [1 if j % 2 == 0 else -1 for j in range(k - 1)]
            assert all(s * d >= -1e-9 for s, d in zip(signs, diffs))


def test_gap_constraint_enforced_and_matches_reference():
    data = WeightedSequence.from_values([1.0, 1.3, 4.0, 4.2, 2.0])
    sched = ConstraintSchedule.up_down(gap=1.0)
    res = solve_budget(data, 3, sched, SQ)
    seg = res[3]
    diffs = np.diff(seg.means)
    assert diffs[0] >= 1.0 - 1e-9 and -diffs[1] >= 1.0 - 1e-9
    fit = enumerate_constrained(data, 3, sched, SQ, grid_size=256)
    assert seg.total_cost <= fit.cost + 1e-9
    assert _unit_close(seg.total_cost, fit.cost, 1e-4)


def test_gap_too_large_for_data_range_is_infeasible():
    data = WeightedSequence.from_values([1.0, 1.2, 1.4])
    with pytest.raises(InfeasibleError, match="within the data range"):
        solve_budget(data, 3, ConstraintSchedule.nondecreasing(gap=5.0), SQ)


# ---------------------------------------------------------------------------
# the cost table as a function of the last segment mean


def _best_prefix_cost_with_pinned_mean(data, k, t, mu, loss):
    """Exhaustive min over placements with the last segment mean fixed."""
    best = math.inf
    for cuts in itertools.combinations(range(1, t), k - 1):
        bounds = (0, *cuts, t)
        total = segment_cost(data, bounds[-2], t, mu, loss)
        for a, b in zip(bounds[:-2], bounds[1:-1]):
            w = data.weights[a:b]
            opt = float(np.average(data.values[a:b], weights=w))
            total += segment_cost(data, a, b, opt, loss)
        if total < best:
            best = total
    return best


@pytest.mark.parametrize("loss", [SQ, PO], ids=["square", "poisson"])
def test_stored_functions_equal_exhaustive_prefix_costs(loss):
    rng = np.random.default_rng(7500 + (loss is PO))
    data = _random_instance(rng, loss, n_max=6)
    K = min(3, data.n)
    res = solve_budget(data, K, ConstraintSchedule.unconstrained(), loss,
                       keep_functions=True)
    w_prefix = np.cumsum(data.weights)
    lo = max(float(data.values.min()), 0.25) if loss is PO else float(
        data.values.min())
    grid = np.linspace(lo, float(data.values.max()), 9)
    if grid[0] == grid[-1]:
        grid = grid[:1] + 1e-3
    for k in range(1, K + 1):
        for t in range(k, data.n + 1):
            f = res.costs.function(k, t)
            for mu in grid:
                want = _best_prefix_cost_with_pinned_mean(data, k, t, mu, loss)
                got = f(mu) * w_prefix[t - 1]
                assert _unit_close(got, want, 1e-9)


def test_functions_not_kept_by_default():
    res = solve_budget(Y4, 2, ConstraintSchedule.unconstrained(), SQ)
    with pytest.raises(ValueError, match="keep_functions"):
        res.costs.function(1, 2)
    # the final column is always retained
    f = res.costs.function(2, 4)
    assert f(4.0) * 4.0 == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# run-length encoding, decoding, and pruning statistics


def test_repeats_and_weights_are_equivalent():
    plain = WeightedSequence.from_values([3, 3, 3, 7, 7, 1])
    packed = WeightedSequence.from_values([3, 7, 1], [3, 2, 1])
    assert packed.n == 3
    for K in (1, 2, 3):
        a = solve_budget(plain, K, ConstraintSchedule.unconstrained(), SQ)
        b = solve_budget(packed, K, ConstraintSchedule.unconstrained(), SQ)
        for k in range(1, K + 1):
            assert a[k].total_cost == pytest.approx(b[k].total_cost)
            np.testing.assert_allclose(a[k].means, b[k].means, atol=1e-12)


def test_decode_reproduces_result_segmentations():
    res = solve_budget(Y4, 3, ConstraintSchedule.unconstrained(), SQ)
    for k in range(1, 4):
        again = decode(res.costs, k)
        assert again.total_cost == pytest.approx(res[k].total_cost)
        np.testing.assert_array_equal(again.ends, res[k].ends)
        np.testing.assert_allclose(again.means, res[k].means)


def test_pruning_stats_shape_and_undefined_cells():
    res = solve_budget(Y4, 3, ConstraintSchedule.unconstrained(), SQ)
    stats = res.stats
    assert stats.counts.shape == (3, 4)
    # cells with t < k are never defined
    assert stats.counts[1, 0] == -1
    assert stats.counts[2, 0] == -1 and stats.counts[2, 1] == -1
    assert (stats.counts[0, :] >= 1).all()
    assert stats.max_count >= stats.median > 0
    again = pruning_stats(res.costs)
    np.testing.assert_array_equal(again.counts, stats.counts)


def test_interval_counts_stay_small_on_random_data():
    rng = np.random.default_rng(7600)
    data = WeightedSequence.from_values(np.round(rng.uniform(0, 10, 200), 3))
    res = solve_budget(data, 4, ConstraintSchedule.unconstrained(), SQ)
    assert res.stats.max_count <= 64


# ---------------------------------------------------------------------------
# argument validation


def test_budget_must_be_positive():
    with pytest.raises(ValueError, match="must be >= 1"):
        solve_budget(Y4, 0, ConstraintSchedule.unconstrained(), SQ)


def test_budget_larger_than_data_is_infeasible():
    with pytest.raises(InfeasibleError, match="4 encoded points"):
        solve_budget(Y4, 5, ConstraintSchedule.unconstrained(), SQ)


def test_poisson_rejects_fractional_counts():
    data = WeightedSequence.from_values([1.0, 2.5])
    with pytest.raises(ValueError, match="integer counts"):
        solve_budget(data, 1, ConstraintSchedule.unconstrained(), PO)


def test_poisson_rejects_gap_constraints():
    data = WeightedSequence.from_values([1, 2])
    with pytest.raises(ValueError, match="not representable"):
        solve_budget(data, 2, ConstraintSchedule.nondecreasing(gap=0.5), PO)


def test_explicit_schedule_must_cover_requested_budget():
    short = ConstraintSchedule.explicit(
        [ChangeConstraint(ChangeKind.NON_DECREASING)])
    with pytest.raises(ValueError, match="needs 2"):
        solve_budget(Y4, 3, short, SQ)


def test_constant_data_still_solves():
    data = WeightedSequence.from_values([5, 5, 5])
    assert data.n == 1  # run-length encoding collapses the repeats
    seg = solve_budget(data, 1, ConstraintSchedule.unconstrained(), SQ)[1]
    assert seg.total_cost == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(seg.means, [5.0])
