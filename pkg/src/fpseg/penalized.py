"""Penalized solver: optimal partitioning over a state graph.

Instead of a segment budget, each change pays the penalty of the graph
edge it follows, and the number of segments falls out of the optimum. The
dynamic program keeps one exact piecewise cost function per (state, data
point): the update seeds each state with the cost of staying (no change,
no penalty), then folds in every edge — the source state's cost passed
through the edge's change operator, plus its penalty — and finally adds
the data-point loss. A state whose cost is absent at t is unreachable
there, and stays absent until an edge feeds it.

Costs are mean-normalized exactly as in :mod:`.budget` (edge penalties
enter as lambda / W_{t-1}); reported totals are scaled back by W_n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .budget import CostTable, PruningStats, _domain, pruning_stats
from .errors import ConsistencyError, InfeasibleError
from .models import ChangeConstraint, ChangeKind, StateGraph, preset_graph
from .piecewise import EQUALITY_ACTIVE, LossFamily
from .sequence import WeightedSequence

__all__ = ["PenalizedSolution", "solve_penalized", "penalized_isotonic"]


@dataclass(frozen=True)
class PenalizedSolution:
    """Optimal penalized segmentation decoded from a state graph.

    One entry per segment: ``means[i]``, ``states[i]`` (state name) and
    ``ends[i]`` (1-based inclusive last point, so ``ends[-1] == n``).
    Consecutive segments are connected by graph edges whose constraints
    the means satisfy; ``total_cost`` is the un-normalized loss plus all
    edge penalties paid.
    """

    means: np.ndarray
    states: tuple[str, ...]
    ends: np.ndarray
    total_cost: float
    stats: PruningStats
    costs: CostTable | None = None

    @property
    def change_count(self) -> int:
        return len(self.means) - 1

    def __repr__(self) -> str:
        return (f"PenalizedSolution(changes={self.change_count}, "
                f"cost={self.total_cost:.6g})")


def _shift_of(con: ChangeConstraint) -> float:
    if con.kind is ChangeKind.NON_DECREASING:
        return con.gap
    if con.kind is ChangeKind.NON_INCREASING:
        return -con.gap
    return 0.0


def _edge_branch(src: np.ndarray, con: ChangeConstraint, t_prev: int,
                 tag: int, dom_lo: float, dom_hi: float, code: int):
    if con.kind is ChangeKind.ANY_CHANGE:
        out, m = _k.min_const_kernel(src, t_prev, tag, dom_lo, dom_hi, code)
        return out[:m]
    if con.kind is ChangeKind.NON_DECREASING:
        out, m = _k.min_less_kernel(src, t_prev, tag, dom_hi, code)
        if con.gap != 0.0:
            out, m = _k.shift_clip_kernel(out[:m], con.gap, dom_lo, dom_hi)
    else:
        out, m = _k.min_more_kernel(src, t_prev, tag, dom_lo, code)
        if con.gap != 0.0:
            out, m = _k.shift_clip_kernel(out[:m], -con.gap, dom_lo, dom_hi)
    return out[:m] if m > 0 else None


def solve_penalized(data: WeightedSequence, graph: StateGraph,
                    loss: LossFamily,
                    keep_functions: bool = False) -> PenalizedSolution:
    """Globally minimize loss plus per-change edge penalties.

    Parameters
    ----------
    data : WeightedSequence
    graph : StateGraph
        Model description; see :func:`fpseg.models.preset_graph` for the
        built-in ones.
    loss : LossFamily
    keep_functions : bool
        Retain every (state, t) cost function on ``.costs`` (memory-heavy;
        meant for inspection and tests).

    Raises
    ------
    InfeasibleError
        If no allowed end state is reachable at the last data point (for
        example a graph that must visit a second state on a one-point
        series), or a gap-constrained path cannot fit in the data range.
    """
    code = loss.code
    n = data.n
    y = data.values
    w = data.weights
    W = data.cumulative_weights
    if loss is LossFamily.POISSON:
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("poisson loss requires nonnegative integer counts")
        for e in graph.edges:
            if e.constraint.gap != 0.0:
                raise ValueError(
                    "gap constraints are not representable for poisson loss")
    dom_lo, dom_hi = _domain(data, loss)
    table = CostTable(graph.n_states, n, loss, None, float(W[-1]),
                      dom_lo, dom_hi, keep_functions)
    for s in range(graph.n_states):
        table.start_row(s + 1)

    prev: list[np.ndarray | None] = [None] * graph.n_states
    for s in graph.start_states:
        cell = np.zeros((1, _k.NCOL))
        cell[0, _k.COL_LO] = dom_lo
        cell[0, _k.COL_HI] = dom_hi
        cell[0, _k.COL_PREV_MEAN] = math.nan
        cell[0, _k.COL_TAG] = -1.0
        _k.scale_add_loss_kernel(cell, 1.0, y[0], 1.0, code)
        prev[s] = cell
    for s in range(graph.n_states):
        table.add_cell(s + 1, 1, prev[s])

    for t in range(2, n + 1):
        scale = W[t - 2] / W[t - 1]
        wt = w[t - 1] / W[t - 1]
        cur: list[np.ndarray | None] = [
            None if f is None else f.copy() for f in prev]
        for tag, e in enumerate(graph.edges):
            src = prev[e.source]
            if src is None:
                continue
            branch = _edge_branch(src, e.constraint, t - 1, tag,
                                  dom_lo, dom_hi, code)
            if branch is None:
                continue
            if e.penalty != 0.0:
                _k.add_constant_kernel(branch, e.penalty / W[t - 2])
            if cur[e.target] is None:
                cur[e.target] = branch
            else:
                out, m = _k.min_of_two_kernel(cur[e.target], branch,
                                              False, code)
                cur[e.target] = out[:m].copy()
        for s in range(graph.n_states):
            if cur[s] is not None:
                _k.scale_add_loss_kernel(cur[s], scale, y[t - 1], wt, code)
            table.add_cell(s + 1, t, cur[s])
        prev = cur

    for s in range(graph.n_states):
        table.finish_row(s + 1)

    best = None
    for s in graph.end_states:
        arr = table.final(s + 1)
        if arr is None:
            continue
        i, pos, v = _k.global_argmin_kernel(arr, code)
        if best is None or v < best[0]:
            best = (v, s, i, pos)
    if best is None:
        names = ", ".join(graph.state_names[s] for s in graph.end_states)
        raise InfeasibleError(
            f"no allowed end state ({names}) is reachable at point {n}")
    v, s_cur, i, pos = best
    arr = table.final(s_cur + 1)
    t_cur = int(arr[i, _k.COL_PREV_END])
    u_next = float(arr[i, _k.COL_PREV_MEAN])
    tag = int(arr[i, _k.COL_TAG])
    means_p = [pos]
    state_ix = [s_cur]
    ends = [n]
    while t_cur > 0:
        if tag < 0:
            raise ConsistencyError(
                f"change into point {t_cur + 1} has no edge recorded")
        edge = graph.edges[tag]
        if u_next == EQUALITY_ACTIVE:
            pos = pos - _shift_of(edge.constraint)
        elif math.isnan(u_next):
            raise ConsistencyError(
                f"missing backpointer at point {t_cur}")
        else:
            pos = u_next
        s_prev = edge.source
        means_p.append(pos)
        state_ix.append(s_prev)
        ends.append(t_cur)
        t_prev, u_next, tag = table.cell_lookup(s_prev + 1, t_cur, pos)
        if not t_prev < t_cur:
            raise ConsistencyError(
                f"backpointer order violated at point {t_cur}: "
                f"{t_prev} !< {t_cur}")
        t_cur = t_prev

    means_p.reverse()
    state_ix.reverse()
    ends.reverse()
    means = np.array(means_p)
    if loss is LossFamily.POISSON:
        means = np.exp(means)
    return PenalizedSolution(
        means=means,
        states=tuple(graph.state_names[s] for s in state_ix),
        ends=np.array(ends, dtype=np.int64),
        total_cost=float(v * W[-1]),
        stats=pruning_stats(table),
        costs=table if keep_functions else None,
    )


def penalized_isotonic(data: WeightedSequence, penalty: float,
                       loss: LossFamily) -> PenalizedSolution:
    """Non-decreasing means with a fixed penalty per change.

    Equivalent to :func:`solve_penalized` with the single-state
    ``isotonic`` graph: one state whose self edge is a non-decreasing
    change costing ``penalty``.
    """
    if penalty < 0:
        raise ValueError(f"penalty must be nonnegative, got {penalty}")
    return solve_penalized(data, preset_graph("isotonic", [penalty]), loss)
