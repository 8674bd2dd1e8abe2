"""Segment-budget solver: optimal segmentations for every size k = 1..K.

The dynamic program keeps, for each (k, t), the exact cost of the best
k-segment fit of points 1..t as a piecewise function of the last segment
mean. A new row is built from the previous one with the change operator
matching the scheduled constraint (running minimum from the left or right,
or the global minimum for unconstrained changes), and pruning falls out of
the pointwise minimum against the no-change branch.

Costs are propagated in mean-normalized form, i.e. divided by the
cumulative weight W_t, which keeps coefficients of the same magnitude as
single-point losses regardless of n; reported totals are scaled back by
W_n. Tables store per-piece decoding summaries for every cell and full
functions only on request (``keep_functions=True``) or for the final
column, which decoding needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import ConsistencyError, InfeasibleError
from .models import ChangeKind, ConstraintSchedule
from .piecewise import EQUALITY_ACTIVE, LossFamily, PiecewiseCost
from .sequence import WeightedSequence

__all__ = [
    "Segmentation",
    "PruningStats",
    "CostTable",
    "BudgetResult",
    "solve_budget",
    "decode",
    "pruning_stats",
]

_UPDOWN_STATES = ("background", "peak")


@dataclass(frozen=True)
class Segmentation:
    """One decoded model: ``k`` segments covering points 1..n.

    ``ends[i]`` is the (1-based, inclusive) last point of segment i, so
    ``ends[-1] == n``; segment i covers points ``ends[i-1]+1 .. ends[i]``.
    ``total_cost`` is the un-normalized loss of the fit. Constrained optima
    may be equality-collapsed: adjacent means can coincide, so the number
    of effective changes (``change_count``) can be less than ``k - 1``.
    """

    k: int
    means: np.ndarray
    ends: np.ndarray
    total_cost: float
    states: tuple[str, ...] | None = None

    @property
    def change_count(self) -> int:
        return int(np.sum(self.means[1:] != self.means[:-1]))

    def __repr__(self) -> str:
        return (f"Segmentation(k={self.k}, changes={self.change_count}, "
                f"cost={self.total_cost:.6g})")


@dataclass(frozen=True)
class PruningStats:
    """Stored-piece counts per DP cell.

    ``counts[i, t-1]`` is the piece count of the cell for row i at data
    point t — rows are segment counts k for the budget solver and states
    for the penalized solver; ``-1`` marks cells the recursion never
    defines. ``median`` and ``max_count`` summarize the defined cells.
    """

    counts: np.ndarray
    median: float = field(init=False)
    max_count: int = field(init=False)

    def __post_init__(self):
        defined = self.counts[self.counts >= 0]
        object.__setattr__(self, "median",
                           float(np.median(defined)) if defined.size else math.nan)
        object.__setattr__(self, "max_count",
                           int(defined.max()) if defined.size else 0)


class CostTable:
    """Decoding view of the DP table.

    Always stores, for every defined cell, the per-piece summaries needed
    to walk backpointers: upper interval limits, ``prev_end``,
    ``prev_mean`` and the change tag. Full piecewise functions are kept for
    the final column always (the decoder starts from its minimum) and for
    every cell when ``keep_functions`` is set.
    """

    def __init__(self, K: int, n: int, loss: LossFamily,
                 schedule: ConstraintSchedule | None, w_total: float,
                 dom_lo: float, dom_hi: float, keep_functions: bool):
        self.K = K
        self.n = n
        self.loss = loss
        self.schedule = schedule
        self.w_total = w_total
        self.dom_lo = dom_lo
        self.dom_hi = dom_hi
        self.counts = np.full((K, n), -1, dtype=np.int32)
        self._offsets = [None] * K
        self._his = [None] * K
        self._prev_ends = [None] * K
        self._prev_means = [None] * K
        self._tags = [None] * K
        self._final: dict[int, np.ndarray] = {}
        self._funcs: dict[tuple[int, int], np.ndarray] | None = (
            {} if keep_functions else None)
        # per-row accumulation state, keyed by row (rows may be filled
        # one at a time or interleaved, but cells within a row in t order)
        self._row_lists: dict[int, list] = {}
        self._row_sizes: dict[int, np.ndarray] = {}

    # -- construction (used by the solvers) ---------------------------------
    def start_row(self, k: int):
        self._row_lists[k] = []
        self._row_sizes[k] = np.zeros(self.n + 1, dtype=np.int64)

    def add_cell(self, k: int, t: int, arr: np.ndarray | None):
        if arr is None or arr.shape[0] == 0:
            self.counts[k - 1, t - 1] = 0 if arr is not None else -1
            return
        self.counts[k - 1, t - 1] = arr.shape[0]
        self._row_sizes[k][t] = arr.shape[0]
        self._row_lists[k].append(arr[:, (_k.COL_HI, _k.COL_PREV_END,
                                          _k.COL_PREV_MEAN, _k.COL_TAG)])
        if self._funcs is not None:
            self._funcs[(k, t)] = arr.copy()
        if t == self.n:
            self._final[k] = arr.copy()

    def finish_row(self, k: int):
        self._offsets[k - 1] = np.concatenate(
            [[0], np.cumsum(self._row_sizes[k][1:])])
        if self._row_lists[k]:
            packed = np.concatenate(self._row_lists[k], axis=0)
        else:
            packed = np.empty((0, 4))
        self._his[k - 1] = np.ascontiguousarray(packed[:, 0])
        self._prev_ends[k - 1] = packed[:, 1].astype(np.int32)
        self._prev_means[k - 1] = np.ascontiguousarray(packed[:, 2])
        self._tags[k - 1] = packed[:, 3].astype(np.int16)
        del self._row_lists[k]
        del self._row_sizes[k]

    # -- decoding accessors -------------------------------------------------
    def final(self, k: int) -> np.ndarray | None:
        return self._final.get(k)

    def cell_lookup(self, k: int, t: int, pos: float):
        """(prev_end, prev_mean, tag) of the piece of cell (k,t) at pos.

        Boundary positions resolve to the left piece.
        """
        o = self._offsets[k - 1]
        lo, hi = o[t - 1], o[t]
        if lo == hi:
            raise ConsistencyError(f"decode hit an undefined cell ({k}, {t})")
        his = self._his[k - 1][lo:hi]
        i = int(np.searchsorted(his, pos, side="left"))
        if i == his.shape[0]:
            if pos > his[-1] + 1e-9 * (1.0 + abs(his[-1])):
                raise ConsistencyError(
                    f"position {pos} beyond cell ({k}, {t}) coverage")
            i -= 1
        j = lo + i
        return (int(self._prev_ends[k - 1][j]),
                float(self._prev_means[k - 1][j]),
                int(self._tags[k - 1][j]))

    def function(self, k: int, t: int) -> PiecewiseCost:
        """Full piecewise function of cell (k, t).

        Only the final column (t = n) is kept by default; everything else
        requires solving with ``keep_functions=True``.
        """
        if t == self.n and k in self._final:
            arr = self._final[k]
        elif self._funcs is None:
            raise ValueError("cost functions were not retained; "
                             "solve with keep_functions=True")
        else:
            arr = self._funcs.get((k, t))
        if arr is None:
            raise KeyError(f"cell ({k}, {t}) is undefined")
        return PiecewiseCost(arr.copy(), self.loss, self.dom_lo, self.dom_hi)


@dataclass(frozen=True)
class BudgetResult:
    """Everything a solve produced: one Segmentation per k, pruning stats,
    and the decoding table (reusable via :func:`decode`)."""

    segmentations: list[Segmentation]
    stats: PruningStats
    costs: CostTable

    def __getitem__(self, k: int) -> Segmentation:
        return self.segmentations[k - 1]


def _signed_shift(schedule: ConstraintSchedule, j: int) -> float:
    con = schedule.constraint_for_change(j)
    if con.kind is ChangeKind.NON_DECREASING:
        return con.gap
    if con.kind is ChangeKind.NON_INCREASING:
        return -con.gap
    return 0.0


def _domain(data: WeightedSequence, loss: LossFamily) -> tuple[float, float]:
    """Mean domain as positions (log-means for poisson)."""
    lo = float(np.min(data.values))
    hi = float(np.max(data.values))
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
        if loss is LossFamily.POISSON:
            lo = max(lo, 0.0)
    if loss is LossFamily.POISSON:
        return (math.log(lo) if lo > 0.0 else -math.inf), math.log(hi)
    return lo, hi


def _validate(data: WeightedSequence, K: int, schedule: ConstraintSchedule,
              loss: LossFamily):
    if K < 1:
        raise ValueError(f"segment count must be >= 1, got {K}")
    if K > data.n:
        raise InfeasibleError(
            f"cannot fit {K} segments to {data.n} encoded points")
    if loss is LossFamily.POISSON:
        v = data.values
        if np.any(v < 0) or np.any(v != np.round(v)):
            raise ValueError("poisson loss requires nonnegative integer counts")
        for j in range(1, K):
            if schedule.constraint_for_change(j).gap != 0.0:
                raise ValueError(
                    "gap constraints are not representable for poisson loss")
    schedule.constraints_for(K)  # verifies explicit schedules are long enough


def _apply_change_op(diag: np.ndarray, con, t_prev: int, tag: int,
                     dom_lo: float, dom_hi: float, code: int):
    """The change operator for one constraint, with prev_end stamped."""
    if con.kind is ChangeKind.ANY_CHANGE:
        out, m = _k.min_const_kernel(diag, t_prev, tag, dom_lo, dom_hi, code)
        return out[:m]
    if con.kind is ChangeKind.NON_DECREASING:
        out, m = _k.min_less_kernel(diag, t_prev, tag, dom_hi, code)
        if con.gap != 0.0:
            out, m = _k.shift_clip_kernel(out[:m], con.gap, dom_lo, dom_hi)
    else:
        out, m = _k.min_more_kernel(diag, t_prev, tag, dom_lo, code)
        if con.gap != 0.0:
            out, m = _k.shift_clip_kernel(out[:m], -con.gap, dom_lo, dom_hi)
    return out[:m] if m > 0 else None


def solve_budget(data: WeightedSequence, K: int,
                 schedule: ConstraintSchedule, loss: LossFamily,
                 keep_functions: bool = False) -> BudgetResult:
    """Exactly solve the constrained segmentation problem for k = 1..K.

    Parameters
    ----------
    data : WeightedSequence
        Encoded observations (see :meth:`WeightedSequence.from_values`).
    K : int
        Largest segment count; one optimal model per k = 1..K is returned.
    schedule : ConstraintSchedule
        Constraint on each change (between segments j and j+1).
    loss : LossFamily
    keep_functions : bool
        Retain every cell's full piecewise function (memory-heavy; meant
        for inspection and tests). Summaries for decoding are always kept.

    Returns
    -------
    BudgetResult

    Raises
    ------
    InfeasibleError
        If K exceeds the number of encoded points, or a gap constraint
        leaves some requested model size with no feasible mean vector
        (means are confined to the data range).
    """
    _validate(data, K, schedule, loss)
    code = loss.code
    n = data.n
    y = data.values
    w = data.weights
    W = data.cumulative_weights
    dom_lo, dom_hi = _domain(data, loss)
    table = CostTable(K, n, loss, schedule, float(W[-1]), dom_lo, dom_hi,
                      keep_functions)

    prev_row: list[np.ndarray | None] = [None] * (n + 1)
    for k in range(1, K + 1):
        cur_row: list[np.ndarray | None] = [None] * (n + 1)
        table.start_row(k)
        if k == 1:
            cell = np.zeros((1, _k.NCOL))
            cell[0, _k.COL_LO] = dom_lo
            cell[0, _k.COL_HI] = dom_hi
            cell[0, _k.COL_PREV_MEAN] = math.nan
            cell[0, _k.COL_TAG] = -1.0
            _k.scale_add_loss_kernel(cell, 1.0, y[0], 1.0, code)
            cur_row[1] = cell
            table.add_cell(1, 1, cell)
            for t in range(2, n + 1):
                cell = cur_row[t - 1].copy()
                _k.scale_add_loss_kernel(cell, W[t - 2] / W[t - 1],
                                         y[t - 1], w[t - 1] / W[t - 1], code)
                cur_row[t] = cell
                table.add_cell(1, t, cell)
        else:
            con = schedule.constraint_for_change(k - 1)
            for t in range(k, n + 1):
                diag = prev_row[t - 1]
                branch = None
                if diag is not None:
                    branch = _apply_change_op(diag, con, t - 1, k - 1,
                                              dom_lo, dom_hi, code)
                stay = cur_row[t - 1]
                if branch is None and stay is None:
                    table.add_cell(k, t, None)
                    continue
                if t == k or stay is None:
                    cell = branch.copy() if branch is not None else None
                elif branch is None:
                    cell = stay.copy()
                else:
                    out, m = _k.min_of_two_kernel(branch, stay, True, code)
                    cell = out[:m].copy()
                if cell is None:
                    table.add_cell(k, t, None)
                    continue
                _k.scale_add_loss_kernel(cell, W[t - 2] / W[t - 1],
                                         y[t - 1], w[t - 1] / W[t - 1], code)
                cur_row[t] = cell
                table.add_cell(k, t, cell)
        table.finish_row(k)
        prev_row = cur_row

    segmentations = []
    for k in range(1, K + 1):
        if table.final(k) is None:
            raise InfeasibleError(
                f"no {k}-segment model satisfies the constraints "
                f"within the data range")
        segmentations.append(decode(table, k))
    return BudgetResult(segmentations, pruning_stats(table), table)


def decode(costs: CostTable, k: int) -> Segmentation:
    """Recover the optimal k-segment model from a filled table.

    Walks backpointers from the global minimum of the final cost function.
    An ``EQUALITY_ACTIVE`` marker means the constraint on that change is
    tight: the previous mean equals the current one shifted by the
    scheduled gap (an effective merge when the gap is zero).
    """
    if not 1 <= k <= costs.K:
        raise ValueError(f"k must be in 1..{costs.K}, got {k}")
    arr = costs.final(k)
    if arr is None:
        raise InfeasibleError(f"no feasible {k}-segment model")
    code = costs.loss.code
    i, pos, v = _k.global_argmin_kernel(arr, code)
    t_cur = int(arr[i, _k.COL_PREV_END])
    u_next = float(arr[i, _k.COL_PREV_MEAN])
    means_p = np.empty(k)
    ends = np.empty(k, dtype=np.int64)
    means_p[k - 1] = pos
    ends[k - 1] = costs.n
    for s in range(k - 1, 0, -1):
        if u_next == EQUALITY_ACTIVE:
            pos = pos - _signed_shift(costs.schedule, s)
        elif math.isnan(u_next):
            raise ConsistencyError(
                f"missing backpointer while decoding segment {s}")
        else:
            pos = u_next
        if not t_cur >= s:
            raise ConsistencyError(
                f"backpointer order violated at segment {s}: end {t_cur}")
        means_p[s - 1] = pos
        ends[s - 1] = t_cur
        t_prev, u_next, _tag = costs.cell_lookup(s, t_cur, pos)
        if s > 1 and not t_prev < t_cur:
            raise ConsistencyError(
                f"backpointer order violated at segment {s}: "
                f"{t_prev} !< {t_cur}")
        t_cur = t_prev
    if t_cur != 0:
        raise ConsistencyError(f"decode did not reach the first point "
                               f"(stopped at {t_cur})")
    means = np.exp(means_p) if costs.loss is LossFamily.POISSON else means_p
    states = None
    if costs.schedule.name == "updown":
        states = tuple(_UPDOWN_STATES[i % 2] for i in range(k))
    return Segmentation(k=k, means=means, ends=ends,
                        total_cost=float(v * costs.w_total), states=states)


def pruning_stats(costs: CostTable) -> PruningStats:
    """Piece counts actually stored per DP cell, with median/max summary."""
    return PruningStats(counts=costs.counts.copy())
