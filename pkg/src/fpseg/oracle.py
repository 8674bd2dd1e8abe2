"""Brute-force reference solvers used only for verification.

Everything here is deliberately naive and kept independent of the
functional-pruning machinery: losses are evaluated directly, constrained
mean fits are solved by dynamic programming over a dense grid of candidate
means, and changepoint placements (plus state paths for graphs) are
enumerated exhaustively. These routines are the ground truth the fast
solvers are tested against.
"""
from __future__ import annotations

import itertools
import math
from collections import namedtuple

import numpy as np

from .models import ChangeConstraint, ChangeKind, ConstraintSchedule, StateGraph
from .piecewise import LossFamily
from .sequence import WeightedSequence

__all__ = [
    "OracleFit",
    "segment_cost",
    "dpa_unconstrained",
    "enumerate_constrained",
    "enumerate_penalized",
]

MAX_ENUM_POINTS = 12

OracleFit = namedtuple("OracleFit", ["cost", "means", "ends", "states"])


def _point_loss(y: float, w: float, mu: float, loss: LossFamily) -> float:
    if loss is LossFamily.SQUARE:
        return w * (y - mu) * (y - mu)
    if mu == 0.0:
        return 0.0 if y == 0 else math.inf
    return w * (mu - y * math.log(mu))


def segment_cost(data: WeightedSequence, lo: int, hi: int, mu: float,
                 loss: LossFamily) -> float:
    """Weighted loss of fitting mean `mu` to encoded points lo+1..hi."""
    if not 0 <= lo < hi <= data.n:
        raise ValueError(f"bad segment bounds ({lo}, {hi}] for n={data.n}")
    return sum(
        _point_loss(data.values[t], data.weights[t], mu, loss)
        for t in range(lo, hi)
    )


class _PrefixSums:
    """Closed-form optimal segment costs from cumulative sums."""

    def __init__(self, data: WeightedSequence, loss: LossFamily):
        self.loss = loss
        w = data.weights
        y = data.values
        self.s0 = np.concatenate([[0.0], np.cumsum(w)])
        self.s1 = np.concatenate([[0.0], np.cumsum(w * y)])
        self.s2 = np.concatenate([[0.0], np.cumsum(w * y * y)])

    def best_mean(self, lo: int, hi: int) -> float:
        return (self.s1[hi] - self.s1[lo]) / (self.s0[hi] - self.s0[lo])

    def best_cost(self, lo: int, hi: int) -> float:
        sw = self.s0[hi] - self.s0[lo]
        sy = self.s1[hi] - self.s1[lo]
        if self.loss is LossFamily.SQUARE:
            return (self.s2[hi] - self.s2[lo]) - sy * sy / sw
        if sy == 0.0:
            return 0.0
        mu = sy / sw
        return sw * mu - sy * math.log(mu)

    def cost_at(self, lo: int, hi: int, mu) -> np.ndarray:
        """Vectorized segment cost over an array of candidate means."""
        mu = np.asarray(mu, dtype=np.float64)
        sw = self.s0[hi] - self.s0[lo]
        sy = self.s1[hi] - self.s1[lo]
        if self.loss is LossFamily.SQUARE:
            return (self.s2[hi] - self.s2[lo]) - 2.0 * mu * sy + mu * mu * sw
        out = np.empty_like(mu)
        zero = mu == 0.0
        with np.errstate(divide="ignore"):
            out[~zero] = sw * mu[~zero] - sy * np.log(mu[~zero])
        out[zero] = 0.0 if sy == 0.0 else np.inf
        return out


def dpa_unconstrained(data: WeightedSequence, K: int,
                      loss: LossFamily) -> list[float]:
    """Optimal unconstrained costs for k = 1..K segments, O(K n^2) exact DP."""
    n = data.n
    if not 1 <= K <= n:
        raise ValueError(f"segment count K={K} must be in 1..{n}")
    ps = _PrefixSums(data, loss)
    # best[t] = optimal cost of covering points 1..t with the current k.
    best = np.array([ps.best_cost(0, t) for t in range(1, n + 1)])
    costs = [float(best[n - 1])]
    for k in range(2, K + 1):
        nxt = np.full(n, np.inf)
        for t in range(k, n + 1):
            nxt[t - 1] = min(
                best[s - 1] + ps.best_cost(s, t) for s in range(k - 1, t)
            )
        best = nxt
        costs.append(float(best[n - 1]))
    return costs


def _mean_domain(data: WeightedSequence, loss: LossFamily) -> tuple[float, float]:
    lo = float(np.min(data.values))
    hi = float(np.max(data.values))
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
        if loss is LossFamily.POISSON:
            lo = max(lo, 0.0)
    return lo, hi


def _feasible_prev_index(grid_prev, grid_cur, j, constraint):
    """Largest/smallest feasible index range into grid_prev for grid_cur[j]."""
    if constraint.kind is ChangeKind.NON_DECREASING:
        # prev <= cur - gap: allowed prefix of grid_prev
        cut = np.searchsorted(grid_prev, grid_cur[j] - constraint.gap, side="right")
        return 0, cut
    if constraint.kind is ChangeKind.NON_INCREASING:
        cut = np.searchsorted(grid_prev, grid_cur[j] + constraint.gap, side="left")
        return cut, len(grid_prev)
    return 0, len(grid_prev)


def _chain_fit(ps, bounds, constraints, grids):
    """DP over per-segment candidate-mean grids under chained constraints.

    bounds: segment boundaries [t_0=0, t_1, ..., t_K=n]; grids: one ascending
    array of candidate means per segment. Returns (cost, means) or (inf, None).
    """
    k_total = len(bounds) - 1
    cost = ps.cost_at(bounds[0], bounds[1], grids[0])
    back: list[np.ndarray] = []
    for s in range(1, k_total):
        grid_prev, grid_cur = grids[s - 1], grids[s]
        con = constraints[s - 1]
        seg = ps.cost_at(bounds[s], bounds[s + 1], grid_cur)
        nxt = np.full(len(grid_cur), np.inf)
        bp = np.full(len(grid_cur), -1, dtype=np.int64)
        if con.kind is ChangeKind.NON_DECREASING:
            run_min = np.minimum.accumulate(cost)
            run_arg = np.zeros(len(grid_prev), dtype=np.int64)
            for i in range(1, len(grid_prev)):
                run_arg[i] = i if cost[i] < cost[run_arg[i - 1]] else run_arg[i - 1]
            for j in range(len(grid_cur)):
                _, cut = _feasible_prev_index(grid_prev, grid_cur, j, con)
                if cut > 0:
                    nxt[j] = run_min[cut - 1] + seg[j]
                    bp[j] = run_arg[cut - 1]
        elif con.kind is ChangeKind.NON_INCREASING:
            run_min = np.minimum.accumulate(cost[::-1])[::-1]
            run_arg = np.zeros(len(grid_prev), dtype=np.int64)
            run_arg[-1] = len(grid_prev) - 1
            for i in range(len(grid_prev) - 2, -1, -1):
                run_arg[i] = i if cost[i] < cost[run_arg[i + 1]] else run_arg[i + 1]
            for j in range(len(grid_cur)):
                start, _ = _feasible_prev_index(grid_prev, grid_cur, j, con)
                if start < len(grid_prev):
                    nxt[j] = run_min[start] + seg[j]
                    bp[j] = run_arg[start]
        else:
            i_best = int(np.argmin(cost))
            nxt = cost[i_best] + seg
            bp[:] = i_best
        cost = nxt
        back.append(bp)
    j = int(np.argmin(cost))
    total = float(cost[j])
    if not math.isfinite(total):
        return math.inf, None
    means = [0.0] * k_total
    means[-1] = float(grids[-1][j])
    for s in range(k_total - 2, -1, -1):
        j = int(back[s][j])
        means[s] = float(grids[s][j])
    return total, means


def _refine_grids(grids, coarse_means, points: int = 65):
    """Local grids spanning one coarse cell on each side of each optimum."""
    refined = []
    for grid, m in zip(grids, coarse_means):
        j = int(np.searchsorted(grid, m))
        j = min(max(j, 0), len(grid) - 1)
        lo = grid[max(j - 1, 0)]
        hi = grid[min(j + 1, len(grid) - 1)]
        refined.append(np.linspace(lo, hi, points))
    return refined


def _iter_placements(n: int, k: int):
    for interior in itertools.combinations(range(1, n), k - 1):
        yield (0, *interior, n)


def _guard_size(data: WeightedSequence):
    if data.n > MAX_ENUM_POINTS:
        raise ValueError(
            f"exhaustive enumeration is limited to n <= {MAX_ENUM_POINTS} "
            f"encoded points, got {data.n}"
        )


def _iter_edge_paths(graph: StateGraph, k: int):
    """All (start_state, edge index sequence) pairs for k-segment paths."""
    if k == 1:
        for s in graph.start_states:
            if s in graph.end_states:
                yield s, ()
        return
    by_source: dict[int, list[int]] = {}
    for i, e in enumerate(graph.edges):
        by_source.setdefault(e.source, []).append(i)

    def walk(state, path):
        if len(path) == k - 1:
            if graph.edges[path[-1]].target in graph.end_states:
                yield tuple(path)
            return
        for i in by_source.get(state, ()):
            yield from walk(graph.edges[i].target, path + [i])

    for s in graph.start_states:
        for path in walk(s, []):
            yield s, path


def enumerate_constrained(data: WeightedSequence, K: int, model,
                          loss: LossFamily, grid_size: int = 512) -> OracleFit:
    """Best K-segment fit by exhaustion over placements (and state paths).

    `model` is a ConstraintSchedule or a StateGraph; with a graph, edge
    penalties are included in the reported cost and start/end states are
    enforced. Candidate means are drawn from a uniform grid over the data
    range (the solver's mean domain), refined once around the coarse
    optimum. Instances are limited to small n by a size guard.
    """
    _guard_size(data)
    n = data.n
    if not 1 <= K <= n:
        raise ValueError(f"segment count K={K} must be in 1..{n}")
    if grid_size < 64:
        raise ValueError(f"grid_size must be >= 64, got {grid_size}")
    ps = _PrefixSums(data, loss)
    lo, hi = _mean_domain(data, loss)
    base_grid = np.linspace(lo, hi, grid_size)

    if isinstance(model, ConstraintSchedule):
        paths = [(None, None)]
        constraints_of = lambda _path: model.constraints_for(K)
        penalty_of = lambda _path: 0.0
    elif isinstance(model, StateGraph):
        paths = list(_iter_edge_paths(model, K))
        constraints_of = lambda path: [model.edges[i].constraint for i in path[1]]
        penalty_of = lambda path: sum(model.edges[i].penalty for i in path[1])
    else:
        raise TypeError(f"model must be a ConstraintSchedule or StateGraph, got {model!r}")

    best = OracleFit(math.inf, None, None, None)
    best_setup = None
    for path in paths:
        constraints = constraints_of(path)
        penalty = penalty_of(path)
        for bounds in _iter_placements(n, K):
            grids = [base_grid] * K
            cost, means = _chain_fit(ps, bounds, constraints, grids)
            if cost + penalty < best.cost:
                states = None
                if path[0] is not None:
                    chain = [path[0]] + [model.edges[i].target for i in path[1]]
                    states = [model.state_names[s] for s in chain]
                best = OracleFit(cost + penalty, means, list(bounds[1:]), states)
                best_setup = (path, bounds, constraints, penalty, grids, means)

    if best_setup is not None:
        path, bounds, constraints, penalty, grids, means = best_setup
        cost, refined_means = _chain_fit(
            ps, bounds, constraints, _refine_grids(grids, means)
        )
        if refined_means is not None and cost + penalty < best.cost:
            best = OracleFit(cost + penalty, refined_means, best.ends, best.states)
    return best


def enumerate_penalized(data: WeightedSequence, graph: StateGraph,
                        loss: LossFamily, grid_size: int = 512) -> OracleFit:
    """Best penalized fit: exhaustion over segment counts, placements and
    state paths, with per-edge penalties added to the data cost."""
    _guard_size(data)
    best = OracleFit(math.inf, None, None, None)
    for k in range(1, data.n + 1):
        fit = enumerate_constrained(data, k, graph, loss, grid_size)
        if fit.cost < best.cost:
            best = fit
    if best.means is None:
        raise ValueError("no feasible path through the graph for this data")
    return best
