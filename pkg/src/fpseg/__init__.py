"""fpseg: exact changepoint detection under ordering constraints.

Fits piecewise-constant means to weighted sequence data, either for
every segment count up to a budget (:func:`solve_budget`) or with a
penalty per change over a state graph (:func:`solve_penalized`). Both
solvers are exact: the optimal cost is carried as an exact piecewise
function of the last segment mean (:mod:`fpseg.piecewise`), so
constrained optima come out of a dynamic program with no discretization.
Square and Poisson losses are supported, with constraints on the
direction (and minimum size) of each mean change.
"""
from .budget import (BudgetResult, CostTable, PruningStats, Segmentation,
                     decode, pruning_stats, solve_budget)
from .errors import ConsistencyError, InfeasibleError
from .models import (ChangeConstraint, ChangeKind, ConstraintSchedule,
                     GraphEdge, StateGraph, parse_graph_text, preset_graph)
from .penalized import PenalizedSolution, penalized_isotonic, solve_penalized
from .piecewise import (EQUALITY_ACTIVE, FunctionPiece, LossFamily,
                        PiecewiseCost, add_loss, arg_min, compute_roots,
                        find_mean, get_cost, min_less, min_more, min_of_two,
                        one_piece, optimal_mean, shift_argument)
from .sequence import WeightedSequence, run_length_encode

__all__ = [
    "BudgetResult",
    "ChangeConstraint",
    "ChangeKind",
    "ConsistencyError",
    "ConstraintSchedule",
    "CostTable",
    "EQUALITY_ACTIVE",
    "FunctionPiece",
    "GraphEdge",
    "InfeasibleError",
    "LossFamily",
    "PenalizedSolution",
    "PiecewiseCost",
    "PruningStats",
    "Segmentation",
    "StateGraph",
    "WeightedSequence",
    "add_loss",
    "arg_min",
    "compute_roots",
    "decode",
    "find_mean",
    "get_cost",
    "min_less",
    "min_more",
    "min_of_two",
    "one_piece",
    "optimal_mean",
    "parse_graph_text",
    "penalized_isotonic",
    "preset_graph",
    "pruning_stats",
    "run_length_encode",
    "shift_argument",
    "solve_budget",
    "solve_penalized",
]
