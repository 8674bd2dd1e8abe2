"""Exact algebra on piecewise convex cost functions of a segment mean.

This module is the numerical heart of the solvers: cost-to-go functions are
represented exactly, piece by piece, and transformed by closed-form
operations instead of being tabulated on a grid.

Representation
--------------
A cost function ``f`` maps a candidate segment mean to a loss value. It is
stored as an ordered, contiguous list of convex pieces. Each piece holds
three coefficients ``(a, b, c)`` whose meaning depends on the loss family:

- square loss: ``f(mu) = a*mu**2 + b*mu + c`` (quadratic/linear/constant),
- poisson loss: ``f(mu) = a*mu + b*log(mu) + c`` (linear/log/constant).

Poisson pieces are handled in log-mean space ``p = log(mu)``, where they read
``a*exp(p) + b*p + c``; interval bounds of Poisson pieces are therefore
stored as log-means and the lower bound may be ``-inf`` (``mu = 0``). In both
families the pieces are convex and any two pieces (or a piece and a level)
cross at most twice, which is what keeps every operation exact.

Each piece also carries decoding metadata: ``prev_end``, the index where the
previous segment ended, and ``prev_mean``, the optimal previous segment mean
for any mean in this piece. ``prev_mean`` may instead be the flag
``EQUALITY_ACTIVE`` (``== math.inf``), meaning the constraint between the
two segments is tight, i.e. the previous mean equals this piece's mean (up
to the constraint's gap).

The public entry points mirror how the solvers consume the algebra:
``one_piece`` and ``add_loss`` build data terms; ``min_less`` / ``min_more``
/ ``min_of_two`` implement the constrained minimizations of the dynamic
program; ``arg_min`` and ``find_mean`` read solutions back out.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from ._kernels import EQUALITY_ACTIVE

__all__ = [
    "LossFamily",
    "EQUALITY_ACTIVE",
    "FunctionPiece",
    "PiecewiseCost",
    "one_piece",
    "add_loss",
    "get_cost",
    "optimal_mean",
    "compute_roots",
    "min_less",
    "min_more",
    "shift_argument",
    "min_of_two",
    "arg_min",
    "find_mean",
]


class LossFamily(enum.Enum):
    """Supported point losses.

    SQUARE is ``(y - mu)**2``; POISSON is the negative Poisson log-likelihood
    ``mu - y*log(mu)`` up to the data-only term.
    """

    SQUARE = "square"
    POISSON = "poisson"

    @property
    def code(self) -> int:
        return _k.LOSS_SQUARE if self is LossFamily.SQUARE else _k.LOSS_POISSON


def _to_position(mu: float, loss: LossFamily) -> float:
    """Mean -> piece argument (log-mean for Poisson)."""
    if loss is LossFamily.SQUARE:
        return mu
    if mu < 0.0:
        raise ValueError(f"poisson means must be nonnegative, got {mu}")
    return math.log(mu) if mu > 0.0 else -math.inf


def _to_mean(p: float, loss: LossFamily) -> float:
    if loss is LossFamily.SQUARE:
        return p
    return math.exp(p)


@dataclass(frozen=True)
class FunctionPiece:
    """One convex piece of a cost function.

    Attributes
    ----------
    coeffs : tuple of float
        ``(a, b, c)``; quadratic/linear/constant for square loss,
        linear/log/constant for poisson loss.
    lower_mean, upper_mean : float
        Interval of validity. For poisson loss these are log-means and
        ``lower_mean`` may be ``-inf``.
    prev_end : int
        Index where the previous segment ends; ``-1`` when unset.
    prev_mean : float or None
        Optimal previous segment mean (a plain mean for both families),
        the flag ``EQUALITY_ACTIVE`` when the constraint to the previous
        segment is tight, or ``None`` when unset.
    """

    coeffs: tuple[float, float, float]
    lower_mean: float
    upper_mean: float
    prev_end: int = -1
    prev_mean: float | None = None


class PiecewiseCost:
    """An ordered, contiguous list of :class:`FunctionPiece` plus its loss.

    Instances are immutable from the caller's perspective: every operation
    returns a fresh object. The global mean domain (the interval the
    function may legally cover) is carried along; after clipping operations
    the covered span can be a strict sub-interval of the domain, and means
    outside the covered span evaluate to ``+inf`` (infeasible).
    """

    __slots__ = ("_data", "loss", "_dom_lo", "_dom_hi")

    def __init__(self, data: np.ndarray, loss: LossFamily,
                 dom_lo: float, dom_hi: float):
        self._data = data
        self.loss = loss
        self._dom_lo = dom_lo
        self._dom_hi = dom_hi

    # -- introspection ----------------------------------------------------
    @property
    def n_pieces(self) -> int:
        return self._data.shape[0]

    @property
    def is_empty(self) -> bool:
        return self._data.shape[0] == 0

    @property
    def domain(self) -> tuple[float, float]:
        """Global mean domain (plain means for both families)."""
        return (_to_mean(self._dom_lo, self.loss),
                _to_mean(self._dom_hi, self.loss))

    @property
    def covered_span(self) -> tuple[float, float]:
        """Mean interval actually covered by pieces."""
        if self.is_empty:
            raise ValueError("empty function has no covered span")
        return (_to_mean(self._data[0, _k.COL_LO], self.loss),
                _to_mean(self._data[-1, _k.COL_HI], self.loss))

    @property
    def pieces(self) -> list[FunctionPiece]:
        out = []
        for row in self._data:
            pm = row[_k.COL_PREV_MEAN]
            if math.isnan(pm):
                prev_mean = None
            elif pm == EQUALITY_ACTIVE:
                prev_mean = EQUALITY_ACTIVE
            else:
                prev_mean = _to_mean(pm, self.loss)
            out.append(FunctionPiece(
                coeffs=(row[_k.COL_A], row[_k.COL_B], row[_k.COL_C]),
                lower_mean=row[_k.COL_LO],
                upper_mean=row[_k.COL_HI],
                prev_end=int(row[_k.COL_PREV_END]),
                prev_mean=prev_mean,
            ))
        return out

    def __len__(self) -> int:
        return self.n_pieces

    def __repr__(self) -> str:
        return (f"PiecewiseCost({self.n_pieces} pieces, "
                f"{self.loss.value}, domain={self.domain})")

    # -- evaluation --------------------------------------------------------
    def values(self, means) -> np.ndarray:
        """Evaluate at an array of means; ``+inf`` outside the covered span."""
        mus = np.asarray(means, dtype=np.float64)
        if self.loss is LossFamily.POISSON:
            with np.errstate(divide="ignore"):
                ps = np.log(mus)
        else:
            ps = mus
        return _k.eval_many(self._data, np.atleast_1d(ps).astype(np.float64),
                            self.loss.code)

    def __call__(self, mu: float) -> float:
        return float(self.values([mu])[0])


def _fresh(data: np.ndarray, like: PiecewiseCost) -> PiecewiseCost:
    return PiecewiseCost(data, like.loss, like._dom_lo, like._dom_hi)


# -- constructors ----------------------------------------------------------

def one_piece(y: float, w: float, lo: float, hi: float,
              loss: LossFamily) -> PiecewiseCost:
    """Single-piece cost ``w * loss(y, mu)`` on the mean domain ``[lo, hi]``.

    Parameters
    ----------
    y : float
        Data value. For poisson loss this must be a nonnegative count.
    w : float
        Nonnegative weight.
    lo, hi : float
        Mean-domain bounds, ``lo < hi``. Plain means for both families
        (they are converted to log-means internally for poisson loss,
        where ``lo == 0`` is allowed).
    loss : LossFamily

    Returns
    -------
    PiecewiseCost
        With unset backpointers (``prev_end == -1``, ``prev_mean is None``).
    """
    if not lo < hi:
        raise ValueError(f"domain requires lo < hi, got [{lo}, {hi}]")
    if w < 0.0:
        raise ValueError(f"weight must be nonnegative, got {w}")
    if loss is LossFamily.POISSON and (y < 0 or y != int(y)):
        raise ValueError(f"poisson data must be nonnegative counts, got {y}")
    plo = _to_position(lo, loss)
    phi = _to_position(hi, loss)
    data = np.zeros((1, _k.NCOL))
    data[0, _k.COL_LO] = plo
    data[0, _k.COL_HI] = phi
    data[0, _k.COL_PREV_END] = -1.0
    data[0, _k.COL_PREV_MEAN] = math.nan
    data[0, _k.COL_TAG] = -1.0
    _k.scale_add_loss_kernel(data, 1.0, float(y), float(w), loss.code)
    return PiecewiseCost(data, loss, plo, phi)


def add_loss(f: PiecewiseCost, y: float, w: float) -> PiecewiseCost:
    """Add ``w * loss(y, .)`` to every piece of ``f``.

    Intervals and backpointers are unchanged; only coefficients move.
    """
    if w < 0.0:
        raise ValueError(f"weight must be nonnegative, got {w}")
    data = f._data.copy()
    _k.scale_add_loss_kernel(data, 1.0, float(y), float(w), f.loss.code)
    return _fresh(data, f)


# -- per-piece helpers -------------------------------------------------------

def get_cost(p: FunctionPiece, mu: float, loss: LossFamily) -> float:
    """Evaluate one piece at the mean ``mu`` (boundary inclusive).

    Raises ``ValueError`` if ``mu`` falls outside the piece's interval.
    """
    pos = _to_position(mu, loss)
    if not p.lower_mean <= pos <= p.upper_mean:
        raise ValueError(
            f"mean {mu} outside piece interval "
            f"[{p.lower_mean}, {p.upper_mean}]")
    a, b, c = p.coeffs
    return _k.piece_value(a, b, c, pos, loss.code)


def optimal_mean(p: FunctionPiece, loss: LossFamily) -> float | None:
    """Unconstrained minimizer of one piece's formula, as a mean.

    Square: ``-b / (2a)``; poisson: ``-b / a``. The result may lie outside
    the piece's interval — containment is the caller's job. Affine pieces
    minimize at an infinite mean (the sign-appropriate infinity is
    returned); a fully constant piece has no interior minimum and yields
    ``None``.
    """
    a, b, _ = p.coeffs
    if a == 0.0 and b == 0.0:
        return None
    if loss is LossFamily.SQUARE:
        if a != 0.0:
            return -b / (2.0 * a)
        return -math.inf if b > 0.0 else math.inf
    if a != 0.0:
        return -b / a
    return math.inf  # b*log(mu) with b <= 0 decreases toward +inf


def compute_roots(p: FunctionPiece, d: float,
                  loss: LossFamily) -> tuple[float, ...]:
    """Means solving ``piece(mu) = d``, in increasing order.

    Square pieces use the closed-form quadratic formula. Poisson pieces use
    safeguarded Newton iteration: the larger root is found in mean space
    (where the formula is asymptotically linear) and the smaller in log-mean
    space, each started at the crossing of the relevant asymptote with
    ``d``; every returned root satisfies ``|piece(root) - d| < 1e-12``. A
    tangency (``d`` equal to the piece minimum) yields the single touching
    point; no crossing yields an empty tuple.
    """
    a, b, c = p.coeffs
    n, r1, r2 = _k.piece_roots(a, b, c, d, loss.code)
    if n == 0:
        return ()
    roots = (r1,) if (n == 1 or r1 == r2) else (r1, r2)
    return tuple(_to_mean(r, loss) for r in roots)


# -- whole-function operations ----------------------------------------------

def min_less(t_prev: int, f: PiecewiseCost) -> PiecewiseCost:
    """Running minimum from the left: ``g(mu) = min_{x <= mu} f(x)``.

    ``g`` is non-increasing and extends to the upper domain bound. Where
    ``f`` is still setting new minima the pieces are copies of ``f`` flagged
    ``EQUALITY_ACTIVE``; past each local minimum a constant piece carries
    the minimizing mean in ``prev_mean``. Every output piece has
    ``prev_end = t_prev``.
    """
    data, n = _k.min_less_kernel(f._data, t_prev, -1, f._dom_hi,
                                 f.loss.code)
    return _fresh(np.ascontiguousarray(data[:n]), f)


def min_more(t_prev: int, f: PiecewiseCost) -> PiecewiseCost:
    """Running minimum from the right: ``g(mu) = min_{x >= mu} f(x)``.

    Mirror of :func:`min_less`: non-decreasing, extends to the lower domain
    bound, constant pieces sit to the *left* of each local minimum.
    """
    data, n = _k.min_more_kernel(f._data, t_prev, -1, f._dom_lo,
                                 f.loss.code)
    return _fresh(np.ascontiguousarray(data[:n]), f)


def shift_argument(f: PiecewiseCost, delta: float) -> PiecewiseCost:
    """Translate the argument: ``g(mu) = f(mu - delta)``.

    Interval bounds move right by ``delta`` and are clipped to the global
    domain, so the result may cover only part of it — or nothing at all
    (an empty function, the infeasible signal). Only square loss supports
    ``delta != 0``: a mean shift does not stay within the poisson
    linear/log/constant basis.
    """
    if delta == 0.0:
        return _fresh(f._data.copy(), f)
    if f.loss is LossFamily.POISSON:
        raise ValueError(
            "argument shifts are only representable for square loss; "
            "poisson pieces cannot express log(mu - delta)")
    data, n = _k.shift_clip_kernel(f._data, float(delta),
                                   f._dom_lo, f._dom_hi)
    return _fresh(np.ascontiguousarray(data[:n]), f)


def min_of_two(f1: PiecewiseCost, f2: PiecewiseCost,
               tie_prefer_second: bool = False) -> PiecewiseCost:
    """Exact pointwise minimum of two functions on the same domain.

    Crossing points are the roots of the piecewise coefficient difference
    (at most two per overlapping piece pair for either family). The output
    copies coefficients *and* backpointers from whichever input is lower;
    over intervals where both agree exactly, ``tie_prefer_second`` picks
    the winner. Where only one input is defined (clipped coverage), that
    input wins. Crossings closer than ``1e-10`` to a boundary are merged.
    """
    if f1.loss is not f2.loss:
        raise ValueError("loss families differ")
    if (f1._dom_lo, f1._dom_hi) != (f2._dom_lo, f2._dom_hi):
        raise ValueError(
            f"domains differ: {f1.domain} vs {f2.domain}")
    if f1.is_empty:
        return _fresh(f2._data.copy(), f2)
    if f2.is_empty:
        return _fresh(f1._data.copy(), f1)
    data, n = _k.min_of_two_kernel(f1._data, f2._data,
                                   tie_prefer_second, f1.loss.code)
    return _fresh(np.ascontiguousarray(data[:n]), f1)


def arg_min(f: PiecewiseCost):
    """Global minimum of ``f``.

    Returns
    -------
    (mean, cost, prev_end, prev_mean)
        The minimizing mean (ties resolve to the smallest mean, interval
        endpoints included), the value there, and the winning piece's
        backpointers (``prev_mean`` may be ``EQUALITY_ACTIVE`` or ``None``).
    """
    if f.is_empty:
        raise ValueError("arg_min of an empty function")
    i, p, v = _k.global_argmin_kernel(f._data, f.loss.code)
    pm = f._data[i, _k.COL_PREV_MEAN]
    if math.isnan(pm):
        prev_mean = None
    elif pm == EQUALITY_ACTIVE:
        prev_mean = EQUALITY_ACTIVE
    else:
        prev_mean = _to_mean(pm, f.loss)
    return (_to_mean(p, f.loss), v, int(f._data[i, _k.COL_PREV_END]),
            prev_mean)


def find_mean(mu: float, f: PiecewiseCost):
    """Backpointers of the piece containing the mean ``mu``.

    A mean on a shared boundary belongs to the left (lower) piece. Raises
    ``ValueError`` when ``mu`` lies outside the covered span.

    Returns
    -------
    (prev_end, prev_mean)
    """
    if f.is_empty:
        raise ValueError("find_mean on an empty function")
    pos = _to_position(mu, f.loss)
    his = f._data[:, _k.COL_HI]
    if pos < f._data[0, _k.COL_LO] or pos > his[-1]:
        raise ValueError(f"mean {mu} outside covered span {f.covered_span}")
    i = int(np.searchsorted(his, pos, side="left"))
    pm = f._data[i, _k.COL_PREV_MEAN]
    if math.isnan(pm):
        prev_mean = None
    elif pm == EQUALITY_ACTIVE:
        prev_mean = EQUALITY_ACTIVE
    else:
        prev_mean = _to_mean(pm, f.loss)
    return int(f._data[i, _k.COL_PREV_END]), prev_mean
