"""Weighted data sequences with run-length encoding."""
from __future__ import annotations

import numpy as np

__all__ = ["WeightedSequence", "run_length_encode"]


def run_length_encode(values, weights=None):
    """Collapse adjacent equal values, summing their weights.

    Returns a pair of lists (values, weights). With no input weights each
    data point counts 1, so the weight of a run is its length.
    """
    vals = list(values)
    if weights is None:
        wts = [1.0] * len(vals)
    else:
        wts = [float(w) for w in weights]
        if len(wts) != len(vals):
            raise ValueError(
                f"values and weights differ in length: {len(vals)} vs {len(wts)}"
            )
    out_v: list[float] = []
    out_w: list[float] = []
    for v, w in zip(vals, wts):
        if out_v and v == out_v[-1]:
            out_w[-1] += w
        else:
            out_v.append(v)
            out_w.append(w)
    return out_v, out_w


class WeightedSequence:
    """A sequence of (value, weight) pairs with cumulative weights.

    Attributes
    ----------
    values : ndarray of float
        Encoded data values y_t, t = 1..n.
    weights : ndarray of float
        Positive weights w_t (run lengths for run-length-encoded data).
    cumulative_weights : ndarray of float
        W_t = sum of w_1..w_t, strictly increasing.
    n : int
        Number of encoded points.
    """

    def __init__(self, values, weights=None):
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("values must be a nonempty 1-d sequence")
        if weights is None:
            self.weights = np.ones_like(self.values)
        else:
            self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != self.values.shape:
            raise ValueError(
                f"values and weights differ in length: "
                f"{self.values.size} vs {self.weights.size}"
            )
        if not np.all(self.weights > 0):
            raise ValueError("all weights must be positive")
        self.cumulative_weights = np.cumsum(self.weights)
        self.n = int(self.values.size)

    @classmethod
    def from_values(cls, values, weights=None) -> "WeightedSequence":
        """Build a sequence, run-length encoding adjacent equal values."""
        v, w = run_length_encode(values, weights)
        return cls(v, w)

    def expand(self) -> np.ndarray:
        """Inverse of run-length encoding; requires integer weights."""
        reps = np.rint(self.weights).astype(np.int64)
        if not np.allclose(self.weights, reps):
            raise ValueError("cannot expand a sequence with non-integer weights")
        return np.repeat(self.values, reps)

    def is_integer_counts(self) -> bool:
        """True when all values are nonnegative integers (Poisson-admissible)."""
        return bool(np.all(self.values >= 0) and np.all(self.values == np.rint(self.values)))

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"WeightedSequence(n={self.n}, total_weight={self.cumulative_weights[-1]:g})"
