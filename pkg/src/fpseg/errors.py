"""Error types raised by the solvers."""


class InfeasibleError(RuntimeError):
    """No segmentation satisfies the requested constraints."""


class ConsistencyError(RuntimeError):
    """Internal invariant violated while building or decoding cost tables."""
