"""Model descriptions: per-change constraints, schedules, and state graphs.

A segmentation model is described either by a :class:`ConstraintSchedule`
(one constraint per change, used by the segment-budget solver) or by a
:class:`StateGraph` (states connected by penalized, constraint-tagged
edges, used by the penalized solver).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

__all__ = [
    "ChangeKind",
    "ChangeConstraint",
    "ConstraintSchedule",
    "GraphEdge",
    "StateGraph",
    "preset_graph",
    "parse_graph_text",
]


class ChangeKind(enum.Enum):
    """Direction constraint on the mean change between adjacent segments."""

    ANY_CHANGE = "any"
    NON_DECREASING = "up"
    NON_INCREASING = "down"


@dataclass(frozen=True)
class ChangeConstraint:
    """One allowed change: a direction plus an optional additive gap.

    ``NON_DECREASING`` with gap d requires next_mean >= prev_mean + d;
    ``NON_INCREASING`` with gap d requires next_mean <= prev_mean - d;
    ``ANY_CHANGE`` allows any pair of means (gap must be 0).
    """

    kind: ChangeKind
    gap: float = 0.0

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError(f"gap must be nonnegative, got {self.gap}")
        if self.kind is ChangeKind.ANY_CHANGE and self.gap != 0:
            raise ValueError("an unconstrained change cannot carry a gap")

    def satisfied(self, prev_mean: float, next_mean: float, tol: float = 0.0) -> bool:
        if self.kind is ChangeKind.NON_DECREASING:
            return next_mean >= prev_mean + self.gap - tol
        if self.kind is ChangeKind.NON_INCREASING:
            return next_mean <= prev_mean - self.gap + tol
        return True


ANY = ChangeConstraint(ChangeKind.ANY_CHANGE)
UP = ChangeConstraint(ChangeKind.NON_DECREASING)
DOWN = ChangeConstraint(ChangeKind.NON_INCREASING)


class ConstraintSchedule:
    """Constraints for changes 1..K-1, as a named pattern or an explicit list.

    The named patterns generate a constraint for any change index:
    ``unconstrained`` allows anything, ``nondecreasing`` forces every change
    up (reduced isotonic regression), and ``up_down`` alternates up, down,
    up, ... starting with an up change (peak model: even segments are peaks).
    """

    def __init__(self, name: str, constraints: list[ChangeConstraint] | None = None):
        self.name = name
        self._explicit = list(constraints) if constraints is not None else None
        self._gap = 0.0

    @classmethod
    def unconstrained(cls) -> "ConstraintSchedule":
        return cls("unconstrained")

    @classmethod
    def nondecreasing(cls, gap: float = 0.0) -> "ConstraintSchedule":
        sched = cls("isotonic")
        sched._gap = gap
        return sched

    @classmethod
    def up_down(cls, gap: float = 0.0) -> "ConstraintSchedule":
        sched = cls("updown")
        sched._gap = gap
        return sched

    @classmethod
    def explicit(cls, constraints) -> "ConstraintSchedule":
        return cls("explicit", list(constraints))

    def constraint_for_change(self, j: int) -> ChangeConstraint:
        """Constraint for change j (1-based: between segments j and j+1)."""
        if j < 1:
            raise ValueError(f"change index must be >= 1, got {j}")
        if self._explicit is not None:
            if j > len(self._explicit):
                raise ValueError(
                    f"schedule has {len(self._explicit)} constraints, "
                    f"change {j} requested"
                )
            return self._explicit[j - 1]
        if self.name == "unconstrained":
            return ANY
        if self.name == "isotonic":
            return ChangeConstraint(ChangeKind.NON_DECREASING, self._gap)
        if self.name == "updown":
            kind = ChangeKind.NON_DECREASING if j % 2 == 1 else ChangeKind.NON_INCREASING
            return ChangeConstraint(kind, self._gap)
        raise ValueError(f"unknown schedule {self.name!r}")

    def constraints_for(self, k: int) -> list[ChangeConstraint]:
        """The k-1 constraints governing a k-segment model."""
        if self._explicit is not None and len(self._explicit) < k - 1:
            raise ValueError(
                f"schedule has {len(self._explicit)} constraints but a "
                f"{k}-segment model needs {k - 1}"
            )
        return [self.constraint_for_change(j) for j in range(1, k)]

    def __repr__(self) -> str:
        if self._explicit is not None:
            return f"ConstraintSchedule(explicit, {len(self._explicit)} changes)"
        return f"ConstraintSchedule({self.name!r})"


@dataclass(frozen=True)
class GraphEdge:
    """A penalized transition between states with a change constraint."""

    source: int
    target: int
    penalty: float
    constraint: ChangeConstraint

    def __post_init__(self):
        if self.penalty < 0:
            raise ValueError(f"edge penalty must be nonnegative, got {self.penalty}")


@dataclass(frozen=True)
class StateGraph:
    """States and penalized, constraint-tagged edges defining a model.

    Staying in the current state with no change is always possible and
    carries no penalty; only actual changes follow edges. ``start_states``
    and ``end_states`` restrict the first and last segment's state.
    """

    state_names: tuple[str, ...]
    edges: tuple[GraphEdge, ...]
    start_states: tuple[int, ...]
    end_states: tuple[int, ...]
    name: str = "custom"

    def __post_init__(self):
        n_states = len(self.state_names)
        if n_states == 0:
            raise ValueError("a state graph needs at least one state")
        if len(set(self.state_names)) != n_states:
            raise ValueError("duplicate state names")
        for e in self.edges:
            if not (0 <= e.source < n_states and 0 <= e.target < n_states):
                raise ValueError(f"edge {e} references a missing state")
        for label, states in (("start", self.start_states), ("end", self.end_states)):
            if not states:
                raise ValueError(f"{label}_states must be nonempty")
            for s in states:
                if not 0 <= s < n_states:
                    raise ValueError(f"{label} state {s} does not exist")

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def incoming(self, state: int) -> list[int]:
        """Indices of edges whose target is `state`, in input order."""
        return [i for i, e in enumerate(self.edges) if e.target == state]

    def state_index(self, name: str) -> int:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise ValueError(f"no state named {name!r}") from None


_PRESET_EDGE_COUNTS = {"unconstrained": 1, "isotonic": 1, "updown": 2, "unimodal": 4}


def preset_graph(name: str, penalties) -> StateGraph:
    """One of the four built-in state graphs.

    ``unconstrained``: one state, one any-change self edge.
    ``isotonic``: one state, one non-decreasing self edge.
    ``updown``: background and peak states; an up edge into the peak and a
    down edge back, starting and ending in background (even segments along
    a path are peaks).
    ``unimodal``: states up, up_down, down; up changes while climbing, a
    single switch to descending, down changes after; starts in ``up``.

    `penalties` gives one nonnegative penalty per edge (1, 1, 2 and 4
    edges respectively).
    """
    try:
        expected = _PRESET_EDGE_COUNTS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; expected one of {sorted(_PRESET_EDGE_COUNTS)}"
        ) from None
    lam = [float(p) for p in penalties]
    if len(lam) != expected:
        raise ValueError(f"preset {name!r} takes {expected} penalties, got {len(lam)}")
    if name == "unconstrained":
        return StateGraph(
            state_names=("s0",),
            edges=(GraphEdge(0, 0, lam[0], ANY),),
            start_states=(0,),
            end_states=(0,),
            name=name,
        )
    if name == "isotonic":
        return StateGraph(
            state_names=("s0",),
            edges=(GraphEdge(0, 0, lam[0], UP),),
            start_states=(0,),
            end_states=(0,),
            name=name,
        )
    if name == "updown":
        return StateGraph(
            state_names=("background", "peak"),
            edges=(GraphEdge(0, 1, lam[0], UP), GraphEdge(1, 0, lam[1], DOWN)),
            start_states=(0,),
            end_states=(0,),
            name=name,
        )
    return StateGraph(
        state_names=("up", "up_down", "down"),
        edges=(
            GraphEdge(0, 1, lam[0], UP),
            GraphEdge(1, 1, lam[1], UP),
            GraphEdge(1, 2, lam[2], DOWN),
            GraphEdge(2, 2, lam[3], DOWN),
        ),
        start_states=(0,),
        end_states=(0, 1, 2),
        name=name,
    )


def parse_graph_text(text: str, name: str = "custom") -> StateGraph:
    """Parse a state-graph description.

    One line per edge: ``source target penalty {any|up|down} [gap]``, where
    source/target are state names (created on first mention). Header lines
    ``start: name [name ...]`` and ``end: name [name ...]`` pick the allowed
    first/last states; both are required. ``#`` starts a comment.
    """
    states: list[str] = []
    edges: list[GraphEdge] = []
    start_names: list[str] | None = None
    end_names: list[str] | None = None

    def intern(state_name: str) -> int:
        if state_name not in states:
            states.append(state_name)
        return states.index(state_name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("start:"):
            start_names = line.split(":", 1)[1].split()
            continue
        if line.lower().startswith("end:"):
            end_names = line.split(":", 1)[1].split()
            continue
        parts = line.split()
        if len(parts) not in (4, 5):
            raise ValueError(
                f"graph line {lineno}: expected 'source target penalty "
                f"{{any|up|down}} [gap]', got {raw!r}"
            )
        src, dst, pen_text, kind_text = parts[:4]
        try:
            penalty = float(pen_text)
        except ValueError:
            raise ValueError(f"graph line {lineno}: bad penalty {pen_text!r}") from None
        try:
            kind = ChangeKind(kind_text.lower())
        except ValueError:
            raise ValueError(
                f"graph line {lineno}: change kind must be any, up or down, "
                f"got {kind_text!r}"
            ) from None
        gap = 0.0
        if len(parts) == 5:
            try:
                gap = float(parts[4])
            except ValueError:
                raise ValueError(f"graph line {lineno}: bad gap {parts[4]!r}") from None
        edges.append(
            GraphEdge(intern(src), intern(dst), penalty, ChangeConstraint(kind, gap))
        )

    if not edges:
        raise ValueError("graph description contains no edges")
    if start_names is None:
        raise ValueError("graph description is missing a 'start:' line")
    if end_names is None:
        raise ValueError("graph description is missing an 'end:' line")
    for state_name in start_names + end_names:
        if state_name not in states:
            raise ValueError(
                f"start/end state {state_name!r} does not appear in any edge"
            )
    return StateGraph(
        state_names=tuple(states),
        edges=tuple(edges),
        start_states=tuple(states.index(s) for s in start_names),
        end_states=tuple(states.index(s) for s in end_names),
        name=name,
    )
