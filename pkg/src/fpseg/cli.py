"""Command-line front end.

Reads a value-per-line TSV or a bedGraph file, run-length encodes it,
solves either for a segment budget (``--segments``) or a per-change
penalty (``--penalty``), and writes segments as TSV rows
``start<TAB>end<TAB>mean<TAB>state``. Coordinates are half-open
``[start, end)``: data rows of a plain TSV occupy ``[i-1, i)``, bedGraph
intervals keep their genomic positions. ``--stats`` adds a single-line
JSON summary on stderr, ``--plot`` renders figures next to the delimited
output, and ``--verify`` cross-checks small inputs against the
brute-force reference solvers.

Exit codes: 0 success, 1 bad input data or failed verification, 2 usage
errors, 3 infeasible models.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .budget import BudgetResult, solve_budget
from .errors import InfeasibleError
from .models import (ChangeConstraint, ChangeKind, ConstraintSchedule,
                     GraphEdge, StateGraph, parse_graph_text, preset_graph)
from .oracle import (MAX_ENUM_POINTS, dpa_unconstrained, enumerate_constrained,
                     enumerate_penalized)
from .penalized import solve_penalized
from .piecewise import LossFamily
from .sequence import WeightedSequence

__all__ = ["SequenceBlock", "ingest", "peaks_from_segments", "run", "main"]

_MODELS = ("unconstrained", "isotonic", "updown", "unimodal")
_BENCH_SIZES = (1_000, 10_000, 100_000)


@dataclass(frozen=True)
class SequenceBlock:
    """One ingested sequence: encoded data plus position bookkeeping.

    ``boundaries`` has length n+1; encoded point i covers the half-open
    position range ``[boundaries[i-1], boundaries[i])``. For plain TSV
    these are cumulative row counts (or cumulative weights when a weight
    column is present); for bedGraph they are genomic coordinates.
    """

    name: str | None
    data: WeightedSequence
    boundaries: np.ndarray


def _open_source(source):
    if hasattr(source, "read"):
        return source, False
    if source == "-":
        return sys.stdin, False
    return open(source), True


def _rle_blocks(rows):
    """Merge adjacent (value, weight, end_position) rows with equal values."""
    values, weights, bounds = [], [], []
    for value, weight, end in rows:
        if values and value == values[-1]:
            weights[-1] += weight
            bounds[-1] = end
        else:
            values.append(value)
            weights.append(weight)
            bounds.append(end)
    return values, weights, bounds


def ingest(source, fmt: str = "tsv") -> list[SequenceBlock]:
    """Parse TSV or bedGraph rows into run-length encoded sequences.

    TSV rows are ``value`` or ``value<TAB>weight``; bedGraph rows are
    ``chrom<TAB>start<TAB>end<TAB>value`` with ``weight = end - start``,
    one output block per chromosome. ``#`` lines and blank lines are
    skipped. Adjacent rows with equal values merge into one weighted
    point.

    Raises
    ------
    ValueError
        On a malformed row (message includes the line number), bedGraph
        intervals that overlap or go backwards, or an empty input.
    """
    if fmt not in ("tsv", "bedgraph"):
        raise ValueError(f"unknown input format {fmt!r}")
    stream, owned = _open_source(source)
    try:
        if fmt == "tsv":
            rows = []
            pos = 0
            for lineno, raw in enumerate(stream, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) > 2:
                    raise ValueError(
                        f"line {lineno}: expected 'value' or 'value weight', "
                        f"got {len(parts)} fields")
                try:
                    value = float(parts[0])
                    weight = float(parts[1]) if len(parts) == 2 else 1.0
                except ValueError:
                    raise ValueError(
                        f"line {lineno}: could not parse {line!r}") from None
                if not math.isfinite(value) or not weight > 0:
                    raise ValueError(
                        f"line {lineno}: value must be finite and "
                        f"weight positive")
                pos += weight if len(parts) == 2 else 1
                rows.append((value, weight, pos))
            if not rows:
                raise ValueError("no data rows in input")
            values, weights, bounds = _rle_blocks(rows)
            return [SequenceBlock(
                name=None,
                data=WeightedSequence(np.array(values), np.array(weights)),
                boundaries=np.concatenate([[0.0], bounds]))]

        per_chrom: dict[str, list] = {}
        closed: set[str] = set()
        current = None
        for lineno, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or line.startswith(("#", "track", "browser")):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(
                    f"line {lineno}: bedGraph needs 4 fields, got {len(parts)}")
            chrom = parts[0]
            try:
                start, end = int(parts[1]), int(parts[2])
                value = float(parts[3])
            except ValueError:
                raise ValueError(
                    f"line {lineno}: could not parse {line!r}") from None
            if end <= start:
                raise ValueError(f"line {lineno}: empty interval {start}..{end}")
            if value < 0:
                raise ValueError(f"line {lineno}: negative count {value}")
            if chrom != current:
                if chrom in closed:
                    raise ValueError(
                        f"line {lineno}: rows for {chrom} are not contiguous")
                if current is not None:
                    closed.add(current)
                current = chrom
                per_chrom[chrom] = []
            elif per_chrom[chrom] and start < per_chrom[chrom][-1][2]:
                raise ValueError(
                    f"line {lineno}: interval {start}..{end} overlaps or is "
                    f"out of order")
            per_chrom[chrom].append((value, float(end - start), float(end),
                                     float(start)))
        if not per_chrom:
            raise ValueError("no data rows in input")
        blocks = []
        for chrom, raw_rows in per_chrom.items():
            first_start = raw_rows[0][3]
            values, weights, bounds = _rle_blocks(
                [(v, w, e) for v, w, e, _s in raw_rows])
            blocks.append(SequenceBlock(
                name=chrom,
                data=WeightedSequence(np.array(values), np.array(weights)),
                boundaries=np.concatenate([[first_start], bounds])))
        return blocks
    finally:
        if owned:
            stream.close()


def peaks_from_segments(seg, boundaries=None) -> list[tuple[float, float]]:
    """Half-open (start, end) intervals of the peak segments.

    ``seg`` must carry alternating background/peak state labels (an
    up-down fit); peaks are the even-numbered segments. ``boundaries``
    maps encoded points back to input positions (see
    :class:`SequenceBlock`); without it, encoded indices are used.
    """
    states = seg.states
    if states is None or any(
            s != ("peak" if i % 2 else "background")
            for i, s in enumerate(states)):
        raise ValueError(
            "peak extraction needs an up-down segmentation "
            "(alternating background/peak states)")
    if boundaries is None:
        boundaries = np.arange(int(seg.ends[-1]) + 1, dtype=float)
    peaks = []
    prev_end = 0
    for i, end in enumerate(seg.ends):
        if states[i] == "peak":
            peaks.append((float(boundaries[prev_end]), float(boundaries[end])))
        prev_end = end
    return peaks


# --------------------------------------------------------------------------
# solving and reporting


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _segment_rows(seg, boundaries) -> list[str]:
    rows = []
    prev_end = 0
    states = seg.states or ("-",) * len(seg.means)
    for i, end in enumerate(seg.ends):
        rows.append(f"{_fmt(boundaries[prev_end])}\t{_fmt(boundaries[end])}"
                    f"\t{_fmt(seg.means[i])}\t{states[i]}")
        prev_end = end
    return rows


def _reported_ks(schedule_name: str, K: int) -> list[int]:
    if schedule_name == "updown":
        return list(range(1, K + 1, 2))
    return list(range(1, K + 1))


@dataclass
class _BlockReport:
    block: SequenceBlock
    lines: list[str]
    summary: dict
    headline: object  # Segmentation or PenalizedSolution for plots
    result: object  # BudgetResult or PenalizedSolution for --verify


def _solve_block(block: SequenceBlock, args, loss, schedule, graph):
    t0 = time.perf_counter()
    lines = []
    if schedule is not None:
        res = solve_budget(block.data, args.segments, schedule, loss)
        wall = time.perf_counter() - t0
        ks = _reported_ks(schedule.name, args.segments)
        for k in ks:
            lines.append(f"# k={k}")
            lines.extend(_segment_rows(res[k], block.boundaries))
        headline = res[ks[-1]]
        summary = {"k_or_penalty": args.segments, "stats": res.stats,
                   "sol": headline}
        result = res
    else:
        sol = solve_penalized(block.data, graph, loss)
        wall = time.perf_counter() - t0
        lines.extend(_segment_rows(sol, block.boundaries))
        headline = sol
        summary = {"k_or_penalty": args.penalty, "stats": sol.stats,
                   "sol": sol}
        result = sol
    summary = {
        "n": block.data.n,
        "k_or_penalty": summary["k_or_penalty"],
        "total_cost": summary["sol"].total_cost,
        "change_count": summary["sol"].change_count,
        "intervals_median": summary["stats"].median,
        "intervals_max": summary["stats"].max_count,
        "wall_seconds": wall,
    }
    if block.name is not None:
        summary = {"sequence": block.name, **summary}
    return _BlockReport(block, lines, summary, headline, result)


def _verify_block(report: _BlockReport, args, loss, schedule, graph) -> str | None:
    """Cross-check a solved block against the brute-force oracles."""
    data = report.block.data
    if data.n > MAX_ENUM_POINTS:
        return (f"--verify handles at most {MAX_ENUM_POINTS} encoded points, "
                f"got {data.n}")
    def differs(a, b, tol):
        return abs(a - b) > tol * max(1.0, abs(a), abs(b))
    if schedule is not None:
        res: BudgetResult = report.result
        K = min(args.segments, data.n)
        if schedule.name == "unconstrained":
            exact = dpa_unconstrained(data, K, loss)
            for k in range(1, K + 1):
                if differs(res[k].total_cost, exact[k - 1], 1e-9):
                    return (f"k={k}: solver {res[k].total_cost!r} != "
                            f"reference {exact[k - 1]!r}")
        else:
            for k in range(1, K + 1):
                fit = enumerate_constrained(data, k, schedule, loss)
                if differs(res[k].total_cost, fit.cost, 1e-5):
                    return (f"k={k}: solver {res[k].total_cost!r} != "
                            f"reference {fit.cost!r}")
    else:
        fit = enumerate_penalized(data, graph, loss)
        if differs(report.result.total_cost, fit.cost, 1e-5):
            return (f"solver {report.result.total_cost!r} != "
                    f"reference {fit.cost!r}")
    return None


def _bench_rows(args, loss, schedule):
    from .plots import bench_figure

    sizes = args.bench_sizes or _BENCH_SIZES
    rng = np.random.default_rng(args.seed)
    rows = []
    out = []
    for n in sizes:
        values = _planted_updown(n, rng)
        data = WeightedSequence.from_values(values)
        K = min(args.segments, data.n)
        t0 = time.perf_counter()
        res = solve_budget(data, K, schedule, loss)
        wall = time.perf_counter() - t0
        rows.append((n, wall, res.stats.median))
        out.append(f"{n}\t{_fmt(wall)}\t{_fmt(res.stats.median)}")
    if args.plot:
        bench_figure(rows, f"{args.plot}_bench.png")
    return out


def _planted_updown(n, rng):
    """Poisson counts with eight alternating up/down mean changes."""
    bounds = np.linspace(0, n, 10).astype(int)
    rates = [(8.0 if i % 2 else 1.5) for i in range(9)]
    out = np.empty(n)
    for i in range(9):
        out[bounds[i]:bounds[i + 1]] = rng.poisson(
            rates[i], bounds[i + 1] - bounds[i])
    return out


def _gapped(graph: StateGraph, gap: float) -> StateGraph:
    edges = []
    for e in graph.edges:
        if e.constraint.kind is ChangeKind.ANY_CHANGE:
            edges.append(e)
        else:
            edges.append(GraphEdge(e.source, e.target, e.penalty,
                                   ChangeConstraint(e.constraint.kind, gap)))
    return StateGraph(graph.state_names, tuple(edges), graph.start_states,
                      graph.end_states, graph.name)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fpseg",
        description="Exact constrained changepoint detection for weighted "
                    "sequence data.")
    p.add_argument("input", nargs="?", default="-",
                   help="input file, or - for stdin (default)")
    p.add_argument("--format", choices=("tsv", "bedgraph"), default="tsv",
                   help="input format (default tsv: value per line, "
                        "optional weight column)")
    p.add_argument("--loss", choices=("square", "poisson"), default="square")
    p.add_argument("--model", choices=_MODELS,
                   help="built-in model (alternative to --graph)")
    p.add_argument("--graph", metavar="FILE",
                   help="state-graph file: 'source target penalty "
                        "{any|up|down} [gap]' lines plus 'start:'/'end:' "
                        "headers; file penalties are scaled by --penalty")
    p.add_argument("--segments", type=int, metavar="K",
                   help="largest segment count (budget mode)")
    p.add_argument("--penalty", type=float, metavar="LAMBDA",
                   help="cost per change (penalized mode)")
    p.add_argument("--gap", type=float, default=0.0, metavar="DELTA",
                   help="minimum |mean change| for up/down constraints")
    p.add_argument("--out", metavar="FILE",
                   help="write segments here instead of stdout")
    p.add_argument("--stats", action="store_true",
                   help="single-line JSON summary per sequence on stderr")
    p.add_argument("--verify", action="store_true",
                   help="cross-check against brute-force reference "
                        "solvers (small inputs only)")
    p.add_argument("--bench", action="store_true",
                   help="ignore input; time synthetic solves and print "
                        "'n wall_seconds intervals_median' rows")
    p.add_argument("--bench-sizes", type=lambda s: [int(x) for x in s.split(",")],
                   metavar="N1,N2,...", help="sizes for --bench "
                   f"(default {','.join(str(s) for s in _BENCH_SIZES)})")
    p.add_argument("--seed", type=int, default=1,
                   help="RNG seed for --bench data (default 1)")
    p.add_argument("--plot", metavar="PREFIX",
                   help="render figures to PREFIX_*.png")
    return p


def _usage_error(parser, msg: str) -> int:
    print(f"fpseg: error: {msg}", file=sys.stderr)
    print(f"run '{parser.prog} --help' for usage", file=sys.stderr)
    return 2


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.gap < 0:
        return _usage_error(parser, "--gap must be nonnegative")
    if args.bench and args.penalty is not None:
        return _usage_error(parser, "--bench times budget solves and "
                                    "does not take --penalty")
    if args.graph is not None:
        if args.model is not None:
            return _usage_error(parser, "--model and --graph are exclusive")
        if args.segments is not None:
            return _usage_error(
                parser, "--graph models have no fixed per-change schedule; "
                        "use --penalty")
        if args.penalty is None:
            return _usage_error(
                parser, "--graph needs --penalty, which scales the file's "
                        "edge penalties (use --penalty 1 to take them as-is)")
        if args.penalty < 0:
            return _usage_error(parser, "--penalty must be nonnegative")
        if args.gap != 0.0:
            return _usage_error(
                parser, "--gap does not apply to --graph (set per-edge gaps "
                        "in the file)")
    else:
        if args.model is None:
            if args.bench:
                args.model = "updown"
            else:
                return _usage_error(parser, "pick a --model or give a --graph")
        if (args.segments is None) == (args.penalty is None) and not args.bench:
            return _usage_error(
                parser, "exactly one of --segments or --penalty is required")
        if args.segments is not None and args.segments < 1:
            return _usage_error(parser, "--segments must be at least 1")
        if args.penalty is not None and args.penalty < 0:
            return _usage_error(parser, "--penalty must be nonnegative")
        if args.model == "unimodal" and args.segments is not None:
            return _usage_error(
                parser, "the unimodal model has no fixed per-change "
                        "schedule; use --penalty")
        if args.model == "unconstrained" and args.gap != 0.0:
            return _usage_error(
                parser, "--gap needs a directed model (isotonic, updown "
                        "or unimodal)")

    loss = LossFamily.SQUARE if args.loss == "square" else LossFamily.POISSON

    schedule = None
    graph = None
    if args.graph is not None:
        try:
            with open(args.graph) as fh:
                graph = parse_graph_text(fh.read())
        except OSError as e:
            print(f"fpseg: cannot read graph file: {e}", file=sys.stderr)
            return 1
        except ValueError as e:
            print(f"fpseg: bad graph file: {e}", file=sys.stderr)
            return 1
        if args.penalty != 1.0:
            graph = StateGraph(
                graph.state_names,
                tuple(GraphEdge(e.source, e.target, e.penalty * args.penalty,
                                e.constraint) for e in graph.edges),
                graph.start_states, graph.end_states, graph.name)
    elif args.segments is not None or args.bench:
        if args.segments is None:
            args.segments = 19
        if args.model == "unconstrained":
            schedule = ConstraintSchedule.unconstrained()
        elif args.model == "isotonic":
            schedule = ConstraintSchedule.nondecreasing(gap=args.gap)
        else:
            schedule = ConstraintSchedule.up_down(gap=args.gap)
    else:
        n_pen = {"unconstrained": 1, "isotonic": 1, "updown": 2,
                 "unimodal": 4}[args.model]
        graph = preset_graph(args.model, [args.penalty] * n_pen)
        if args.gap != 0.0:
            graph = _gapped(graph, args.gap)

    if args.bench:
        if schedule is None:
            return _usage_error(parser, "--bench runs in budget mode "
                                        "(--segments, or defaults)")
        try:
            rows = _bench_rows(args, loss, schedule)
        except InfeasibleError as e:
            print(f"fpseg: infeasible: {e}", file=sys.stderr)
            return 3
        print("\n".join(rows))
        return 0

    try:
        blocks = ingest(args.input, args.format)
    except OSError as e:
        print(f"fpseg: cannot read input: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"fpseg: bad input: {e}", file=sys.stderr)
        return 1

    workers = os.environ.get("FPSEG_THREADS", "")
    try:
        max_workers = max(1, int(workers)) if workers else (os.cpu_count() or 1)
    except ValueError:
        return _usage_error(parser, f"FPSEG_THREADS={workers!r} is not a number")
    max_workers = min(max_workers, len(blocks))

    try:
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                reports = list(pool.map(
                    lambda b: _solve_block(b, args, loss, schedule, graph),
                    blocks))
        else:
            reports = [_solve_block(b, args, loss, schedule, graph)
                       for b in blocks]
    except InfeasibleError as e:
        print(f"fpseg: infeasible: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"fpseg: bad input: {e}", file=sys.stderr)
        return 1

    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for report in reports:
            if report.block.name is not None:
                print(f"# sequence={report.block.name}", file=out)
            for line in report.lines:
                print(line, file=out)
    finally:
        if args.out:
            out.close()

    if args.stats:
        for report in reports:
            print(json.dumps(report.summary), file=sys.stderr)

    if args.plot:
        from .plots import segmentation_figure
        for i, report in enumerate(reports):
            suffix = report.block.name or (str(i) if len(reports) > 1 else "")
            path = f"{args.plot}_segments{'_' + suffix if suffix else ''}.png"
            segmentation_figure(report.block, report.headline, path)

    if args.verify:
        for report in reports:
            problem = _verify_block(report, args, loss, schedule, graph)
            if problem is not None:
                where = f" ({report.block.name})" if report.block.name else ""
                print(f"fpseg: verification failed{where}: {problem}",
                      file=sys.stderr)
                return 1
        print("fpseg: verified against brute-force reference", file=sys.stderr)

    return 0


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
