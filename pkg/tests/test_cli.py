"""Command-line interface: parsing, solving, reporting, exit codes."""
import io
import json
import math

import numpy as np
import pytest

from fpseg.cli import ingest, main, peaks_from_segments, run
from fpseg.budget import solve_budget
from fpseg.models import ConstraintSchedule
from fpseg.piecewise import LossFamily
from fpseg.sequence import WeightedSequence

UPDOWN_ROWS = "1\n1\n5\n5\n1\n1\n6\n6\n1\n1\n"


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# ingest


def test_ingest_tsv_merges_repeats():
    blocks = ingest(io.StringIO(UPDOWN_ROWS))
    assert len(blocks) == 1
    block = blocks[0]
    assert block.name is None
    np.testing.assert_allclose(block.data.values, [1, 5, 1, 6, 1])
    np.testing.assert_allclose(block.data.weights, [2, 2, 2, 2, 2])
    np.testing.assert_allclose(block.boundaries, [0, 2, 4, 6, 8, 10])


def test_ingest_tsv_weight_column():
    blocks = ingest(io.StringIO("3\t2\n3\t1.5\n7\t1\n"))
    data = blocks[0].data
    np.testing.assert_allclose(data.values, [3, 7])
    np.testing.assert_allclose(data.weights, [3.5, 1.0])
    np.testing.assert_allclose(blocks[0].boundaries, [0, 3.5, 4.5])


def test_ingest_tsv_skips_comments_and_blanks():
    blocks = ingest(io.StringIO("# header\n\n2\n\n# mid\n4\n"))
    np.testing.assert_allclose(blocks[0].data.values, [2, 4])


def test_ingest_tsv_reports_line_numbers():
    with pytest.raises(ValueError, match="line 2"):
        ingest(io.StringIO("1\nfoo\n"))
    with pytest.raises(ValueError, match="line 3.*fields"):
        ingest(io.StringIO("1\n2\n3 4 5\n"))
    with pytest.raises(ValueError, match="line 1.*weight positive"):
        ingest(io.StringIO("1\t0\n"))
    with pytest.raises(ValueError, match="no data rows"):
        ingest(io.StringIO("# nothing\n"))
    with pytest.raises(ValueError, match="unknown input format"):
        ingest(io.StringIO("1\n"), fmt="nope")


def test_ingest_bedgraph_blocks_per_chromosome():
    text = ("track type=bedGraph\n"
            "chr1\t0\t10\t3\nchr1\t10\t12\t3\nchr2\t0\t5\t7\n")
    blocks = ingest(io.StringIO(text), fmt="bedgraph")
    assert [b.name for b in blocks] == ["chr1", "chr2"]
    np.testing.assert_allclose(blocks[0].data.values, [3])
    np.testing.assert_allclose(blocks[0].data.weights, [12])
    np.testing.assert_allclose(blocks[0].boundaries, [0, 12])
    np.testing.assert_allclose(blocks[1].boundaries, [0, 5])


def test_ingest_bedgraph_keeps_offset_coordinates():
    blocks = ingest(io.StringIO("chr1\t100\t110\t2\nchr1\t110\t130\t5\n"),
                    fmt="bedgraph")
    np.testing.assert_allclose(blocks[0].boundaries, [100, 110, 130])


def test_ingest_bedgraph_rejects_bad_rows():
    with pytest.raises(ValueError, match="line 1.*4 fields"):
        ingest(io.StringIO("chr1\t0\t10\n"), fmt="bedgraph")
    with pytest.raises(ValueError, match="line 2.*empty interval"):
        ingest(io.StringIO("chr1\t0\t10\t3\nchr1\t10\t10\t4\n"),
               fmt="bedgraph")
    with pytest.raises(ValueError, match="negative count"):
        ingest(io.StringIO("chr1\t0\t10\t-3\n"), fmt="bedgraph")
    with pytest.raises(ValueError, match="not contiguous"):
        ingest(io.StringIO("chr1\t0\t10\t3\nchr2\t0\t5\t7\nchr1\t10\t20\t3\n"),
               fmt="bedgraph")
    with pytest.raises(ValueError, match="overlaps"):
        ingest(io.StringIO("chr1\t0\t10\t3\nchr1\t5\t15\t4\n"),
               fmt="bedgraph")


def test_ingest_from_path(tmp_path):
    path = _write(tmp_path, "d.tsv", "2\n1\n0\n4\n")
    blocks = ingest(path)
    np.testing.assert_allclose(blocks[0].data.values, [2, 1, 0, 4])


# ---------------------------------------------------------------------------
# peak extraction


def _updown_fit(K):
    data = WeightedSequence.from_values([1, 5, 1, 6, 1], [2, 2, 2, 2, 2])
    return solve_budget(data, K, ConstraintSchedule.up_down(),
                        LossFamily.SQUARE)


def test_peaks_from_single_segment_is_empty():
    res = _updown_fit(1)
    assert peaks_from_segments(res[1]) == []


def test_peaks_from_five_segments():
    res = _updown_fit(5)
    peaks = peaks_from_segments(res[5])
    assert peaks == [(1.0, 2.0), (3.0, 4.0)]  # encoded-index coordinates
    boundaries = np.array([0.0, 2, 4, 6, 8, 10])
    assert peaks_from_segments(res[5], boundaries) == [(2.0, 4.0), (6.0, 8.0)]


def test_peaks_require_alternating_states():
    data = WeightedSequence.from_values([2, 1, 0, 4])
    res = solve_budget(data, 2, ConstraintSchedule.nondecreasing(),
                       LossFamily.SQUARE)
    with pytest.raises(ValueError, match="alternating"):
        peaks_from_segments(res[2])


# ---------------------------------------------------------------------------
# exit codes


@pytest.mark.parametrize("argv", [
    ["-"],                                       # no model
    ["--model", "updown"],                       # neither K nor penalty
    ["--model", "updown", "--segments", "3", "--penalty", "1"],
    ["--model", "updown", "--segments", "0"],
    ["--model", "updown", "--penalty", "-1"],
    ["--model", "updown", "--segments", "3", "--gap", "-2"],
    ["--model", "unimodal", "--segments", "3"],
    ["--model", "unconstrained", "--segments", "3", "--gap", "1"],
    ["--model", "updown", "--bench", "--penalty", "1"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv) == 2
    err = capsys.readouterr().err
    assert "fpseg: error:" in err


def test_graph_mode_usage_errors(tmp_path, capsys):
    graph = _write(tmp_path, "g.txt",
                   "a b 1.0 up\nb a 1.0 down\nstart: a\nend: a\n")
    data = _write(tmp_path, "d.tsv", "1\n5\n1\n")
    assert run([data, "--graph", graph, "--model", "updown",
                "--penalty", "1"]) == 2
    assert run([data, "--graph", graph, "--segments", "3"]) == 2
    assert run([data, "--graph", graph]) == 2  # --penalty required
    err = capsys.readouterr().err
    assert "scales the file's edge penalties" in err
    assert run([data, "--graph", graph, "--penalty", "1", "--gap", "1"]) == 2


def test_missing_input_exits_1(tmp_path, capsys):
    assert run([str(tmp_path / "absent.tsv"), "--model", "updown",
                "--segments", "3"]) == 1
    assert "cannot read input" in capsys.readouterr().err


def test_malformed_input_exits_1(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "1\nbroken\n")
    assert run([data, "--model", "updown", "--segments", "1"]) == 1
    assert "bad input: line 2" in capsys.readouterr().err


def test_bad_graph_file_exits_1(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "1\n5\n1\n")
    assert run([data, "--graph", str(tmp_path / "absent.graph"),
                "--penalty", "1"]) == 1
    graph = _write(tmp_path, "g.txt", "a b 1.0 sideways\nstart: a\nend: a\n")
    assert run([data, "--graph", graph, "--penalty", "1"]) == 1
    assert "bad graph file" in capsys.readouterr().err


def test_infeasible_budget_exits_3(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "1\n5\n")
    assert run([data, "--model", "updown", "--segments", "7"]) == 3
    assert "infeasible" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# budget-mode reports


def test_updown_budget_report(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", UPDOWN_ROWS)
    assert run([data, "--model", "updown", "--segments", "5",
                "--stats"]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    # odd segment counts only, each introduced by a header
    headers = [ln for ln in lines if ln.startswith("# k=")]
    assert headers == ["# k=1", "# k=3", "# k=5"]
    body = [ln.split("\t") for ln in lines if not ln.startswith("#")]
    assert len(body) == 1 + 3 + 5
    last = body[-5:]
    assert [row[3] for row in last] == ["background", "peak", "background",
                                        "peak", "background"]
    # half-open [start, end) in input row coordinates
    assert [float(r[0]) for r in last] == [0.0, 2.0, 4.0, 6.0, 8.0]
    assert [float(r[1]) for r in last] == [2.0, 4.0, 6.0, 8.0, 10.0]
    np.testing.assert_allclose([float(r[2]) for r in last], [1, 5, 1, 6, 1])

    summary = json.loads(captured.err.strip())
    assert list(summary) == ["n", "k_or_penalty", "total_cost",
                             "change_count", "intervals_median",
                             "intervals_max", "wall_seconds"]
    blocks = ingest(io.StringIO(UPDOWN_ROWS))
    res = solve_budget(blocks[0].data, 5, ConstraintSchedule.up_down(),
                       LossFamily.SQUARE)
    assert summary["n"] == 5
    assert summary["k_or_penalty"] == 5
    assert math.isclose(summary["total_cost"], res[5].total_cost)
    assert summary["change_count"] == 4
    assert summary["intervals_median"] == res.stats.median
    assert summary["intervals_max"] == res.stats.max_count
    assert summary["wall_seconds"] >= 0


def test_isotonic_budget_report_unlabeled_states(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "2\n1\n0\n4\n")
    assert run([data, "--model", "isotonic", "--segments", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# k=1"
    rows = [ln.split("\t") for ln in lines if not ln.startswith("#")]
    assert all(row[3] == "-" for row in rows)
    k2 = rows[-2:]
    assert [float(r[2]) for r in k2] == [1.0, 4.0]


def test_out_writes_file_instead_of_stdout(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "2\n1\n0\n4\n")
    dest = tmp_path / "segments.tsv"
    assert run([data, "--model", "isotonic", "--segments", "2",
                "--out", str(dest)]) == 0
    assert capsys.readouterr().out == ""
    assert dest.read_text().startswith("# k=1\n")


# ---------------------------------------------------------------------------
# penalized-mode reports


def test_penalized_report_single_block(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "2\n1\n0\n4\n")
    assert run([data, "--model", "isotonic", "--penalty", "1",
                "--stats"]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert not any(ln.startswith("#") for ln in lines)
    assert len(lines) == 2
    np.testing.assert_allclose([float(ln.split("\t")[2]) for ln in lines],
                               [1.0, 4.0])
    summary = json.loads(captured.err)
    assert summary["k_or_penalty"] == 1.0
    assert math.isclose(summary["total_cost"], 3.0)


def test_graph_file_penalty_scaling(tmp_path, capsys):
    graph = _write(tmp_path, "peak.graph",
                   "# two-state peak model\n"
                   "background peak 1.0 up\n"
                   "peak background 1.0 down\n"
                   "start: background\nend: background\n")
    data = _write(tmp_path, "d.tsv", "1\n5\n1\n")
    assert run([data, "--graph", graph, "--penalty", "0.1", "--loss",
                "poisson", "--stats"]) == 0
    captured = capsys.readouterr()
    rows = [ln.split("\t") for ln in captured.out.splitlines()]
    assert [r[3] for r in rows] == ["background", "peak", "background"]
    want = 7 - 5 * math.log(5) + 0.2  # file penalties 1.0 scaled by 0.1
    assert math.isclose(json.loads(captured.err)["total_cost"], want,
                        rel_tol=1e-12)


def test_bedgraph_multiblock_report(tmp_path, capsys):
    data = _write(tmp_path, "d.bedgraph",
                  "chr1\t0\t10\t3\nchr1\t10\t12\t5\nchr2\t0\t5\t7\n")
    assert run([data, "--format", "bedgraph", "--model", "unconstrained",
                "--penalty", "0.5", "--stats"]) == 0
    captured = capsys.readouterr()
    out = captured.out.splitlines()
    assert "# sequence=chr1" in out and "# sequence=chr2" in out
    summaries = [json.loads(ln) for ln in captured.err.splitlines()]
    assert [s["sequence"] for s in summaries] == ["chr1", "chr2"]
    # chr2 block is a single flat interval in genomic coordinates
    i = out.index("# sequence=chr2")
    start, end, mean, state = out[i + 1].split("\t")
    assert (float(start), float(end), float(mean)) == (0.0, 5.0, 7.0)
    assert state == "s0"  # the single state of the unconstrained graph


def test_threads_env_controls_pool(tmp_path, capsys, monkeypatch):
    data = _write(tmp_path, "d.bedgraph",
                  "chr1\t0\t10\t3\nchr1\t10\t12\t5\nchr2\t0\t5\t7\n")
    monkeypatch.setenv("FPSEG_THREADS", "2")
    assert run([data, "--format", "bedgraph", "--model", "unconstrained",
                "--penalty", "0.5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out.count("# sequence=chr1") == 1
    assert out.count("# sequence=chr2") == 1
    monkeypatch.setenv("FPSEG_THREADS", "many")
    assert run([data, "--format", "bedgraph", "--model", "unconstrained",
                "--penalty", "0.5"]) == 2


# ---------------------------------------------------------------------------
# verification, benchmarking, figures


def test_verify_small_input(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "1\n5\n1\n6\n1\n")
    assert run([data, "--model", "updown", "--segments", "3", "--loss",
                "poisson", "--verify"]) == 0
    assert "verified against brute-force" in capsys.readouterr().err


def test_verify_penalized(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", "2\n1\n0\n4\n")
    assert run([data, "--model", "isotonic", "--penalty", "1",
                "--verify"]) == 0
    assert "verified" in capsys.readouterr().err


def test_bench_rows(tmp_path, capsys):
    assert run(["--bench", "--bench-sizes", "40,80", "--segments", "3",
                "--seed", "5"]) == 0
    rows = [ln.split("\t") for ln in capsys.readouterr().out.splitlines()]
    assert [int(r[0]) for r in rows] == [40, 80]
    for _, wall, med in rows:
        assert float(wall) > 0
        assert float(med) >= 1


def test_plot_files_created(tmp_path, capsys):
    data = _write(tmp_path, "d.tsv", UPDOWN_ROWS)
    prefix = str(tmp_path / "fig")
    assert run([data, "--model", "updown", "--segments", "5",
                "--plot", prefix]) == 0
    assert (tmp_path / "fig_segments.png").stat().st_size > 0
    assert run(["--bench", "--bench-sizes", "40", "--segments", "3",
                "--plot", prefix]) == 0
    assert (tmp_path / "fig_bench.png").stat().st_size > 0
    capsys.readouterr()


def test_main_is_run():
    assert main(["--model", "updown"]) == 2
