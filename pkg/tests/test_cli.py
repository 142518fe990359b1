import json
import subprocess
import sys
from pathlib import Path

from swgossip.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, estimate_report, main
from swgossip.graphlib import read_edgelist

FIXTURES = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_defaults(capsys):
    code, out, _ = run(capsys, "estimate")
    assert code == EXIT_OK
    lines = {line[:30].strip(): line[30:].strip() for line in out.splitlines()[:10]}
    assert lines["filter bits (m)"] == "143776400"
    assert lines["hash functions (k)"] == "10"
    assert lines["filter memory per node"].startswith("17.97 MB")
    assert lines["traffic per node"].startswith("21.6 KB/s")


def test_estimate_fixed_entry_size(capsys):
    code, out, _ = run(capsys, "estimate", "--bytes-per-entry", "2")
    assert code == EXIT_OK
    assert "24.0 KB/s (24000 B/s)" in out
    r = estimate_report(10**7, 1000, 0.001, 10, 1.2, 1.0)
    assert r.filter_megabytes <= 20


def test_estimate_degenerate_fp_warns(capsys):
    code, out, err = run(capsys, "estimate", "--fp", "1")
    assert code == EXIT_OK
    assert "warning" in err
    assert "filter bits (m)               8" in out


def test_estimate_rejects_bad_numbers(capsys):
    code, _, err = run(capsys, "estimate", "--nodes", "0")
    assert code in (EXIT_USAGE, EXIT_FAILURE) and err


def test_workload_curve_stdout_and_file(capsys, tmp_path):
    code, out, _ = run(capsys, "workload-curve", "--alpha", "1.0", "--coverage-grid", "0.01,0.1")
    assert code == EXIT_OK
    assert out.splitlines() == ["alpha,coverage,fraction_served", "1,0.01,0.680038", "1,0.1,0.840018"]
    dest = tmp_path / "curve.csv"
    assert main(["workload-curve", "--alpha", "1.0", "--coverage-grid", "0.01,0.1", "--out", str(dest)]) == 0
    assert dest.read_text() == out


def test_workload_curve_bad_grid(capsys):
    code, _, err = run(capsys, "workload-curve", "--coverage-grid", "0.1,abc")
    assert code == EXIT_USAGE and "error" in err


def test_analyze_trace_table(capsys, tmp_path):
    js = tmp_path / "r.json"
    code, out, _ = run(capsys, "analyze-trace", "--trace", str(FIXTURES / "micro_trace.csv"),
                       "--windows", "1d,7d,30d", "--samples", "5", "--json", str(js))
    assert code == EXIT_OK
    assert out == (FIXTURES / "micro_table.txt").read_text()
    rows = json.loads(js.read_text())
    assert [r["status"] for r in rows] == ["ok", "ok", "ok"]


def test_analyze_trace_empty(capsys, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# nothing here\n")
    code, out, _ = run(capsys, "analyze-trace", "--trace", str(empty))
    assert code == EXIT_OK
    assert "empty trace" in out


def test_analyze_trace_errors(capsys, tmp_path):
    code, _, err = run(capsys, "analyze-trace", "--trace", str(tmp_path / "missing.csv"))
    assert code == EXIT_USAGE and "cannot read trace" in err
    code, _, _ = run(capsys, "analyze-trace", "--trace", str(FIXTURES / "micro_trace.csv"), "--windows", "3w")
    assert code == EXIT_USAGE


def test_analyze_trace_warns_on_bad_lines(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("a,f,0\nb,f,1\nbroken\nc,f,2\n")
    code, _, err = run(capsys, "analyze-trace", "--trace", str(trace), "--windows", "1d", "--samples", "2")
    assert code == EXIT_OK
    assert ":3:" in err


def test_build_overlay_writes_both_files(capsys, tmp_path):
    out = tmp_path / "g.edges"
    code, msg, _ = run(capsys, "build-overlay", "--clusters", "4", "--size", "6", "--degree", "2",
                       "--wiring", "gateway", "--param", "1", "--gateways", "2", "--out", str(out))
    assert code == EXIT_OK and "24 nodes" in msg
    with open(out) as fh:
        g = read_edgelist(fh)
    assert g.n_nodes() == 24
    rows = (tmp_path / "g.edges.clusters.csv").read_text().splitlines()
    assert rows[0] == "node_id,cluster_id,gateway" and len(rows) == 25
    gateways = {r.split(",")[0] for r in rows[1:] if r.endswith(",1")}
    assert gateways == {"0", "1", "6", "7", "12", "13", "18", "19"}


def test_build_overlay_invalid_spec(capsys, tmp_path):
    code, _, err = run(capsys, "build-overlay", "--clusters", "2", "--size", "3", "--degree", "5",
                       "--out", str(tmp_path / "x"))
    assert code == EXIT_USAGE and err


def test_simulate_example_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    rounds = tmp_path / "r.csv"
    cfg = str(FIXTURES / "example.ini")
    assert main(["simulate", "--config", cfg, "--out", str(a), "--per-round-csv", str(rounds)]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    metrics = json.loads(a.read_text())
    assert metrics["false_negative_lookups"] == 0
    assert metrics["requests_total"] == 40 * 60
    assert len(rounds.read_text().splitlines()) == 61
    assert "served_local=" in capsys.readouterr().out


def test_simulate_bad_config_names_key(capsys, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text((FIXTURES / "example.ini").read_text().replace("fanout = 3", "fanout = lots"))
    code, _, err = run(capsys, "simulate", "--config", str(bad), "--out", str(tmp_path / "o.json"))
    assert code == EXIT_USAGE
    assert "gossip.fanout" in err
    code, _, err = run(capsys, "simulate", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o.json"))
    assert code == EXIT_USAGE


def test_usage_errors_exit_two(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    capsys.readouterr()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "swgossip", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("analyze-trace", "estimate", "workload-curve", "build-overlay", "simulate"):
        assert cmd in proc.stdout
