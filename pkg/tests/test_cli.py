import json
import os
import subprocess
import sys

import numpy as np
import pytest

from freezethaw import cli
from freezethaw.bench import read_csv
from freezethaw.controller import OptState, Settings, observe, read_state, suggest, write_state

FAST_FLAGS = ["--n-mc", "100", "--mcmc-samples", "2", "--burn-in", "3", "--pool-size", "32"]


def run_cli(args, stdin=""):
    return subprocess.run([sys.executable, "-m", "freezethaw", *args], input=stdin,
                          capture_output=True, text=True, timeout=600)


def test_defaults():
    parser = cli.build_parser()
    a = parser.parse_args(["serve", "--bounds", "b.json"])
    assert (a.basket_old, a.basket_new, a.n_fant, a.epochs_per_decision) == (10, 3, 5, 1)
    k = parser.parse_args(["kernel-samples", "--out", "k.csv"])
    assert (k.alpha, k.beta, k.t_max) == (1.0, 0.5, 100)
    b = parser.parse_args(["bench", "--family", "branin-decay", "--out", "d"])
    assert b.n_seeds == 5 and b.budget == 300 and b.epochs_per_eval == 30


def test_bench_file_accounting_and_determinism(tmp_path):
    args = ["bench", "--family", "branin-decay", "--budget", "3", "--baseline",
            "--epochs-per-eval", "1", *FAST_FLAGS]
    for d in ("a", "b"):
        assert cli.main(args + ["--out", str(tmp_path / d)]) == 0
    files = sorted(os.listdir(tmp_path / "a"))
    assert len(files) == 11 and "summary.csv" in files
    assert sum(f.startswith("trace_freeze-thaw") for f in files) == 5
    assert sum(f.startswith("trace_baseline-ei") for f in files) == 5
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    summary = read_csv(tmp_path / "a" / "summary.csv")
    assert {r["n_runs"] for r in summary} == {"5"}


def test_bench_unknown_family_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bench", "--family", "nope", "--out", str(tmp_path)])
    assert exc.value.code != 0


def _bounds(tmp_path):
    path = tmp_path / "bounds.json"
    path.write_text(json.dumps([{"name": "lr", "lower": -6, "upper": -1},
                                {"name": "mom", "lower": 0, "upper": 0.99}]))
    return str(path)


def test_serve_session_and_restart(tmp_path):
    bounds, state = _bounds(tmp_path), str(tmp_path / "state.json")
    flags = ["serve", "--bounds", bounds, "--state", state, *FAST_FLAGS]
    first = run_cli(flags, '{"op":"suggest"}\n{"op":"observe","config_id":0,"epoch":1,"loss":0.8}\n'
                           "oops\n")
    replies = [json.loads(l) for l in first.stdout.splitlines()]
    assert first.returncode == 0
    assert replies[0]["action"] == "start" and -6 <= replies[0]["x"][0] <= -1
    assert replies[1] == {"status": "ok", "message": ""} and replies[2]["status"] == "error"
    # A restarted server and an uninterrupted one agree on the next action.
    saved = read_state(state)
    again = run_cli(flags, '{"op":"suggest"}\n')
    expected = suggest(saved)
    got = json.loads(again.stdout.splitlines()[0])
    assert got["action"] == expected.kind and got["config_id"] == expected.config_id
    assert np.allclose(got["x"], expected.x, rtol=0, atol=0)


def test_serve_needs_bounds(tmp_path):
    assert cli.main(["serve", "--state", str(tmp_path / "missing.json")]) == 1


def test_kernel_samples_cli(tmp_path):
    out = tmp_path / "k.csv"
    assert cli.main(["kernel-samples", "--out", str(out), "--n-samples", "10000"]) == 0
    rows = read_csv(out)
    assert len(rows) == 101
    s1 = np.array([float(v) for k, v in rows[1].items() if k != "t"])
    assert np.mean(s1 ** 2) == pytest.approx(0.2, rel=0.03)
    for mode in ("basis", "curves"):
        assert cli.main(["kernel-samples", "--mode", mode, "--out", str(tmp_path / f"{mode}.csv")]) == 0


def test_inspect(tmp_path, capsys):
    path = tmp_path / "s.json"
    state = OptState.create([[0, 1]], ["x"], Settings(n_mc=50, mcmc_samples=2, burn_in=2, pool_size=16))
    write_state(state, path)
    assert cli.main(["inspect", "--state", str(path)]) == 0
    assert "curves: 0" in capsys.readouterr().out
    for _ in range(3):
        a = suggest(state)
        n = state.data.ids.index(a.config_id) if a.config_id in state.data.ids else None
        observe(state, a.config_id, 1 if n is None else len(state.data.curves[n]) + 1, 0.5)
    write_state(state, path)
    assert cli.main(["inspect", "--state", str(path)]) == 0
    out = capsys.readouterr().out
    assert "asymptote" in out and "round: 3" in out


def test_inspect_bad_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    assert cli.main(["inspect", "--state", str(path)]) == 1
