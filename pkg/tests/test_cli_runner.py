import json
import os

import numpy as np
import pytest

from fermikin import cli, runner
from fermikin.config import parse_config_text
from fermikin.fields_io import read_field_csv, write_field_csv
from fermikin.lattice import ScalarField, make_grid
from fermikin.micro import initial_occupation


def write_cfg(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_cli_graphs(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, f"[run]\nexperiment = graphs\nout = {out}\n[graphs]\nnbar_max = 3\n")
    assert cli.main(["graphs", "--config", cfg]) == 0
    mani = json.load(open(out / "manifest.json"))
    assert mani["status"] == "complete"
    assert mani["convergence"]["dichotomy"] == "PASS"
    lines = open(out / "graphs.csv").read().splitlines()
    # header + sum over nbar<=3 of (2nbar+1) splits x (2nbar-1)!!
    assert len(lines) == 1 + 3 * 1 + 5 * 3 + 7 * 15


def test_cli_validation_errors(tmp_path):
    cfg = write_cfg(tmp_path, "[run]\nexperiment = micro\n[grid]\nL = 15\n")
    assert cli.main(["micro", "--config", cfg]) == 1
    assert cli.main(["micro", "--config", str(tmp_path / "missing.ini")]) == 1
    # subcommand/config mismatch
    cfg2 = write_cfg(tmp_path, "[run]\nexperiment = graphs\n", name="g.ini")
    assert cli.main(["micro", "--config", cfg2]) == 1


def test_cli_compute_error_exit_code(tmp_path, monkeypatch):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, f"[run]\nexperiment = graphs\nout = {out}\n")

    def boom(config, tracker, manifest, threads):
        raise RuntimeError("synthetic failure")

    monkeypatch.setitem(runner._HANDLERS, "graphs", boom)
    assert cli.main(["graphs", "--config", cfg]) == 2
    mani = json.load(open(out / "manifest.json"))
    assert mani["status"] == "error"


def test_partial_outputs_removed_on_error(tmp_path, monkeypatch):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, f"[run]\nexperiment = graphs\nout = {out}\n")

    def write_then_fail(config, tracker, manifest, threads):
        tracker.write_text("partial.csv", "data\n")
        raise RuntimeError("mid-run crash")

    monkeypatch.setitem(runner._HANDLERS, "graphs", write_then_fail)
    assert cli.main(["graphs", "--config", cfg]) == 2
    assert not (out / "partial.csv").exists()
    assert (out / "manifest.json").exists()  # finalized with status error


def test_nonconvergence_exit_code(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(
        tmp_path,
        f"""
[run]
experiment = fixed-point
out = {out}
[grid]
L = 8
[physics]
lambda = 0.3
[fixed_point]
tol = 1e-14
max_iter = 2
bin_width = 0.4
""",
    )
    assert cli.main(["fixed-point", "--config", cfg]) == 3
    mani = json.load(open(out / "manifest.json"))
    assert mani["status"] == "non-converged"
    assert (out / "fixed_point.csv").exists()  # results written, flagged


def test_boltzmann_t0_roundtrip_bytes(tmp_path, rng):
    g = make_grid(6)
    f0 = ScalarField(g, rng.random(g.shape))
    input_csv = tmp_path / "input.csv"
    write_field_csv(str(input_csv), f0)
    out = tmp_path / "out"
    cfg = write_cfg(
        tmp_path,
        f"""
[run]
experiment = boltzmann
out = {out}
[grid]
L = 6
[physics]
T = 0.0
bin_width = 0.5
[initial]
input_csv = {input_csv}
""",
    )
    assert cli.main(["boltzmann", "--config", cfg]) == 0
    assert open(out / "f_T.csv", "rb").read() == open(input_csv, "rb").read()


def test_micro_cli_and_thread_determinism(tmp_path):
    base = """
[run]
experiment = micro
seed = 13
[grid]
L = 8
[physics]
eta = 0.5
lambda = 0.25
T = 0.1
dt = 0.05
samples = 10
"""
    out1, out2 = tmp_path / "t1", tmp_path / "t8"
    cfg = write_cfg(tmp_path, base)
    assert cli.main(["micro", "--config", cfg, "--out", str(out1), "--threads", "1"]) == 0
    assert cli.main(["micro", "--config", cfg, "--out", str(out2), "--threads", "8"]) == 0
    for name in ("mu_checkpoint_0.csv", "se_checkpoint_0.csv"):
        assert open(out1 / name, "rb").read() == open(out2 / name, "rb").read()
    mani = json.load(open(out1 / "manifest.json"))
    assert mani["convergence"]["converged"]
    assert mani["rounding"]["horizon"]["n_steps"] == 8  # 0.1/0.25/0.05


def test_stationarity_cli_control_row(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(
        tmp_path,
        f"""
[run]
experiment = stationarity-theorem2
seed = 3
out = {out}
[grid]
L = 8
[physics]
lambda_list = 0.2
delta = 1.0
T = 0.2
dt = 0.05
samples = 2
control = 0.2:0.45
""",
    )
    assert cli.main(["stationarity-theorem2", "--config", cfg]) == 0
    lines = open(out / "stationarity.csv").read().splitlines()
    assert lines[0].startswith("lambda,eta,")
    assert len(lines) == 3
    assert "in_regime" in lines[1] and "out_of_regime" in lines[2]
    # the out-of-regime row deviates more
    dev_reg = float(lines[1].split(",")[3])
    dev_ctrl = float(lines[2].split(",")[3])
    assert dev_ctrl > dev_reg


def test_compare_theorem1_cli_small(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(
        tmp_path,
        f"""
[run]
experiment = compare-theorem1
seed = 5
out = {out}
[grid]
L = 8
[physics]
eta_list = 0.7,0.5
T = 0.2
dt = 0.05
samples = 4
bin_width = 0.75
[compare]
pairs = one:one,cos1:cos1
""",
    )
    rc = cli.main(["compare-theorem1", "--config", cfg])
    assert rc == 0
    lines = open(out / "comparison.csv").read().splitlines()
    assert lines[0].split(",")[:3] == ["eta", "lambda", "n_steps"]
    assert "weak_se_one_one" in lines[0]
    assert len(lines) == 3
    mani = json.load(open(out / "manifest.json"))
    assert "rows" in mani["convergence"]


def test_diagnostics_cli(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(
        tmp_path,
        f"""
[run]
experiment = diagnostics
out = {out}
[grid]
L = 8
[physics]
lambda = 0.1
[diagnostics]
kind = crossing1
epsilons = 0.3,0.1
""",
    )
    assert cli.main(["diagnostics", "--config", cfg]) == 0
    mani = json.load(open(out / "manifest.json"))
    assert mani["convergence"]["fit"] == "C*log(1/eps)"
    lines = open(out / "diagnostics.csv").read().splitlines()
    assert lines[0] == "epsilon,sup_value"
    assert len(lines) == 3


def test_manifest_written_before_and_after(tmp_path, monkeypatch):
    out = tmp_path / "out"
    cfg_obj = parse_config_text(f"[run]\nexperiment = graphs\nout = {out}\n[graphs]\nnbar_max = 2\n")
    seen = {}

    orig = runner._run_graphs

    def spy(config, tracker, manifest, threads):
        seen["mid"] = json.load(open(out / "manifest.json"))
        return orig(config, tracker, manifest, threads)

    monkeypatch.setitem(runner._HANDLERS, "graphs", spy)
    assert runner.run(cfg_obj) == 0
    assert seen["mid"]["status"] == "running"
    final = json.load(open(out / "manifest.json"))
    assert final["status"] == "complete"
    assert final["outputs"] == ["graphs.csv"]
    assert final["wall_seconds"] >= 0
