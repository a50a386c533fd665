"""Command-line contract tests: exit statuses, file formats, determinism,
config merging, and schema-validated summaries.

Runs use tiny workloads; the full-size experiments live in the acceptance
suite.
"""

import json
import os

import pytest

from mfstop.cli import main, validate_summary


def run_cli(args, tmp_path, name):
    out = tmp_path / name
    status = main(args + ["--out-dir", str(out), "--no-plot"])
    return status, out


# ---------------------------------------------------------------------------
# exit statuses
# ---------------------------------------------------------------------------

def test_ode_run_contract(tmp_path):
    status, out = run_cli(
        ["rd-ode", "--K", "1.8", "--beta", "0.5", "--lambda", "0.05", "--seed", "7"],
        tmp_path, "ode")
    assert status == 0
    lines = (out / "ode.csv").read_text().splitlines()
    assert lines[0] == "mu,v_lambda,phi_lambda,phi_closed,v_closed"
    assert len(lines) == 1 + 2001
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("rd-ode", summary)
    assert summary["rows"] == 2001


def test_negative_lambda_is_usage_error(tmp_path, capsys):
    status, _ = run_cli(["rd-solve", "--lambda", "-1"], tmp_path, "bad")
    assert status == 1
    assert "lambda must be positive" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    assert main(["definitely-not-a-command"]) == 1


def test_nonconvergence_exit_status(tmp_path):
    status, out = run_cli(
        ["rd-solve", "--grid-points", "101", "--max-iter", "1",
         "--residual-tol", "1e-12"],
        tmp_path, "stall")
    assert status == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is False


def test_rate_summary_has_slope(tmp_path):
    status, out = run_cli(
        ["nagent-rate", "--p", "0.5", "--Ns", "100,1000,10000,100000",
         "--samples", "500", "--seed", "3"],
        tmp_path, "rate")
    assert status == 0
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("nagent-rate", summary)
    assert -0.7 < summary["slope"] < -0.3
    lines = (out / "rate.csv").read_text().splitlines()
    assert lines[0] == "N,estimate,stderr"
    assert len(lines) == 5


# ---------------------------------------------------------------------------
# reproducibility and formats
# ---------------------------------------------------------------------------

def test_reruns_are_byte_identical(tmp_path):
    args = ["rd-solve", "--grid-points", "201", "--lambda", "0.2", "--seed", "11"]
    _, out1 = run_cli(args, tmp_path, "a")
    _, out2 = run_cli(args, tmp_path, "b")
    assert (out1 / "policy.csv").read_bytes() == (out2 / "policy.csv").read_bytes()
    assert (out1 / "residuals.csv").read_bytes() == (out2 / "residuals.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_csv_uses_lf_and_headers(tmp_path):
    _, out = run_cli(["etf-simulate", "--horizon", "10", "--paths", "3",
                      "--seed", "1"], tmp_path, "sim")
    raw = (out / "trajectories.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.startswith(b"path,t,price,ret,sq_ret\n")
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("etf-simulate", summary)


def test_manifest_echoes_resolved_config(tmp_path):
    _, out = run_cli(["rd-converge", "--lambdas", "0.2,0.1", "--seed", "5",
                      "--step", "0.002"], tmp_path, "conv")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "rd-converge"
    assert manifest["config"]["lambdas"] == "0.2,0.1"
    assert manifest["config"]["seed"] == 5
    assert manifest["config"]["exclusion"] == 0.05  # default filled in
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("rd-converge", summary)


def test_no_plot_skips_figures(tmp_path):
    _, out = run_cli(["rd-ode", "--step", "0.002"], tmp_path, "noplot")
    assert not (out / "ode.png").exists()


def test_plot_writes_figure(tmp_path):
    out = tmp_path / "withplot"
    status = main(["rd-ode", "--step", "0.002", "--out-dir", str(out)])
    assert status == 0
    assert (out / "ode.png").exists()


# ---------------------------------------------------------------------------
# configuration sources
# ---------------------------------------------------------------------------

def test_config_file_merges_and_flags_win(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lam": 0.3, "grid_points": 151, "seed": 4}))
    out = tmp_path / "merged"
    status = main(["rd-solve", "--config", str(cfg), "--lambda", "0.2",
                   "--out-dir", str(out), "--no-plot"])
    assert status == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["lam"] == 0.2          # flag wins
    assert manifest["config"]["grid_points"] == 151  # config applies
    assert manifest["config"]["seed"] == 4


def test_unknown_config_keys_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus_knob": 1}))
    status = main(["rd-solve", "--config", str(cfg), "--no-plot",
                   "--out-dir", str(tmp_path / "x")])
    assert status == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("MFSTOP_SEED", "99")
    _, out = run_cli(["etf-simulate", "--horizon", "5", "--paths", "2"],
                     tmp_path, "envseed")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 99


def test_thread_cap_flag(tmp_path, monkeypatch):
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    status, _ = run_cli(["etf-simulate", "--horizon", "5", "--paths", "2",
                         "--threads", "2", "--seed", "1"], tmp_path, "threads")
    assert status == 0
    assert os.environ.get("OMP_NUM_THREADS") == "2"
    status, _ = run_cli(["etf-simulate", "--threads", "0"], tmp_path, "badthreads")
    assert status == 1


# ---------------------------------------------------------------------------
# remaining commands, small sizes
# ---------------------------------------------------------------------------

def test_etf_train_small(tmp_path):
    status, out = run_cli(
        ["etf-train", "--outer-iters", "2", "--batch", "20", "--t-max", "30",
         "--seed", "0"],
        tmp_path, "etf")
    assert status == 0
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("etf-train", summary)
    lines = (out / "losses.csv").read_text().splitlines()
    assert lines[0] == "outer_iter,tdloss,celoss"
    assert len(lines) == 3
    policy_lines = (out / "policy.csv").read_text().splitlines()
    assert policy_lines[0] == "p,r,phi"
    assert len(policy_lines) == 1 + 101 * 41


def test_nagent_eps_small(tmp_path):
    status, out = run_cli(
        ["nagent-eps", "--Ns", "50,200", "--paths", "2000", "--seed", "2"],
        tmp_path, "eps")
    assert status == 0
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("nagent-eps", summary)
    assert len(summary["gaps"]) == 2


def test_check_invariants_passes(tmp_path, capsys):
    status, out = run_cli(["check-invariants", "--seed", "0"], tmp_path, "inv")
    assert status == 0
    printed = capsys.readouterr().out
    assert "ok" in printed and "FAIL" not in printed
    summary = json.loads((out / "summary.json").read_text())
    validate_summary("check-invariants", summary)
    assert summary["all_passed"] is True


# ---------------------------------------------------------------------------
# schema validator itself
# ---------------------------------------------------------------------------

def test_validator_rejects_missing_keys():
    with pytest.raises(ValueError):
        validate_summary("nagent-rate", {"slope": -0.5})


def test_validator_rejects_wrong_types():
    good = {"slope": -0.5, "half_width": 0.01, "gap": None,
            "ns": [10], "estimates": [0.1], "stderrs": [0.01]}
    validate_summary("nagent-rate", good)
    bad = dict(good, ns=[10.5])
    with pytest.raises(ValueError):
        validate_summary("nagent-rate", bad)
