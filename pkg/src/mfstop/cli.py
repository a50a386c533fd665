"""Command-line front end: every experiment as a reproducible subcommand.

Each run resolves its configuration (built-in defaults, then an optional
JSON config file, then explicit flags, which win), writes a manifest
echoing the resolved configuration, the numeric outputs as headered CSV,
a schema-validated JSON summary, and a rendered figure unless --no-plot.
Exit status 0 means success, 1 a usage or configuration error, and 2 a
reported non-convergence (solver residual or training divergence).

Determinism: identical configuration and seed reproduce byte-identical CSV
bodies; only the manifest carries a timestamp.  The seed falls back to the
MFSTOP_SEED environment variable when neither flag nor config provides it.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from importlib import resources

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2

SHARED_DEFAULTS = {"seed": None, "out_dir": None, "threads": None, "plot": True}


class CliError(Exception):
    """Configuration or usage problem; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


# ---------------------------------------------------------------------------
# small output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema() -> dict:
    with resources.files("mfstop").joinpath("summary_schema.json").open() as fh:
        return json.load(fh)


_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "boolean": bool,
    "null": type(None),
}


def _type_ok(kind, value) -> bool:
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, _TYPES[kind])


def _validate(spec, value, where):
    kinds = spec.get("type")
    if kinds is not None:
        kinds = kinds if isinstance(kinds, list) else [kinds]
        if not any(_type_ok(k, value) for k in kinds):
            raise ValueError(f"{where}: expected {kinds}, got {type(value).__name__}")
    if isinstance(value, dict):
        for key in spec.get("required", []):
            if key not in value:
                raise ValueError(f"{where}: missing required key {key!r}")
        for key, sub in spec.get("properties", {}).items():
            if key in value:
                _validate(sub, value[key], f"{where}.{key}")
    if isinstance(value, list) and "items" in spec:
        for idx, item in enumerate(value):
            _validate(spec["items"], item, f"{where}[{idx}]")


def validate_summary(command: str, data: dict):
    """Check a summary document against the shipped schema; raises on drift."""
    schema = load_schema()
    if command not in schema:
        raise ValueError(f"no schema for command {command!r}")
    _validate(schema[command], data, command)


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def _parse_float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(tok) for tok in str(text).split(",") if tok]


def _parse_int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(tok) for tok in str(text).split(",") if tok]


def resolve_config(defaults: dict, config_path, cli_overrides: dict) -> dict:
    merged = {**SHARED_DEFAULTS, **defaults}
    if config_path:
        try:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
        except OSError as err:
            raise CliError(f"cannot read config file: {err}")
        except json.JSONDecodeError as err:
            raise CliError(f"config file is not valid JSON: {err}")
        unknown = set(file_cfg) - set(merged)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    merged.update(cli_overrides)  # explicit flags win
    if merged["seed"] is None:
        merged["seed"] = int(os.environ.get("MFSTOP_SEED", "0"))
    merged["seed"] = int(merged["seed"])
    return merged


def _prepare_out_dir(cfg, command) -> str:
    out = cfg["out_dir"] or os.path.join("runs", command)
    os.makedirs(out, exist_ok=True)
    return out


def _apply_thread_cap(threads):
    if threads is None:
        return
    if threads < 1:
        raise CliError("threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=threads)
    except ImportError:
        pass


def _write_manifest(out, command, cfg):
    manifest = {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    write_json(os.path.join(out, "manifest.json"), manifest)


def _finish(out, command, summary) -> None:
    validate_summary(command, summary)
    write_json(os.path.join(out, "summary.json"), summary)


def _require_positive(value, name):
    if value <= 0:
        raise CliError(f"{name} must be positive")


def _benchmark_params(cfg):
    from .rd_example import RdParams
    try:
        return RdParams(cfg["k_amp"], cfg["beta"])
    except ValueError as err:
        raise CliError(str(err))


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def cmd_rd_solve(cfg, out):
    from .discount import DiscountSpec, RegularizedDiscount
    from .model import rd_model
    from .solver import (SolverConfig, epsilon_gap_unregularized,
                         regularized_equilibrium_gap, solve_fixed_point,
                         solve_with_continuation)

    _require_positive(cfg["lam"], "lambda")
    params = _benchmark_params(cfg)
    model = rd_model(grid_points=cfg["grid_points"])
    discount = DiscountSpec.quasi_hyperbolic(params.k_amp, params.beta)
    solver_discount = RegularizedDiscount(discount, cfg["lam"]) if cfg["discount_reg"] else discount
    solver_cfg = SolverConfig(lam=cfg["lam"], damping=cfg["damping"],
                              max_iter=cfg["max_iter"], residual_tol=cfg["residual_tol"])
    if cfg["continuation"]:
        res = solve_with_continuation(model, solver_discount, solver_cfg)
    else:
        res = solve_fixed_point(model, solver_discount, solver_cfg)

    write_csv(os.path.join(out, "policy.csv"), ["mu", "phi", "aux_value"],
              zip(model.grid, res.policy.values, res.aux_value.values))
    write_csv(os.path.join(out, "residuals.csv"),
              ["iter", "residual", "sup_policy_change"],
              [row for row in res.history if row[0] != "continuation"])
    summary = {
        "lambda": cfg["lam"],
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": bool(res.converged),
        "regularized_gap": regularized_equilibrium_gap(model, solver_discount,
                                                       cfg["lam"], res.policy),
        "epsilon_gap": epsilon_gap_unregularized(model, discount, res.policy),
        "grid_points": int(model.grid.size),
    }
    if cfg["plot"]:
        from . import figures
        figures.save_policy_value(os.path.join(out, "policy.png"), model.grid,
                                  res.policy.values, res.aux_value.values)
    return summary, EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_rd_ode(cfg, out):
    from .rd_example import (UnsupportedParameters, _bracket,
                             closed_form_continuation, closed_form_policy,
                             solve_regularized_ode)

    _require_positive(cfg["lam"], "lambda")
    _require_positive(cfg["step"], "step")
    params = _benchmark_params(cfg)
    v_grid, phi_grid = solve_regularized_ode(params, cfg["lam"], step=cfg["step"])
    try:
        phi_closed = closed_form_policy(params, v_grid.nodes)
        v_closed = closed_form_continuation(params, v_grid.nodes)
    except UnsupportedParameters as err:
        raise CliError(str(err))

    write_csv(os.path.join(out, "ode.csv"),
              ["mu", "v_lambda", "phi_lambda", "phi_closed", "v_closed"],
              zip(v_grid.nodes, v_grid.values, phi_grid.values, phi_closed, v_closed))
    summary = {
        "lambda": cfg["lam"],
        "v_at_zero": float(v_grid.values[0]),
        "rows": int(v_grid.nodes.size),
        "initial_residual": abs(float(_bracket(params, cfg["lam"], 0.0, v_grid.values[0]))),
    }
    if cfg["plot"]:
        from . import figures
        figures.save_ode_family(os.path.join(out, "ode.png"),
                                [(cfg["lam"], v_grid.values, phi_grid.values)],
                                phi_closed, v_closed, v_grid.nodes)
    return summary, EXIT_OK


def cmd_rd_converge(cfg, out):
    from .rd_example import convergence_table

    lams = _parse_float_list(cfg["lambdas"])
    if not lams or any(l <= 0 for l in lams):
        raise CliError("lambdas must be positive")
    _require_positive(cfg["exclusion"], "exclusion")
    params = _benchmark_params(cfg)
    rows = convergence_table(params, lams, exclusion=cfg["exclusion"], step=cfg["step"])

    write_csv(os.path.join(out, "converge.csv"),
              ["lambda", "phi_gap", "value_gap", "band_phi_gap", "v_at_zero"],
              [(r.lam, r.phi_gap, r.value_gap, r.band_phi_gap, r.v_at_zero) for r in rows])
    phi_gaps = [r.phi_gap for r in rows]
    value_gaps = [r.value_gap for r in rows]
    summary = {
        "lambdas": lams,
        "phi_gaps": phi_gaps,
        "value_gaps": value_gaps,
        "band_phi_gaps": [r.band_phi_gap for r in rows],
        "phi_gaps_nonincreasing": bool(all(a >= b for a, b in zip(phi_gaps, phi_gaps[1:]))),
        "value_gaps_nonincreasing": bool(all(a >= b for a, b in zip(value_gaps, value_gaps[1:]))),
    }
    if cfg["plot"]:
        from . import figures
        figures.save_convergence(os.path.join(out, "converge.png"),
                                 lams, phi_gaps, value_gaps)
    return summary, EXIT_OK


def cmd_nagent_rate(cfg, out):
    from .nagent import estimate_empirical_rate

    ns = _parse_int_list(cfg["ns"])
    if not (0.0 <= cfg["p"] <= 1.0):
        raise CliError("p must lie in [0, 1]")
    _require_positive(cfg["samples"], "samples")
    try:
        rate = estimate_empirical_rate(cfg["p"], ns, samples=cfg["samples"],
                                       seed=cfg["seed"])
    except ValueError as err:
        raise CliError(str(err))

    write_csv(os.path.join(out, "rate.csv"), ["N", "estimate", "stderr"],
              zip(rate.ns, rate.estimates, rate.stderrs))
    summary = {
        "slope": rate.slope,
        "half_width": 1.96 * rate.slope_stderr,
        "gap": None,
        "ns": list(rate.ns),
        "estimates": list(rate.estimates),
        "stderrs": list(rate.stderrs),
    }
    if cfg["plot"]:
        from . import figures
        figures.save_rate(os.path.join(out, "rate.png"), rate.ns,
                          rate.estimates, rate.slope)
    return summary, EXIT_OK


def cmd_nagent_eps(cfg, out):
    from .nagent import n_agent_epsilon_gap
    from .rd_example import solve_regularized_ode

    _require_positive(cfg["lam"], "lambda")
    _require_positive(cfg["paths"], "paths")
    if not (0.0 <= cfg["nu0"] <= 1.0):
        raise CliError("nu0 must lie in [0, 1]")
    params = _benchmark_params(cfg)
    ns = _parse_int_list(cfg["ns"])
    _, policy = solve_regularized_ode(params, cfg["lam"])
    gaps, stderrs = [], []
    for n in ns:
        res = n_agent_epsilon_gap(n, policy, cfg["nu0"], params,
                                  horizon=cfg["horizon"], paths=cfg["paths"],
                                  seed=cfg["seed"])
        gaps.append(res.gap)
        stderrs.append(res.stderr)

    write_csv(os.path.join(out, "eps.csv"), ["N", "estimate", "stderr"],
              zip(ns, gaps, stderrs))
    summary = {
        "slope": None,
        "half_width": None,
        "gap": gaps[-1],
        "ns": ns,
        "gaps": gaps,
        "stderrs": stderrs,
    }
    if cfg["plot"]:
        from . import figures
        figures.save_gap_bars(os.path.join(out, "eps.png"), ns, gaps, stderrs)
    return summary, EXIT_OK


def cmd_etf_train(cfg, out):
    from .etf_rl import (EtfParams, TrainingError, policy_iteration,
                         policy_region_report)

    _require_positive(cfg["lam"], "lambda")
    _require_positive(cfg["outer_iters"], "outer-iters")
    params = EtfParams(strike=cfg["strike"], beta=cfg["beta"],
                       k_amp=cfg["k_amp"], lam=cfg["lam"])
    try:
        res = policy_iteration(params, outer_iters=cfg["outer_iters"],
                               batch=cfg["batch"], t_max=cfg["t_max"],
                               lr=cfg["lr"], seed=cfg["seed"],
                               avg_weight=cfg["avg_weight"])
    except TrainingError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return None, EXIT_NONCONVERGED

    pg, rg = params.price_grid(), params.ret_grid()
    write_csv(os.path.join(out, "policy.csv"), ["p", "r", "phi"],
              ((pg[i], rg[j], res.policy[i, j])
               for i in range(pg.size) for j in range(rg.size)))
    totals = [td + ce for td, ce in zip(res.td_losses, res.ce_losses)]
    write_csv(os.path.join(out, "losses.csv"), ["outer_iter", "tdloss", "celoss"],
              zip(range(len(res.td_losses)), res.td_losses, res.ce_losses))
    report = policy_region_report(params, res.policy)
    j_neg = int(np.argmin(np.abs(rg + 0.02)))
    j_pos = int(np.argmin(np.abs(rg - 0.02)))
    summary = {
        "initial_loss": totals[0],
        "final_loss": totals[-1],
        "loss_ratio": totals[-1] / totals[0],
        "final_policy_change": res.policy_changes[-1],
        "stop_cells": report.stop_count,
        "hold_cells": report.hold_count,
        "mixed_cells": report.mixed_count,
        "mean_stop_at_neg_ret": float(res.policy[:, j_neg].mean()),
        "mean_stop_at_pos_ret": float(res.policy[:, j_pos].mean()),
    }
    if cfg["plot"]:
        from . import figures
        figures.save_etf_report(os.path.join(out, "policy.png"), params,
                                res.policy, res.td_losses, res.ce_losses)
    return summary, EXIT_OK


def cmd_etf_simulate(cfg, out):
    from .etf_rl import EtfParams, simulate_market

    _require_positive(cfg["horizon"], "horizon")
    _require_positive(cfg["paths"], "paths")
    params = EtfParams(strike=cfg["strike"])
    market = simulate_market(params, cfg["horizon"], cfg["paths"], seed=cfg["seed"])

    rows = ((p, t, market.prices[p, t], market.rets[p, t], market.sq_rets[p, t])
            for p in range(cfg["paths"]) for t in range(cfg["horizon"] + 1))
    write_csv(os.path.join(out, "trajectories.csv"),
              ["path", "t", "price", "ret", "sq_ret"], rows)
    rets = market.rets[:, 1:]
    summary = {
        "paths": cfg["paths"],
        "horizon": cfg["horizon"],
        "mean_return": float(rets.mean()),
        "std_return": float(rets.std(ddof=1)),
        "min_price": float(market.prices.min()),
        "max_price": float(market.prices.max()),
    }
    if cfg["plot"]:
        from . import figures
        figures.save_market(os.path.join(out, "trajectories.png"),
                            market.prices, market.rets)
    return summary, EXIT_OK


def _invariant_checks(seed):

    from .discount import (DiscountSpec, RegularizedDiscount, lambda_tail_mass,
                           shannon_entropy, truncation_horizon)
    from .model import PolicyGrid, rd_model
    from .nagent import estimate_empirical_rate
    from .rd_example import (closed_form_continuation, closed_form_policy,
                             thresholds, RdParams)
    from .solver import gibbs_policy
    from .valuation import deviation_value

    rng = np.random.default_rng(seed)
    qh = DiscountSpec.quasi_hyperbolic(1.8, 0.5)
    params = RdParams(1.8, 0.5)
    checks = []

    def check(name, fn):
        try:
            passed = bool(fn())
        except Exception:
            passed = False
        checks.append({"name": name, "passed": passed})

    check("regularized-discount-below-base", lambda: all(
        RegularizedDiscount(qh, lam).weight(k) <= qh.weight(k) + 1e-15
        for lam in (1.0, 0.1, 0.01) for k in range(13)))
    check("tail-mass-below-analytic-bound", lambda: all(
        lambda_tail_mass(lam, 1e-12)[0] <= lambda_tail_mass(lam, 1e-12)[1]
        for lam in (1.0, 0.5, 0.1, 0.01, 0.001)))
    check("entropy-symmetric", lambda: bool(np.allclose(
        shannon_entropy(np.linspace(0, 1, 101)),
        shannon_entropy(np.linspace(1, 0, 101)), atol=1e-14)))
    check("truncation-monotone-in-tol", lambda: (
        lambda ks: all(a <= b for a, b in zip(ks, ks[1:])))(
        [truncation_horizon(RegularizedDiscount(qh, 0.1), 1.0, t)
         for t in (1e-2, 1e-4, 1e-6, 1e-8)]))
    check("gibbs-inside-unit-interval", lambda: (
        lambda vals: bool(np.all(vals > 0) and np.all(vals < 1)))(
        gibbs_policy(0.1, rng.uniform(-1, 1, 200), rng.uniform(-2.7, 2.7, 200))))
    check("gibbs-monotone", lambda: bool(
        np.all(np.diff(gibbs_policy(0.2, np.linspace(-1, 1, 100), 0.0)) > 0)
        and np.all(np.diff(gibbs_policy(0.2, 0.0, np.linspace(-1, 1, 100))) < 0)))
    check("policy-interpolation-bounded", lambda: (
        lambda pol: bool((lambda q: np.all((q >= 0) & (q <= 1)))(
            pol(rng.random(10_000)))))(
        PolicyGrid(np.linspace(0, 1, 21), rng.random(21))))
    check("benchmark-thresholds-exact", lambda: (
        abs(thresholds(params).a - 2.0 / 11.0) < 5e-16
        and abs(thresholds(params).b - 1.0 / 3.0) < 5e-16))
    check("benchmark-policy-decreasing-on-band", lambda: (
        lambda mus: bool(np.all(np.diff(closed_form_policy(params, mus)) < 0)))(
        np.linspace(2.0 / 11.0 + 1e-6, 1.0 / 3.0, 200)))
    check("benchmark-continuation-continuous", lambda: all(
        abs(closed_form_continuation(params, t - 1e-9)
            - closed_form_continuation(params, t + 1e-9)) < 1e-6
        for t in (2.0 / 11.0, 1.0 / 3.0)))
    check("single-agent-empirical-distance", lambda:
          estimate_empirical_rate(0.5, [1], samples=50, seed=seed).estimates[0] == 0.5)

    def affine_deviation():
        model = rd_model(grid_points=201)
        pol = PolicyGrid(model.grid, np.clip(0.9 - model.grid, 0.0, 1.0))
        d0 = deviation_value(model, qh, pol, 0.0, 0.0, 0.4)
        d1 = deviation_value(model, qh, pol, 1.0, 0.0, 0.4)
        dh = deviation_value(model, qh, pol, 0.5, 0.0, 0.4)
        return abs(dh - 0.5 * (d0 + d1)) < 1e-12

    check("deviation-affine-without-entropy", affine_deviation)

    def coupling_bound():
        for _ in range(100):
            n = int(rng.integers(2, 13))
            y = rng.integers(0, 2, n)
            yp = rng.integers(0, 2, n)
            if abs(np.mean(y == 0) - np.mean(yp == 0)) > np.mean(y != yp) + 1e-15:
                return False
        return True

    check("empirical-coupling-bound", coupling_bound)
    return checks


def cmd_check_invariants(cfg, out):
    checks = _invariant_checks(cfg["seed"])
    for item in checks:
        print(f"{'ok  ' if item['passed'] else 'FAIL'} {item['name']}")
    all_passed = all(item["passed"] for item in checks)
    summary = {"checks": checks, "all_passed": all_passed}
    return summary, EXIT_OK if all_passed else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

COMMANDS = {
    "rd-solve": {
        "handler": cmd_rd_solve,
        "defaults": {"k_amp": 1.8, "beta": 0.5, "lam": 0.1, "grid_points": 2001,
                     "damping": 0.5, "max_iter": 500, "residual_tol": 1e-6,
                     "discount_reg": False, "continuation": False},
    },
    "rd-ode": {
        "handler": cmd_rd_ode,
        "defaults": {"k_amp": 1.8, "beta": 0.5, "lam": 0.05, "step": 5e-4},
    },
    "rd-converge": {
        "handler": cmd_rd_converge,
        "defaults": {"k_amp": 1.8, "beta": 0.5, "lambdas": "0.1,0.05,0.01",
                     "exclusion": 0.05, "step": 5e-4},
    },
    "nagent-rate": {
        "handler": cmd_nagent_rate,
        "defaults": {"p": 0.5, "ns": "100,1000,10000,100000", "samples": 4000},
    },
    "nagent-eps": {
        "handler": cmd_nagent_eps,
        "defaults": {"k_amp": 1.8, "beta": 0.5, "lam": 0.05, "nu0": 0.6,
                     "ns": "100,10000", "paths": 100_000, "horizon": 60},
    },
    "etf-train": {
        "handler": cmd_etf_train,
        "defaults": {"lam": 0.1, "strike": 100.0, "beta": 0.7, "k_amp": 1.01,
                     "outer_iters": 100, "batch": 200, "t_max": 500,
                     "lr": 1e-3, "avg_weight": 0.1},
    },
    "etf-simulate": {
        "handler": cmd_etf_simulate,
        "defaults": {"strike": 100.0, "horizon": 250, "paths": 100},
    },
    "check-invariants": {
        "handler": cmd_check_invariants,
        "defaults": {},
    },
}

_FLAG_NAMES = {
    "k_amp": "--K", "beta": "--beta", "lam": "--lambda", "lambdas": "--lambdas",
    "grid_points": "--grid-points", "damping": "--damping",
    "max_iter": "--max-iter", "residual_tol": "--residual-tol",
    "discount_reg": "--discount-reg", "continuation": "--continuation",
    "step": "--step", "exclusion": "--exclusion", "p": "--p", "ns": "--Ns",
    "samples": "--samples", "nu0": "--nu0", "paths": "--paths",
    "horizon": "--horizon", "strike": "--strike", "outer_iters": "--outer-iters",
    "batch": "--batch", "t_max": "--t-max", "lr": "--lr",
    "avg_weight": "--avg-weight",
}


def _add_command_args(sub, defaults):
    for dest, default in defaults.items():
        flag = _FLAG_NAMES[dest]
        if isinstance(default, bool):
            sub.add_argument(flag, dest=dest, action="store_true",
                             default=argparse.SUPPRESS)
        elif isinstance(default, int):
            sub.add_argument(flag, dest=dest, type=int, default=argparse.SUPPRESS)
        elif isinstance(default, float):
            sub.add_argument(flag, dest=dest, type=float, default=argparse.SUPPRESS)
        else:
            sub.add_argument(flag, dest=dest, default=argparse.SUPPRESS)


def build_parser() -> _Parser:
    parser = _Parser(prog="mfstop",
                     description="stopping-equilibrium experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, spec in COMMANDS.items():
        sub = subparsers.add_parser(name, prog=f"mfstop {name}")
        _add_command_args(sub, spec["defaults"])
        sub.add_argument("--seed", dest="seed", type=int, default=argparse.SUPPRESS)
        sub.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS)
        sub.add_argument("--config", dest="config", default=None)
        sub.add_argument("--threads", dest="threads", type=int,
                         default=argparse.SUPPRESS)
        sub.add_argument("--no-plot", dest="plot", action="store_false",
                         default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
        command = ns.command
        cfg = resolve_config(COMMANDS[command]["defaults"], ns.config, overrides)
        _apply_thread_cap(cfg["threads"])
        out = _prepare_out_dir(cfg, command)
        _write_manifest(out, command, cfg)
        summary, status = COMMANDS[command]["handler"](cfg, out)
        if summary is not None:
            _finish(out, command, summary)
        return status
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
