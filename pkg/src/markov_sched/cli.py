"""Command-line entry point: ``markov-sched <command> [--config FILE] ...``.

Every command writes CSV files (floats with 17 significant digits), a
``manifest.json`` with the resolved configuration and CSV checksums, and,
unless ``--no-plot`` is given, PNG figures next to the CSVs.

Exit status: 0 on success, 1 when an invariant or validation check fails,
2 when the configuration is invalid.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import ConfigError, RunConfig, load_config
from .channel import q_step, steady_state
from .index import index_branch, index_curve, index_trace, indexability_scan, trace_shape_ok, whittle_index
from .policies import DP_HORIZON_CAP, optimal_finite_horizon
from .sim import (
    evaluate_exact,
    evaluate_monte_carlo,
    horizon_sweep,
    memory_sweep,
    random_instance_table,
)
from .subsidy import ALWAYS_ACTIVE, ALWAYS_IDLE, ContractViolation, ConvergenceError, ThresholdClass

COMMANDS = {
    "index": "index-curve",
    "threshold": "threshold",
    "simulate": "simulate",
    "sweep-horizon": "horizon-sweep",
    "sweep-memory": "memory-sweep",
    "table": "table",
    "trace": "trace",
    "validate": "validate",
}

SCHEMA_VERSION = 1


class CheckFailed(RuntimeError):
    """An experiment ran but one of its invariants did not hold."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Artifacts:
    """Single writer for everything that lands in the output directory."""

    def __init__(self, out: Path, plots: bool):
        self.out = out
        self.plots = plots
        self.csv = {}
        self.figures = []
        out.mkdir(parents=True, exist_ok=True)

    def write_csv(self, name: str, columns: list[str], rows: list[dict]) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
        data = buf.getvalue().encode()
        (self.out / name).write_bytes(data)
        self.csv[name] = hashlib.sha256(data).hexdigest()

    def figure(self, fn, name: str, *args, **kw) -> None:
        if self.plots:
            fn(*args, path=self.out / name, **kw)
            self.figures.append(name)

    def manifest(self, command: str, cfg: RunConfig, summary: dict) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "command": command,
            "config": _config_dict(cfg),
            "summary": summary,
            "csv_sha256": dict(sorted(self.csv.items())),
            "figures": sorted(self.figures),
        }
        text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
        (self.out / "manifest.json").write_text(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def _config_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("output_path", None)
    return d


# -- option helpers -------------------------------------------------------------


def _opt_num(cfg: RunConfig, key: str, kind=float, lo=None, hi=None):
    v = cfg.options.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"experiment.{key}: expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"experiment.{key}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"experiment.{key}: {v!r} outside [{lo}, {hi}]")
    return v


def _opt_list(cfg: RunConfig, key: str, lo=0.0, hi=None):
    v = cfg.options.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"experiment.{key}: expected a non-empty list of numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"experiment.{key}[{i}]: expected a number, got {x!r}")
        if x < lo or (hi is not None and x > hi):
            raise ConfigError(f"experiment.{key}[{i}]: {x!r} outside [{lo}, {hi}]")
        out.append(float(x))
    return out


def _user_rows(cfg: RunConfig, system):
    for i, u in enumerate(system.users):
        yield i, u.channel, u.reward


# -- commands ---------------------------------------------------------------------


def run_index(cfg, system, art, threads):
    n = _opt_num(cfg, "points", int, lo=2)
    rows, curves = [], []
    for i, ch, m in _user_rows(cfg, system):
        grid, w = index_curve(ch, m, system.beta, n)
        curves.append((f"user {i} (p={ch.p:g}, r={ch.r:g})", grid, w))
        for x, v in zip(grid.tolist(), w.tolist()):
            rows.append({"user": i, "p": ch.p, "r": ch.r, "pi": x, "index": v, "branch": index_branch(ch, x).name})
        if np.any(np.diff(w) < -1e-10):
            raise CheckFailed(f"user {i}: index is not nondecreasing in the belief")
    art.write_csv("index_curve.csv", ["user", "p", "r", "pi", "index", "branch"], rows)
    art.figure(plotting.plot_index_curve, "index_curve.png", curves)
    return {"users": system.n, "points": n}


def run_threshold(cfg, system, art, threads):
    if cfg.options.get("omegas") is not None:
        omegas = _opt_list(cfg, "omegas")
    else:
        k = _opt_num(cfg, "omega_points", int, lo=2)
        omegas = np.linspace(0.0, 1.0, k + 1)[1:].tolist()
    rows, summary = [], {}
    for i, ch, m in _user_rows(cfg, system):
        rep = indexability_scan(ch, m, system.beta, omegas)
        for w, t in zip(rep.omegas, rep.thresholds):
            if t is None:
                th = ThresholdClass(ALWAYS_ACTIVE)
            elif w >= 1.0:
                th = ThresholdClass(ALWAYS_IDLE)
            else:
                th = ThresholdClass.interior(t)
            rows.append({"user": i, "omega": w, "class": th.kind, "pi_star": th.pi_star, "level": th.level})
        summary[f"user{i}_indexable"] = rep.ok
        art.figure(plotting.plot_thresholds, f"threshold_user{i}.png", rep.omegas, rep.thresholds, delta=ch.delta)
        if not rep.ok:
            art.write_csv("threshold.csv", ["user", "omega", "class", "pi_star", "level"], rows)
            raise CheckFailed(f"user {i}: threshold not strictly increasing between {rep.violation}")
    art.write_csv("threshold.csv", ["user", "omega", "class", "pi_star", "level"], rows)
    return summary


def run_simulate(cfg, system, art, threads):
    state = cfg.initial_state(system)
    ev = cfg.eval
    rows = []
    for pol in cfg.policies:
        if pol == "optimal":
            if ev.horizon > DP_HORIZON_CAP:
                raise ConfigError(f"eval.horizon: optimal policy needs horizon <= {DP_HORIZON_CAP}")
            v = optimal_finite_horizon(system, state, ev.horizon)[0]
            rows.append({"policy": pol, "horizon": ev.horizon, "method": "dp", "value": v, "std_error": 0.0})
        elif ev.exact:
            v = evaluate_exact(system, pol, state, ev.horizon)
            rows.append({"policy": pol, "horizon": ev.horizon, "method": "exact", "value": v, "std_error": 0.0})
        else:
            mean, se = evaluate_monte_carlo(system, pol, state, ev.horizon, ev.runs, ev.seed, threads)
            rows.append(
                {"policy": pol, "horizon": ev.horizon, "method": "monte-carlo", "value": mean, "std_error": se,
                 "runs": ev.runs, "seed": ev.seed}
            )
    art.write_csv("simulate.csv", ["policy", "horizon", "method", "value", "std_error", "runs", "seed"], rows)
    art.figure(plotting.plot_policy_values, "simulate.png", [r["policy"] for r in rows], [r["value"] for r in rows])
    vals = {r["policy"]: r["value"] for r in rows}
    if "optimal" in vals and ev.exact:
        worst = min(vals["optimal"] - v for v in vals.values())
        if worst < -1e-10:
            raise CheckFailed(f"a policy beats the dynamic-programming optimum by {-worst:.3g}")
    return {"values": vals}


def run_sweep_horizon(cfg, system, art, threads):
    m_max = _opt_num(cfg, "m_max", int, lo=1, hi=DP_HORIZON_CAP)
    rows = horizon_sweep(system, cfg.initial_state(system), m_max)
    for r in rows:
        r["ratio"] = r["v_index"] / r["v_opt"]
    cols = ["horizon", "v_opt", "v_index", "v_greedy", "v_nofb", "ratio"]
    art.write_csv("horizon_sweep.csv", cols, rows)
    x = [r["horizon"] for r in rows]
    art.figure(
        plotting.plot_lines, "horizon_sweep.png", x,
        {k: [r[k] for r in rows] for k in ("v_opt", "v_index", "v_greedy", "v_nofb")},
        "horizon M", "expected discounted reward",
    )
    if any(r["v_opt"] - r[k] < -1e-10 for r in rows for k in ("v_index", "v_greedy", "v_nofb")):
        raise CheckFailed("a policy beats the dynamic-programming optimum")
    return {"min_ratio": min(r["ratio"] for r in rows)}


def run_sweep_memory(cfg, system, art, threads):
    n = _opt_num(cfg, "n_users", int, lo=1, hi=8)
    grid = _opt_list(cfg, "p_grid", lo=0.5, hi=1.0)
    h = _opt_num(cfg, "horizon", int, lo=1, hi=DP_HORIZON_CAP)
    delta = cfg.users[0].delta
    model = system.users[0].reward
    rows = memory_sweep(n, grid, delta, system.beta, h, reward=model)
    for r in rows:
        r["spread"] = r["v_opt"] - r["v_nofb"]
    art.write_csv("memory_sweep.csv", ["p", "r", "v_opt", "v_index", "v_nofb", "spread"], rows)
    art.figure(
        plotting.plot_lines, "memory_sweep.png", [r["p"] for r in rows],
        {k: [r[k] for r in rows] for k in ("v_opt", "v_index", "v_nofb")},
        "memory p (r = 1 - p)", "expected discounted reward",
    )
    return {"spread": [r["spread"] for r in rows]}


TABLE_POLICIES = (("optimal", "v_opt"), ("whittle", "v_index"), ("greedy", "v_greedy"), ("nofb", "v_nofb"))


def run_table(cfg, system, art, threads):
    count = _opt_num(cfg, "count", int, lo=1)
    n_min = _opt_num(cfg, "n_min", int, lo=1)
    n_max = _opt_num(cfg, "n_max", int, lo=n_min, hi=8)
    b_min = _opt_num(cfg, "beta_min", lo=0.0, hi=0.99)
    b_max = _opt_num(cfg, "beta_max", lo=b_min, hi=0.99)
    delta = _opt_num(cfg, "delta", lo=0.0, hi=0.99)
    res = random_instance_table(
        count, (n_min, n_max), (b_min, b_max), delta, seed=cfg.eval.seed,
        convergence_pct=cfg.eval.convergence_pct, threads=threads,
    )
    long_rows, gain_rows = [], []
    for e in res:
        for pol, key in TABLE_POLICIES:
            long_rows.append(
                {"instance": e.instance, "n_users": e.n_users, "beta": e.beta, "policy": pol,
                 "horizon": e.horizon_used, "converged": e.converged, "value": getattr(e, key), "seed": e.seed}
            )
        gain_rows.append({"instance": e.instance, "pct_gain": e.pct_gain, "horizon": e.horizon_used,
                          "converged": e.converged})
    gains = [e.pct_gain for e in res if e.pct_gain is not None]
    summary = {
        "instances": count,
        "defined_gain_rows": len(gains),
        "median_pct_gain": statistics.median(gains) if gains else None,
        "min_pct_gain": min(gains) if gains else None,
        "max_pct_gain": max(gains) if gains else None,
        "all_converged": all(e.converged for e in res),
    }
    art.write_csv("table.csv", ["instance", "n_users", "beta", "policy", "horizon", "converged", "value", "seed"],
                  long_rows)
    art.write_csv("table_gain.csv", ["instance", "pct_gain", "horizon", "converged"], gain_rows)
    art.write_csv("table_summary.csv", ["metric", "value"], [{"metric": k, "value": v} for k, v in summary.items()])
    art.figure(plotting.plot_gain_table, "table_gain.png", [e.instance for e in res], [e.pct_gain for e in res])
    if gains and max(gains) > 100.0 + 1e-6:
        raise CheckFailed(f"%gain {max(gains):.6g} exceeds 100")
    return summary


def run_trace(cfg, system, art, threads):
    pi0 = _opt_num(cfg, "pi0", lo=0.0, hi=1.0)
    h = _opt_num(cfg, "horizon", int, lo=1)
    rows, traces, shapes = [], [], {}
    for i, ch, m in _user_rows(cfg, system):
        tr = index_trace(ch, m, system.beta, pi0, h)
        center = whittle_index(ch, m, system.beta, steady_state(ch))
        x = pi0
        for t, w in tr:
            rows.append({"user": i, "t": t, "belief": x, "index": w, "index_steady": center})
            x = q_step(ch, x)
        traces.append((f"user {i} (p={ch.p:g}, r={ch.r:g})", [t for t, _ in tr], [w for _, w in tr]))
        shapes[f"user{i}"] = trace_shape_ok(tr, center, ch.positive)
    art.write_csv("trace.csv", ["user", "t", "belief", "index", "index_steady"], rows)
    art.figure(plotting.plot_trace, "trace.png", traces)
    if not all(shapes.values()):
        raise CheckFailed(f"trace shape check failed: {shapes}")
    return {"shape_ok": shapes}


def run_validate(cfg, system, art, threads):
    from .validate import run_all

    quick = cfg.options.get("quick", True)
    if not isinstance(quick, bool):
        raise ConfigError("experiment.quick: expected true or false")
    res = run_all(quick)
    rows = [{"module": c.module, "check": c.name, "ok": c.ok, "detail": c.detail} for c in res]
    art.write_csv("validate.csv", ["module", "check", "ok", "detail"], rows)
    for c in res:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.module:<9} {c.name:<34} {c.detail}")
    failed = [c.name for c in res if not c.ok]
    if failed:
        raise CheckFailed(f"{len(failed)} validation check(s) failed: {', '.join(failed)}")
    return {"checks": len(res)}


RUNNERS = {
    "index": run_index,
    "threshold": run_threshold,
    "simulate": run_simulate,
    "sweep-horizon": run_sweep_horizon,
    "sweep-memory": run_sweep_memory,
    "table": run_table,
    "trace": run_trace,
    "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="markov-sched", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override eval.seed")
        p.add_argument("--out", help="output directory (default: config output_path or ./out)")
        p.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")
        p.add_argument("--no-plot", action="store_true", help="skip PNG figures")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config, COMMANDS[args.command])
        if args.seed is not None:
            cfg.eval = dataclasses.replace(cfg.eval, seed=args.seed)
        system = cfg.system()
        if cfg.initial_beliefs != "steady":
            cfg.initial_state(system)
        out = Path(args.out or cfg.output_path or "out")
        art = Artifacts(out, plots=not args.no_plot)
        summary = RUNNERS[args.command](cfg, system, art, args.threads)
    except ConfigError as e:
        print(f"markov-sched: config error: {e}", file=sys.stderr)
        return 2
    except (CheckFailed, ContractViolation, ConvergenceError) as e:
        print(f"markov-sched: check failed: {e}", file=sys.stderr)
        if "art" in locals():
            art.manifest(args.command, cfg, {"status": "failed", "error": str(e)})
        return 1
    except ValueError as e:
        print(f"markov-sched: invalid input: {e}", file=sys.stderr)
        return 2
    art.manifest(args.command, cfg, {"status": "ok", **summary})
    print(f"wrote {', '.join(sorted(art.csv))} to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
