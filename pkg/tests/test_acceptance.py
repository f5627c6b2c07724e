"""Acceptance suite: eleven end-to-end criteria at their stated tolerances.

Run with pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly: ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import statistics
import time

import numpy as np
import pytest

from markov_sched.channel import MarkovChannel, q_step, steady_state
from markov_sched.cli import main as cli_main
from markov_sched.config import FIG5_PAIRS, FIG6_PAIRS
from markov_sched.index import IndexBranch, index_branch, index_oracle, index_trace, indexability_scan, trace_shape_ok
from markov_sched.index import whittle_index
from markov_sched.policies import greedy_policy, optimal_finite_horizon, whittle_policy
from markov_sched.reward import default_model, eval_reward, lower_bound, make_estimation_model, upper_bound
from markov_sched.sim import evaluate_exact, horizon_sweep, make_system, memory_sweep, random_instance_table
from markov_sched.subsidy import (
    ALWAYS_ACTIVE,
    ALWAYS_IDLE,
    SubsidyProblem,
    ThresholdClass,
    anchor_values,
    solve_threshold,
    value_iteration,
)

DELTA = 0.2
RESULTS: dict[int, tuple[str, bool, str]] = {}


def _record(num, name, ok, detail):
    RESULTS[num] = (name, bool(ok), detail)
    return ok, detail


def _cuts(ch):
    pi0 = steady_state(ch)
    if ch.positive:
        return [0.0, ch.r, pi0, ch.p, 1.0]
    return [0.0, ch.p, pi0, q_step(ch, ch.p), ch.r, 1.0]


def _random_channel(rng, positive):
    while True:
        p, r = rng.uniform(0.02, 0.98, 2)
        if (p > r) != positive:
            p, r = r, p
        ch = MarkovChannel(float(p), float(r), DELTA)
        if min(np.diff(_cuts(ch))) > 1e-3:
            return ch


# -- criteria ------------------------------------------------------------------------


def criterion_1():
    """Closed-form index equals the bisection oracle."""
    rng = np.random.default_rng(101)
    m = default_model(DELTA)
    counts = {b: 0 for b in IndexBranch}
    worst, n, t0 = 0.0, 0, time.perf_counter()
    for k in range(50):
        ch = _random_channel(rng, positive=k % 2 == 0)
        beta = float(rng.uniform(0.1, 0.95))
        cuts = _cuts(ch)
        for a, b in zip(cuts, cuts[1:]):
            for pi in rng.uniform(a, b, 2):
                pi = float(pi)
                counts[index_branch(ch, pi)] += 1
                worst = max(worst, abs(whittle_index(ch, m, beta, pi) - index_oracle(ch, m, beta, pi)))
                n += 1
    secs = time.perf_counter() - t0
    ok = worst <= 1e-5 and n >= 200 and min(counts.values()) >= 10 and secs < 300
    return _record(1, "index closed form vs oracle", ok,
                   f"{n} samples, min per branch {min(counts.values())}, max err {worst:.2e}, {secs:.0f}s")


def _anchor_region(ch, level):
    if level == -np.inf:
        return "active"
    if ch.positive:
        cuts, names = [ch.r, steady_state(ch), ch.p], ["<r", "[r,pi0)", "[pi0,p)", ">=p"]
    else:
        cuts, names = [ch.p, q_step(ch, ch.p), ch.r], ["<p", "[p,Q(p))", "[Q(p),r)", ">=r"]
    return names[sum(level >= c for c in cuts)]


def criterion_2():
    """Anchor values from the closed forms equal value iteration."""
    rng = np.random.default_rng(202)
    m = default_model(DELTA)
    seen, worst, t0 = {}, 0.0, time.perf_counter()
    for k in range(16):
        ch = _random_channel(rng, positive=k % 2 == 0)
        beta = float(rng.uniform(0.3, 0.95))
        probs = [(SubsidyProblem(ch, m, beta, 0.1), ThresholdClass(ALWAYS_ACTIVE)),
                 (SubsidyProblem(ch, m, beta, 1.1), ThresholdClass(ALWAYS_IDLE))]
        cuts = _cuts(ch)
        for a, b in zip(cuts, cuts[1:]):
            w = whittle_index(ch, m, beta, float(rng.uniform(a, b)))
            if DELTA < w < 1.0:
                probs.append((SubsidyProblem(ch, m, beta, w), None))
        for prob, th in probs:
            tab = value_iteration(prob)
            th = th or solve_threshold(prob, table=tab)
            a = anchor_values(prob, th, check=True)
            worst = max(worst, abs(a.v_p - tab.v_p), abs(a.v_r - tab.v_r))
            key = (ch.positive, _anchor_region(ch, th.level))
            seen[key] = seen.get(key, 0) + 1
    secs = time.perf_counter() - t0
    need = {(True, "[r,pi0)"), (True, "<r"), (True, "[pi0,p)"), (True, ">=p"),
            (False, "<p"), (False, "[p,Q(p))"), (False, "[Q(p),r)"), (False, ">=r")}
    ok = worst <= 1e-6 and need <= set(seen) and secs < 300
    return _record(2, "anchor values vs value iteration", ok,
                   f"{sum(seen.values())} problems, {len(seen)} regions, max err {worst:.2e}, {secs:.0f}s")


def criterion_3():
    """Thresholds increase strictly with the subsidy."""
    rng = np.random.default_rng(303)
    m = default_model(DELTA)
    grid = np.linspace(DELTA, 1.0, 52)[1:-1]
    bad = []
    for k in range(20):
        p, r = rng.uniform(0.02, 0.98, 2)
        ch = MarkovChannel(float(p), float(r), DELTA)
        beta = float(rng.uniform(0.1, 0.95))
        rep = indexability_scan(ch, m, beta, grid, tol=1e-7)
        if not rep.ok:
            bad.append((round(p, 3), round(r, 3), round(beta, 3), rep.violation))
    return _record(3, "indexability scan", not bad, f"20 channels x {len(grid)} subsidies, violations {bad}")


def criterion_4():
    """Reward shape for every shipped model."""
    grid = np.linspace(0.0, 1.0, 1000)
    checked = 0
    for delta in (0.0, 0.05, 0.2, 0.5, 0.9):
        for m in (make_estimation_model(delta), default_model(delta)):
            R = eval_reward(m, grid)
            ok = (
                np.all(R[:-2] - 2 * R[1:-1] + R[2:] >= -1e-12)
                and np.all(np.diff(R) >= 0)
                and np.all(R >= lower_bound(delta, grid))
                and np.all(R <= upper_bound(delta, grid) + 1e-15)
                and eval_reward(m, 0.0) == delta
                and eval_reward(m, 1.0) == 1.0
            )
            if not ok:
                return _record(4, "reward model properties", False, f"model {m.pairs} fails")
            checked += 1
    return _record(4, "reward model properties", True, f"{checked} models on a 1000-point grid")


def criterion_5():
    """Index policy within 2% of the optimum on the six-curve instance."""
    t0 = time.perf_counter()
    worst = np.inf
    for beta in (0.4, 0.8):
        sys_ = make_system(FIG6_PAIRS, DELTA, beta)
        for row in horizon_sweep(sys_, sys_.steady_state(), 10):
            worst = min(worst, row["v_index"] / row["v_opt"])
    secs = time.perf_counter() - t0
    return _record(5, "near-optimality over horizons", worst >= 0.98 and secs < 600,
                   f"min v_index/v_opt {worst:.5f}, {secs:.0f}s")


def criterion_6():
    """Distribution of the captured feedback gain on random instances."""
    t0 = time.perf_counter()
    res = random_instance_table(20, (4, 5), (0.45, 0.67), DELTA, seed=2026)
    gains = [e.pct_gain for e in res if e.pct_gain is not None]
    secs = time.perf_counter() - t0
    med = statistics.median(gains) if gains else float("nan")
    ok = len(gains) >= 5 and med >= 90.0 and max(gains) <= 100 + 1e-6 and secs < 900
    return _record(6, "%gain distribution", ok,
                   f"median {med:.3f} over {len(gains)}/20 defined rows, max {max(gains):.6f}, {secs:.0f}s")


def criterion_7():
    """No-feedback equals optimum for memoryless users; spread grows with memory."""
    rows = memory_sweep(5, [0.5, 0.6, 0.7, 0.8, 0.9], DELTA, 0.6, 10)
    ends = max(abs(rows[0]["v_opt"] - rows[0]["v_nofb"]), abs(rows[0]["v_index"] - rows[0]["v_nofb"]))
    spread = [r["v_opt"] - r["v_nofb"] for r in rows]
    ok = ends <= 1e-9 and all(b >= a for a, b in zip(spread, spread[1:]))
    return _record(7, "memory sweep", ok, f"endpoint gap {ends:.1e}, spread {[round(s, 4) for s in spread]}")


def criterion_8():
    """Identical users: index policy and greedy pick the same user."""
    rng = np.random.default_rng(808)
    states = 0
    for _ in range(10):
        n = int(rng.integers(2, 7))
        p, r = rng.uniform(0.02, 0.98, 2)
        sys_ = make_system([(float(p), float(r))] * n, DELTA, float(rng.uniform(0.05, 0.95)))
        for s in rng.uniform(0, 1, (1000, n)):
            s = tuple(s.tolist())
            if whittle_policy(sys_, s) != greedy_policy(sys_, s):
                return _record(8, "identical users match greedy", False, f"differ at {s}")
            states += 1
    return _record(8, "identical users match greedy", True, f"{states} states")


def criterion_9():
    """The dynamic-programming optimum dominates every policy."""
    rng = np.random.default_rng(909)
    worst = np.inf
    for _ in range(50):
        n = int(rng.integers(1, 4))
        pairs = [tuple(map(float, rng.uniform(0.02, 0.98, 2))) for _ in range(n)]
        sys_ = make_system(pairs, DELTA, float(rng.uniform(0.1, 0.95)))
        s = tuple(rng.uniform(0, 1, n).tolist())
        m = int(rng.integers(1, 11))
        opt = optimal_finite_horizon(sys_, s, m)[0]
        for pol in ("whittle", "greedy", "random", "nofb"):
            worst = min(worst, opt - evaluate_exact(sys_, pol, s, m))
    return _record(9, "DP dominance", worst >= -1e-10, f"50 instances, min(opt - policy) {worst:.2e}")


def criterion_10():
    """Index along idle trajectories: monotone or damped oscillation."""
    m = default_model(DELTA)
    out = {}
    for p, r in FIG5_PAIRS:
        ch = MarkovChannel(p, r, DELTA)
        tr = index_trace(ch, m, 0.9, 0.3, 20)
        out[(p, r)] = trace_shape_ok(tr, whittle_index(ch, m, 0.9, steady_state(ch)), ch.positive)
    return _record(10, "index trace shapes", all(out.values()), f"{out}")


DETERMINISM_RUNS = [
    ("index", "[experiment]\npoints = 101\n"),
    ("threshold", "[experiment]\nomega_points = 10\n"),
    ("simulate", 'policies = ["whittle", "greedy", "random", "nofb"]\n[eval]\nhorizon = 8\nruns = 4000\nseed = 17\n'),
    ("sweep-horizon", "[experiment]\nm_max = 4\n"),
    ("sweep-memory", "[experiment]\nn_users = 3\nhorizon = 5\n"),
    ("table", "[experiment]\ncount = 4\n[eval]\nhorizon = 10\nseed = 23\n"),
    ("trace", ""),
]


def criterion_11(tmp_dir):
    """Same seed, different thread counts: identical CSV bytes."""
    diffs = []
    for cmd, toml in DETERMINISM_RUNS:
        cfg = tmp_dir / f"{cmd}.toml"
        cfg.write_text(toml)
        blobs = []
        for threads in (1, 3):
            out = tmp_dir / f"{cmd}-{threads}"
            code = cli_main([cmd, "--config", str(cfg), "--out", str(out), "--threads", str(threads), "--no-plot"])
            if code != 0:
                diffs.append(f"{cmd} exit {code}")
            blobs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if blobs[0] != blobs[1] or not blobs[0]:
            diffs.append(cmd)
    return _record(11, "determinism across threads", not diffs,
                   f"{len(DETERMINISM_RUNS)} commands, mismatches {diffs}")


# -- pytest wrappers ---------------------------------------------------------------


@pytest.mark.parametrize("num", [1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
def test_criterion(num):
    ok, detail = globals()[f"criterion_{num}"]()
    assert ok, detail


def test_criterion_11(tmp_path):
    ok, detail = criterion_11(tmp_path)
    assert ok, detail


def report_line(num):
    name, ok, detail = RESULTS[num]
    return f"{'PASS' if ok else 'FAIL'} criterion {num:>2}: {name}: {detail}"


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    for num in range(1, 11):
        globals()[f"criterion_{num}"]()
        print(report_line(num), flush=True)
    with tempfile.TemporaryDirectory() as d:
        criterion_11(Path(d))
    print(report_line(11))
    sys.exit(0 if all(ok for _, ok, _ in RESULTS.values()) else 1)
