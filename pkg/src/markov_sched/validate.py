"""Invariant suite behind ``markov-sched validate``.

Each check returns ``(ok, detail)``.  ``quick=True`` shrinks sample sizes so
the whole suite runs in about a minute; the pytest suite covers the full
sizes.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .channel import MarkovChannel, hitting_time, hitting_time_brute, q_iterate, q_step, steady_state
from .index import index_oracle, index_residual, index_trace, trace_shape_ok, whittle_index
from .policies import DownlinkSystem, greedy_policy, optimal_finite_horizon, whittle_policy
from .reward import default_model, eval_reward, lower_bound, make_estimation_model, upper_bound
from .sim import (
    converged_values,
    evaluate_exact,
    evaluate_monte_carlo,
    make_system,
    pct_gain,
)
from .subsidy import SubsidyProblem, anchor_values, solve_threshold, value_iteration

DELTA = 0.2


@dataclass
class CheckResult:
    module: str
    name: str
    ok: bool
    detail: str
    seconds: float


def _channels(rng, n):
    out = [MarkovChannel(0.8, 0.2, DELTA), MarkovChannel(0.2, 0.8, DELTA), MarkovChannel(0.5, 0.5, DELTA)]
    while len(out) < n:
        p, r = rng.uniform(0.02, 0.98, 2)
        out.append(MarkovChannel(float(p), float(r), DELTA))
    return out


def shipped_models(delta=DELTA):
    return {"no-estimation": make_estimation_model(delta), "default": default_model(delta)}


# -- channel -----------------------------------------------------------------


def check_q_bounds(quick):
    grid = np.linspace(0, 1, 21)
    for ch in _channels(np.random.default_rng(1), 10):
        lo, hi = min(ch.p, ch.r), max(ch.p, ch.r)
        for pi, t in itertools.product(grid, range(1, 30)):
            x = q_iterate(ch, pi, t)
            if not lo - 1e-15 <= x <= hi + 1e-15:
                return False, f"{ch} pi={pi} t={t} -> {x}"
    return True, "min(p,r) <= Q^t <= max(p,r)"


def check_q_convergence(quick):
    for ch in _channels(np.random.default_rng(2), 10):
        pi0 = steady_state(ch)
        for pi in np.linspace(0, 1, 11):
            xs = [q_iterate(ch, pi, t) for t in range(40)]
            if ch.positive:
                d = np.diff(xs)
                if not (np.all(d >= -1e-15) or np.all(d <= 1e-15)):
                    return False, f"non-monotone iterates for {ch} from {pi}"
            dist = np.abs(np.array(xs) - pi0)
            if np.any(np.diff(dist) > 1e-15):
                return False, f"distance to steady state grew for {ch} from {pi}"
    return True, "monotone (p>r) / shrinking envelope (p<=r)"


def check_q_composition(quick):
    worst = 0.0
    for ch in _channels(np.random.default_rng(3), 10):
        for pi in np.linspace(0, 1, 11):
            x = pi
            for t in range(65):
                worst = max(worst, abs(q_iterate(ch, pi, t) - x))
                x = q_step(ch, x)
    return worst <= 1e-12, f"max |closed form - composition| = {worst:.2e}"


def check_hitting_time(quick):
    rng = np.random.default_rng(4)
    n = 0
    for ch in _channels(rng, 12):
        for pi, thr in rng.uniform(0, 1, (30, 2)):
            a = hitting_time(ch, pi, thr)
            b = hitting_time_brute(ch, pi, thr)
            if a != b:
                return False, f"{ch} pi={pi} thr={thr}: {a} vs {b}"
            n += 1
    return True, f"{n} cases agree with brute force"


# -- reward --------------------------------------------------------------------


def check_reward_lemma(quick):
    grid = np.linspace(0, 1, 1001)
    for name, m in shipped_models().items():
        R = eval_reward(m, grid)
        if np.any(np.diff(R) < -1e-15):
            return False, f"{name}: not monotone"
        if np.any(R[:-2] - 2 * R[1:-1] + R[2:] < -1e-12):
            return False, f"{name}: not convex"
        if np.any(R < lower_bound(m.delta, grid) - 1e-15) or np.any(R > upper_bound(m.delta, grid) + 1e-15):
            return False, f"{name}: bounds violated"
        if eval_reward(m, 0.0) != m.delta or eval_reward(m, 1.0) != 1.0:
            return False, f"{name}: endpoints"
    return True, "convex, increasing, bounded, R(0)=delta, R(1)=1"


# -- subsidy -------------------------------------------------------------------


def _subsidy_cases(quick):
    chans = [(0.8, 0.2), (0.2, 0.8), (0.9, 0.6), (0.3, 0.4), (0.7, 0.05), (0.5, 0.5)]
    betas = [0.5, 0.9] if quick else [0.3, 0.6, 0.9]
    omegas = [0.3, 0.45, 0.6, 0.8] if quick else [0.25, 0.35, 0.45, 0.55, 0.65, 0.8, 0.95]
    for (p, r), b, w in itertools.product(chans, betas, omegas):
        yield SubsidyProblem(MarkovChannel(p, r, DELTA), default_model(DELTA), b, w)


def check_anchor_oracle(quick):
    worst = 0.0
    for prob in _subsidy_cases(quick):
        tab = value_iteration(prob)
        a = anchor_values(prob, solve_threshold(prob, table=tab), check=True)
        worst = max(worst, abs(a.v_p - tab.v_p), abs(a.v_r - tab.v_r))
    return worst <= 1e-6, f"max anchor error {worst:.2e}"


def check_value_structure(quick):
    for prob in _subsidy_cases(quick):
        tab = value_iteration(prob)
        x, v = tab.nodes, tab.values
        grid = np.linspace(0, 1, 1001)
        vg = np.interp(grid, x, v)
        if np.min(vg[:-2] - 2 * vg[1:-1] + vg[2:]) < -1e-8:
            return False, f"V not convex for {prob}"
        gaps = np.array([tab.gap(float(g)) for g in np.linspace(0, 1, 201)])
        signs = np.sign(np.where(np.abs(gaps) < 1e-9, 0, gaps))
        nz = signs[signs != 0]
        if np.count_nonzero(np.diff(nz)) > 1:
            return False, f"active set is not an up-interval for {prob}"
        hi = value_iteration(SubsidyProblem(prob.channel, prob.reward, prob.beta, prob.omega + 0.05))
        if np.any(np.interp(grid, hi.nodes, hi.values) < vg - 1e-8):
            return False, f"V decreased in omega for {prob}"
    return True, "convex V, single switch, nondecreasing in omega"


# -- index ---------------------------------------------------------------------


def _index_channels(quick):
    rng = np.random.default_rng(5)
    chans = _channels(rng, 8 if quick else 20)
    betas = [0.4, 0.9] if quick else [0.3, 0.6, 0.8, 0.95]
    return chans, betas


def check_index_monotone(quick):
    grid = np.linspace(0, 1, 1001)
    chans, betas = _index_channels(quick)
    for ch, b in itertools.product(chans, betas):
        w = np.array([whittle_index(ch, default_model(DELTA), b, float(x)) for x in grid])
        if np.any(np.diff(w) < -1e-10):
            return False, f"W decreasing for {ch} beta={b}"
        if np.any(w < DELTA - 1e-12) or np.any(w > 1 + 1e-12) or abs(w[-1] - 1.0) > 1e-12:
            return False, f"W out of range for {ch} beta={b}"
    return True, "nondecreasing, delta <= W <= 1, W(1)=1"


def check_index_oracle(quick):
    rng = np.random.default_rng(6)
    chans, betas = _index_channels(quick)
    worst, n = 0.0, 0
    for ch, b in itertools.product(chans, betas):
        for pi in rng.uniform(0, 1, 2 if quick else 5):
            m = default_model(DELTA)
            worst = max(worst, abs(whittle_index(ch, m, b, pi) - index_oracle(ch, m, b, pi)))
            n += 1
    return worst <= 1e-5, f"{n} samples, max |closed - oracle| = {worst:.2e}"


def check_index_continuity(quick):
    chans, betas = _index_channels(quick)
    worst = 0.0
    for ch, b in itertools.product(chans, betas):
        m = default_model(DELTA)
        for x in (ch.p, ch.r, steady_state(ch), q_step(ch, ch.p)):
            if 1e-9 < x < 1 - 1e-9:
                worst = max(worst, abs(whittle_index(ch, m, b, x + 1e-9) - whittle_index(ch, m, b, x - 1e-9)))
    return worst <= 1e-6, f"max jump at branch boundaries {worst:.2e}"


def check_index_residual(quick):
    chans, betas = _index_channels(quick)
    worst = 0.0
    for ch, b in itertools.product(chans, betas):
        m = default_model(DELTA)
        for pi in np.linspace(0.01, 0.99, 25):
            w = whittle_index(ch, m, b, pi)
            worst = max(worst, abs(index_residual(ch, m, b, pi, w)))
    return worst <= 1e-6, f"max balance residual {worst:.2e}"


def check_index_inverse(quick):
    worst = 0.0
    for prob in _subsidy_cases(True):
        th = solve_threshold(prob)
        w = whittle_index(prob.channel, prob.reward, prob.beta, th.pi_star)
        worst = max(worst, abs(w - prob.omega))
    return worst <= 1e-5, f"max |W(pi*(omega)) - omega| = {worst:.2e}"


def check_trace_shapes(quick):
    m = default_model(DELTA)
    for p, r in ((0.8, 0.2), (0.2, 0.8)):
        ch = MarkovChannel(p, r, DELTA)
        for b in (0.5, 0.9):
            tr = index_trace(ch, m, b, 0.3, 20)
            if not trace_shape_ok(tr, whittle_index(ch, m, b, steady_state(ch)), ch.positive):
                return False, f"trace shape wrong for p={p} r={r} beta={b}"
    return True, "monotone / alternating with shrinking envelopes"


# -- policies ------------------------------------------------------------------


def _random_system(rng, n, identical=False, beta=None):
    if identical:
        p, r = rng.uniform(0.02, 0.98, 2)
        pairs = [(float(p), float(r))] * n
    else:
        pairs = [tuple(map(float, rng.uniform(0.02, 0.98, 2))) for _ in range(n)]
    b = float(rng.uniform(0.2, 0.9)) if beta is None else beta
    return make_system(pairs, DELTA, b)


def check_greedy_equivalence(quick):
    rng = np.random.default_rng(7)
    count = 0
    for _ in range(5):
        sys = _random_system(rng, int(rng.integers(2, 6)), identical=True)
        for _ in range(200 if quick else 2000):
            s = tuple(map(float, rng.uniform(0, 1, sys.n)))
            if whittle_policy(sys, s) != greedy_policy(sys, s):
                return False, f"differ at {s}"
            count += 1
    return True, f"{count} states agree"


def check_dp_dominance(quick):
    rng = np.random.default_rng(8)
    worst = np.inf
    for _ in range(10 if quick else 50):
        sys = _random_system(rng, int(rng.integers(1, 4)))
        s = tuple(map(float, rng.uniform(0, 1, sys.n)))
        m = int(rng.integers(1, 9 if quick else 11))
        opt = optimal_finite_horizon(sys, s, m)[0]
        for pol in ("whittle", "greedy", "random", "nofb"):
            worst = min(worst, opt - evaluate_exact(sys, pol, s, m))
    return worst >= -1e-10, f"min(opt - policy) = {worst:.2e}"


def check_permutation(quick):
    rng = np.random.default_rng(9)
    for _ in range(20):
        sys = _random_system(rng, 4)
        s = tuple(map(float, rng.uniform(0, 1, 4)))
        perm = rng.permutation(4)
        psys = DownlinkSystem([sys.users[i] for i in perm], sys.beta)
        ps = tuple(s[i] for i in perm)
        scores = [sys.W(i, s[i]) for i in range(4)]
        if len(set(scores)) < 4:
            continue
        if perm[whittle_policy(psys, ps)] != whittle_policy(sys, s):
            return False, "decision depends on user labels"
    return True, "decisions follow the index ordering only"


# -- sim -----------------------------------------------------------------------


def check_mc_agreement(quick):
    rng = np.random.default_rng(10)
    n_inst = 10 if quick else 100
    misses = 0
    for k in range(n_inst):
        sys = _random_system(rng, int(rng.integers(1, 4)))
        s = tuple(map(float, rng.uniform(0, 1, sys.n)))
        m = int(rng.integers(2, 13))
        exact = evaluate_exact(sys, "whittle", s, m)
        mean, se = evaluate_monte_carlo(sys, "whittle", s, m, 20_000, seed=k)
        if abs(mean - exact) > 3 * se:
            misses += 1
    return misses <= 1, f"{misses}/{n_inst} outside 3 standard errors"


def check_convergence_horizon(quick):
    rng = np.random.default_rng(11)
    for _ in range(3 if quick else 10):
        sys = _random_system(rng, 3, beta=float(rng.uniform(0.3, 0.7)))
        vals, m, ok = converged_values(sys, sys.steady_state())
        if not ok:
            return False, f"no 1% convergence by horizon {m}"
        g = pct_gain(vals["opt"], vals["index"], vals["nofb"])
        if g is not None and g > 100 + 1e-6:
            return False, f"%gain {g} above 100"
    return True, "1% horizon found, %gain <= 100"


CHECKS = [
    ("channel", "q_iterate bounds", check_q_bounds),
    ("channel", "monotone convergence", check_q_convergence),
    ("channel", "closed form = composition", check_q_composition),
    ("channel", "hitting time", check_hitting_time),
    ("reward", "Lemma 1 properties", check_reward_lemma),
    ("subsidy", "anchors vs value iteration", check_anchor_oracle),
    ("subsidy", "value structure", check_value_structure),
    ("index", "monotone and in range", check_index_monotone),
    ("index", "closed form vs oracle", check_index_oracle),
    ("index", "branch continuity", check_index_continuity),
    ("index", "balance residual", check_index_residual),
    ("index", "threshold inverse", check_index_inverse),
    ("index", "trace shapes", check_trace_shapes),
    ("policies", "identical users: whittle = greedy", check_greedy_equivalence),
    ("policies", "DP dominance", check_dp_dominance),
    ("policies", "label permutation", check_permutation),
    ("sim", "Monte Carlo vs exact", check_mc_agreement),
    ("sim", "convergence horizon", check_convergence_horizon),
]


def run_all(quick: bool = True) -> list[CheckResult]:
    out = []
    for module, name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(quick)
        except Exception as e:  # a crashing check is a failed check
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append(CheckResult(module, name, bool(ok), detail, time.perf_counter() - t0))
    return out
