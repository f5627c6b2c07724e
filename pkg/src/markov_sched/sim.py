"""Policy evaluation (exact and Monte Carlo) and the experiment protocols."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .channel import MarkovChannel
from .policies import (
    DownlinkSystem,
    User,
    _OptimalDP,
    check_state,
    greedy_policy,
    no_feedback_policy,
    open_loop_step,
    optimal_finite_horizon,
    whittle_policy,
)
from .reward import default_model

EXACT_HORIZON_CAP = 20
MC_CHUNK = 1000

_DETERMINISTIC = {"whittle": whittle_policy, "greedy": greedy_policy}


@dataclass(frozen=True)
class EvalConfig:
    horizon: int
    runs: int | None = None  # None selects exact evaluation
    seed: int = 0
    convergence_pct: float = 0.01

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.runs is not None and self.runs < 1:
            raise ValueError("runs must be >= 1")

    @property
    def exact(self) -> bool:
        return self.runs is None


@dataclass
class ExperimentResult:
    instance: int
    n_users: int
    beta: float
    v_opt: float
    v_index: float
    v_greedy: float
    v_nofb: float
    pct_gain: float | None
    horizon_used: int
    converged: bool
    seed: int

    def as_row(self) -> dict:
        return asdict(self)


# -- exact evaluation ---------------------------------------------------------


def _open_loop_value(sys: DownlinkSystem, state, horizon: int) -> float:
    """Discounted reward when feedback is discarded.

    The schedule and the rate adaptation both run on open-loop beliefs, so
    the expected reward of a slot is ``R_I`` at the open-loop belief.
    """
    total, disc, s = 0.0, 1.0, state
    for _ in range(horizon):
        i = no_feedback_policy(sys, s)
        total += disc * sys.R(i, s[i])
        disc *= sys.beta
        s = open_loop_step(sys, s)
    return total


def evaluate_exact(sys: DownlinkSystem, policy, state, horizon: int, cap: int = EXACT_HORIZON_CAP) -> float:
    """Expected discounted reward over ``horizon`` slots, summed over the feedback tree.

    ``policy`` is a policy name or a callable ``(sys, state) -> user``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > cap:
        raise ValueError(f"horizon {horizon} exceeds exact-evaluation cap {cap}")
    state = check_state(sys, state)
    if policy == "optimal":
        return optimal_finite_horizon(sys, state, horizon, cap=max(cap, horizon))[0]
    if policy == "nofb":
        return _open_loop_value(sys, state, horizon)
    if policy == "random":
        choose = None
    elif callable(policy):
        choose = policy
    else:
        try:
            choose = _DETERMINISTIC[policy]
        except KeyError:
            raise ValueError(f"unknown policy {policy!r}") from None

    beta, n = sys.beta, sys.n
    p = [u.channel.p for u in sys.users]
    r = [u.channel.r for u in sys.users]
    memo = {}

    def branch(s, i, h):
        x = s[i]
        v = sys.R(i, x)
        if h > 1:
            qs = [sys.Q(j, y) for j, y in enumerate(s)]
            qs[i] = p[i]
            vh = value(tuple(qs), h - 1)
            qs[i] = r[i]
            vl = value(tuple(qs), h - 1)
            v += beta * (x * vh + (1.0 - x) * vl)
        return v

    def value(s, h):
        key = (s, h)
        v = memo.get(key)
        if v is None:
            if choose is None:
                v = sum(branch(s, i, h) for i in range(n)) / n
            else:
                v = branch(s, choose(sys, s), h)
            memo[key] = v
        return v

    return value(state, horizon)


# -- Monte Carlo ---------------------------------------------------------------


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _mc_chunk(args):
    sys, policy, state, horizon, seed, chunk, runs = args
    n = sys.n
    ch = [u.channel for u in sys.users]
    user_rng = [_stream(seed, chunk, 1, i) for i in range(n)]
    pol_rng = _stream(seed, chunk, 0)
    p = np.array([c.p for c in ch])
    r = np.array([c.r for c in ch])

    belief = np.tile(np.asarray(state, dtype=float), (runs, 1))
    high = np.column_stack([user_rng[i].random(runs) < state[i] for i in range(n)])
    open_loop = tuple(state)
    total = np.zeros(runs)
    disc = 1.0
    rows = np.arange(runs)
    for _ in range(horizon):
        if policy == "nofb":
            adapt = np.tile(np.asarray(open_loop), (runs, 1))
            act = np.full(runs, no_feedback_policy(sys, open_loop))
        else:
            adapt = belief
            if policy == "random":
                act = pol_rng.integers(n, size=runs)
            elif policy == "greedy":
                act = np.argmax(belief, axis=1)
            elif policy == "whittle":
                scores = np.empty_like(belief)
                for i in range(n):
                    vals, inv = np.unique(belief[:, i], return_inverse=True)
                    scores[:, i] = np.array([sys.W(i, float(v)) for v in vals])[inv]
                act = np.argmax(scores, axis=1)
            else:
                raise ValueError(f"policy {policy!r} is not supported by Monte Carlo evaluation")
        # realized rate of the pair chosen at the adaptation belief
        got = np.empty(runs)
        for i in range(n):
            sel = act == i
            if not sel.any():
                continue
            vals, inv = np.unique(adapt[sel, i], return_inverse=True)
            model = sys.users[i].reward
            pairs = [model.best_pair(float(v)) for v in vals]
            gh = np.array([q.gamma_h for q in pairs])[inv]
            gl = np.array([q.gamma_l for q in pairs])[inv]
            got[sel] = np.where(high[sel, i], gh, gl)
        total += disc * got
        disc *= sys.beta

        sched_high = high[rows, act]
        nxt = belief * p + (1.0 - belief) * r
        nxt[rows, act] = np.where(sched_high, p[act], r[act])
        belief = nxt
        open_loop = open_loop_step(sys, open_loop)
        high = np.column_stack(
            [user_rng[i].random(runs) < np.where(high[:, i], p[i], r[i]) for i in range(n)]
        )
    return total


def evaluate_monte_carlo(
    sys: DownlinkSystem, policy: str, state, horizon: int, runs: int, seed: int, threads: int = 1
) -> tuple[float, float]:
    """Sample mean and standard error of the discounted reward over ``runs`` episodes.

    Runs are cut into fixed chunks with their own pre-split random streams
    (and one stream per user within a chunk), so the result depends only
    on ``seed`` and ``runs``, never on ``threads``.
    """
    state = check_state(sys, state)
    chunks = []
    left, k = runs, 0
    while left > 0:
        m = min(MC_CHUNK, left)
        chunks.append((sys, policy, state, horizon, seed, k, m))
        left -= m
        k += 1
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(threads) as ex:
            parts = list(ex.map(_mc_chunk, chunks))
    else:
        parts = [_mc_chunk(c) for c in chunks]
    samples = np.concatenate(parts)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
    return mean, se


# -- metrics and protocols -------------------------------------------------------


def pct_gain(v_opt: float, v_index: float, v_nofb: float, eps: float = 1e-12) -> float | None:
    """Share of the feedback gain captured by the index policy, in percent.

    ``None`` when the optimum does not beat the no-feedback baseline.
    """
    den = v_opt - v_nofb
    if not den > eps:
        return None
    return (v_index - v_nofb) / den * 100.0


def make_system(pairs: Sequence[tuple[float, float]], delta: float, beta: float, reward=None) -> DownlinkSystem:
    model = reward if reward is not None else default_model(delta)
    return DownlinkSystem([User(MarkovChannel(p, r, delta), model) for p, r in pairs], beta)


def horizon_sweep(sys: DownlinkSystem, state, m_max: int) -> list[dict]:
    """Per-horizon exact values of the optimum and the index policy."""
    state = check_state(sys, state)
    dp = _OptimalDP(sys)
    rows = []
    for m in range(1, m_max + 1):
        if m > EXACT_HORIZON_CAP:
            raise ValueError(f"horizon {m} exceeds exact-evaluation cap")
        v_opt, _ = dp.solve(state, m)
        rows.append(
            {
                "horizon": m,
                "v_opt": v_opt,
                "v_index": evaluate_exact(sys, "whittle", state, m),
                "v_greedy": evaluate_exact(sys, "greedy", state, m),
                "v_nofb": evaluate_exact(sys, "nofb", state, m),
            }
        )
    return rows


def memory_sweep(n_users: int, p_grid, delta: float, beta: float, horizon: int, reward=None, state=None) -> list[dict]:
    """Identical users with ``r = 1 - p``; exact values per memory level ``p``."""
    rows = []
    for p in p_grid:
        sys = make_system([(p, 1.0 - p)] * n_users, delta, beta, reward)
        s = sys.steady_state() if state is None else tuple(state)
        v_opt = optimal_finite_horizon(sys, s, horizon, cap=EXACT_HORIZON_CAP)[0]
        rows.append(
            {
                "p": float(p),
                "r": 1.0 - float(p),
                "v_opt": v_opt,
                "v_index": evaluate_exact(sys, "whittle", s, horizon),
                "v_nofb": evaluate_exact(sys, "nofb", s, horizon),
            }
        )
    return rows


def converged_values(sys: DownlinkSystem, state, pct: float = 0.01, cap: int = 14) -> tuple[dict, int, bool]:
    """Exact values at the first horizon where every policy's value moves < ``pct``.

    One horizon is shared by all policies so they are compared on equal
    terms.  If ``cap`` is reached first the values at ``cap`` are returned
    with ``converged=False``.
    """
    state = check_state(sys, state)
    dp = _OptimalDP(sys)
    prev = None
    for m in range(1, cap + 1):
        cur = {
            "opt": dp.solve(state, m)[0],
            "index": evaluate_exact(sys, "whittle", state, m),
            "greedy": evaluate_exact(sys, "greedy", state, m),
            "nofb": evaluate_exact(sys, "nofb", state, m),
        }
        if prev is not None and all(abs(cur[k] - prev[k]) < pct * abs(prev[k]) for k in cur):
            return cur, m, True
        prev = cur
    return prev, cap, False


def _instance_params(seed: int, k: int, n_range, beta_range):
    rng = _stream(seed, k, 0)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    beta = float(rng.uniform(*beta_range))
    pairs = []
    for i in range(n):
        u = _stream(seed, k, 1, i)
        p, r = u.uniform(0.0, 1.0, 2)
        pairs.append((float(p), float(r)))
    return n, beta, pairs


def _table_row(args) -> ExperimentResult:
    k, seed, n_range, beta_range, delta, pct, reward = args
    n, beta, pairs = _instance_params(seed, k, n_range, beta_range)
    sys = make_system(pairs, delta, beta, reward)
    vals, m, ok = converged_values(sys, sys.steady_state(), pct)
    return ExperimentResult(
        instance=k,
        n_users=n,
        beta=beta,
        v_opt=vals["opt"],
        v_index=vals["index"],
        v_greedy=vals["greedy"],
        v_nofb=vals["nofb"],
        pct_gain=pct_gain(vals["opt"], vals["index"], vals["nofb"]),
        horizon_used=m,
        converged=ok,
        seed=seed,
    )


def instance_users(seed: int, k: int, n_range=(4, 5), beta_range=(0.45, 0.67)):
    """Replay the random draw of table row ``k``: ``(n, beta, [(p, r), ...])``."""
    return _instance_params(seed, k, n_range, beta_range)


def random_instance_table(
    count: int,
    n_range=(4, 5),
    beta_range=(0.45, 0.67),
    delta: float = 0.2,
    seed: int = 0,
    convergence_pct: float = 0.01,
    reward=None,
    threads: int = 1,
) -> list[ExperimentResult]:
    """Random systems compared at the shared convergence horizon.

    Row ``k`` draws from streams keyed by ``(seed, k)`` only, so rows are
    reproducible individually and independent of ``threads``.
    """
    jobs = [(k, seed, tuple(n_range), tuple(beta_range), delta, convergence_pct, reward) for k in range(count)]
    if threads > 1 and count > 1:
        with ProcessPoolExecutor(threads) as ex:
            return list(ex.map(_table_row, jobs))
    return [_table_row(j) for j in jobs]

