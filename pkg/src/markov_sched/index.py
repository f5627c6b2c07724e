"""Whittle index of a single user: closed form, bisection oracle, checks.

At belief ``pi`` the index is the subsidy that makes transmitting and idling
equally good when ``pi`` itself is the optimal threshold.  With the
threshold pinned at ``pi`` every value the balance equation needs is affine
in the subsidy, which gives the closed forms below, one per belief region.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import BELIEF_EPS, MarkovChannel, hitting_time, q_iterate, q_step, steady_state
from .reward import RewardModel, eval_reward
from .subsidy import (
    SubsidyProblem,
    ThresholdClass,
    active_anchor_values,
    anchor_values,
    solve_threshold,
    value_at,
    value_iteration,
)


class IndexBranch(enum.Enum):
    POS_HIGH = "pos_high"  # pi >= p
    POS_MID = "pos_mid"  # pi0 <= pi < p
    POS_LOW_MID = "pos_low_mid"  # r <= pi < pi0
    POS_LOW = "pos_low"  # pi < r
    NEG_HIGH = "neg_high"  # pi >= r
    NEG_UPPER = "neg_upper"  # Q(p) <= pi < r
    NEG_MID = "neg_mid"  # pi0 <= pi < Q(p)
    NEG_LOW_MID = "neg_low_mid"  # p <= pi < pi0
    NEG_LOW = "neg_low"  # pi < p


@dataclass(frozen=True)
class IndexQuery:
    channel: MarkovChannel
    reward: RewardModel
    beta: float
    pi: float


def index_branch(ch: MarkovChannel, pi: float) -> IndexBranch:
    pi0 = steady_state(ch)
    if ch.positive:
        if pi >= ch.p:
            return IndexBranch.POS_HIGH
        # same slack as hitting_time, so beliefs that round onto pi0 agree
        if pi >= pi0 - BELIEF_EPS:
            return IndexBranch.POS_MID
        if pi >= ch.r:
            return IndexBranch.POS_LOW_MID
        return IndexBranch.POS_LOW
    if pi >= ch.r:
        return IndexBranch.NEG_HIGH
    qp = q_step(ch, ch.p)
    if pi >= qp:
        return IndexBranch.NEG_UPPER
    if pi >= pi0:
        return IndexBranch.NEG_MID
    if pi >= ch.p:
        return IndexBranch.NEG_LOW_MID
    return IndexBranch.NEG_LOW


def whittle_index(ch: MarkovChannel, reward: RewardModel, beta: float, pi: float) -> float:
    """Closed-form Whittle index W(pi), in [delta, 1]."""
    if reward.delta != ch.delta:
        raise ValueError("reward model delta does not match channel delta")
    w = _closed_form(ch, reward, beta, pi)
    lo, hi = ch.delta, 1.0
    if w < lo - BELIEF_EPS or w > hi + BELIEF_EPS:
        raise ArithmeticError(f"index {w} outside [{lo}, {hi}] at pi={pi}")
    return min(max(w, lo), hi)


def _closed_form(ch: MarkovChannel, reward: RewardModel, beta: float, pi: float) -> float:
    R = lambda x: eval_reward(reward, x)  # noqa: E731
    p, r, b = ch.p, ch.r, beta
    branch = index_branch(ch, pi)
    if branch in (IndexBranch.POS_HIGH, IndexBranch.NEG_HIGH):
        return R(pi)
    if branch is IndexBranch.POS_MID:
        return (b * pi * R(p) + (1 - b * p) * R(pi)) / (1 + b * pi - b * p)
    if branch is IndexBranch.NEG_UPPER:
        a = 1 - b * (1 - r)
        num = (1 - b) * a * R(pi) + b * (1 - b) * (1 - pi) * R(r)
        return num / ((1 - b * pi) * a - b**2 * (1 - pi) * r)

    # remaining branches: Q(pi) is active, so the balance reads
    # W = R(pi) - b R(q) + c1 V(p) + c2 V(r)
    q = q_step(ch, pi)
    c1 = b * (pi - b * q)
    c2 = b * ((1 - pi) - b * (1 - q))
    head = R(pi) - b * R(q)
    if branch in (IndexBranch.POS_LOW, IndexBranch.NEG_LOW):
        act = active_anchor_values(ch, reward, b)
        return head + c1 * act.v_p + c2 * act.v_r
    if branch is IndexBranch.POS_LOW_MID:
        # r idles L slots then transmits at x; p transmits.
        L = hitting_time(ch, r, pi).slots
        x = q_iterate(ch, r, L)
        bL = b**L
        gamma = (1 - b) * (1 - b * p) * (1 - bL * b) + (1 - b) ** 2 * x * bL * b
        lam = (1 - b) * bL * ((1 - b * p) * R(x) + b * x * R(p))
        k = c2 + c1 * b * (1 - p) / (1 - b * p)
        e = head + c1 * R(p) / (1 - b * p)
        return (e * gamma + k * lam) / (gamma - k * (1 - bL) * (1 - b * p))
    # NEG_MID / NEG_LOW_MID: p idles one slot then transmits at Q(p); r transmits.
    qp = q_step(ch, p)
    a = 1 - b * (1 - r)
    delta_ = a * (1 - b**2 * qp) - b**3 * r * (1 - qp)
    omega_ = b * a * R(qp) + b**2 * (1 - qp) * R(r)
    upsilon = b**2 * r * R(qp) + (1 - b**2 * qp) * R(r)
    if branch is IndexBranch.NEG_MID:
        num = (1 - b) * R(pi) * delta_ + b * (1 - b) * pi * omega_ + b * (1 - b) * (1 - pi) * upsilon
        den = delta_ - b * (1 - b) * a * pi - (1 - b) * b**2 * r * (1 - pi)
        return num / den
    num = head * delta_ + c1 * omega_ + c2 * upsilon
    den = delta_ - c1 * a - c2 * b * r
    return num / den


def whittle_index_q(q: IndexQuery) -> float:
    return whittle_index(q.channel, q.reward, q.beta, q.pi)


def index_residual(ch: MarkovChannel, reward: RewardModel, beta: float, pi: float, w: float) -> float:
    """Imbalance of the index equation at subsidy ``w`` with threshold ``pi``.

    ``w + beta V(Q(pi)) - R(pi) - beta (pi V(p) + (1-pi) V(r))``, all values
    computed from the closed-form anchors.  Zero at the true index.
    """
    prob = SubsidyProblem(ch, reward, beta, w)
    thr = ThresholdClass.interior(pi)
    anchors = anchor_values(prob, thr)
    idle = w + beta * value_at(prob, thr, anchors, q_step(ch, pi))
    act = prob.R(pi) + beta * (pi * anchors.v_p + (1 - pi) * anchors.v_r)
    return idle - act


def index_oracle(
    ch: MarkovChannel,
    reward: RewardModel,
    beta: float,
    pi: float,
    tol: float = 1e-9,
    grid_size: int = 101,
) -> float:
    """Whittle index by bisection over the subsidy, using value iteration only.

    Returns the smallest subsidy in ``[delta, 1]`` at which idling is at
    least as good as transmitting at ``pi``; an endpoint is returned when
    the sign never changes.
    """

    def gap(w, warm):
        prob = SubsidyProblem(ch, reward, beta, w)
        tab = value_iteration(prob, grid_size=grid_size, extra_points=(pi,), v_init=warm)
        return -tab.gap(pi), tab

    lo, hi = ch.delta, 1.0
    g_lo, warm = gap(lo, None)
    if g_lo >= 0:
        return lo
    g_hi, _ = gap(hi, warm)
    if g_hi < 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g, warm = gap(mid, warm)
        if g >= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class IndexabilityReport:
    omegas: list
    thresholds: list
    ok: bool
    violation: tuple | None = None


def indexability_scan(ch: MarkovChannel, reward: RewardModel, beta: float, omega_grid, tol: float = 1e-7):
    """Threshold at each subsidy; check it is strictly increasing.

    Subsidies at or below ``delta`` give an always-active threshold and are
    recorded as ``None`` and skipped in the check.
    """
    omegas = [float(w) for w in omega_grid]
    if any(b <= a for a, b in zip(omegas, omegas[1:])):
        raise ValueError("omega_grid must be strictly increasing")
    thr = []
    for w in omegas:
        if w <= ch.delta:
            thr.append(None)
            continue
        if w >= 1.0:
            thr.append(1.0)
            continue
        thr.append(solve_threshold(SubsidyProblem(ch, reward, beta, w)).pi_star)
    pairs = [(w, t) for w, t in zip(omegas, thr) if t is not None]
    for (w1, t1), (w2, t2) in zip(pairs, pairs[1:]):
        if not t2 - t1 > tol:
            return IndexabilityReport(omegas, thr, False, ((w1, t1), (w2, t2)))
    return IndexabilityReport(omegas, thr, True)


def index_trace(ch: MarkovChannel, reward: RewardModel, beta: float, pi0: float, horizon: int):
    """``(t, W(Q^t(pi0)))`` for t = 0..horizon along the idle trajectory."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    out, x = [], pi0
    for t in range(horizon + 1):
        out.append((t, whittle_index(ch, reward, beta, x)))
        x = q_step(ch, x)
    return out


def index_curve(ch: MarkovChannel, reward: RewardModel, beta: float, n: int = 1001):
    grid = np.linspace(0.0, 1.0, n)
    return grid, np.array([whittle_index(ch, reward, beta, float(x)) for x in grid])


def trace_envelope(trace, center: float) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower envelopes of a trace around ``center``.

    For an oscillating trace the values above and below ``center`` form two
    interleaved subsequences; each envelope is the distance of one side,
    indexed by its own slot numbers.  Points on ``center`` count for both.
    """
    d = np.array([w for _, w in trace]) - center
    return np.abs(d[d >= 0]), np.abs(d[d <= 0])


def trace_shape_ok(trace, center: float, positive: bool, tol: float = 1e-12) -> bool:
    """Monotone for positive correlation; for negative correlation the sign
    alternates and each side's distance to ``center`` shrinks."""
    w = np.array([v for _, v in trace])
    if positive:
        d = np.diff(w)
        return bool(np.all(d >= -tol) or np.all(d <= tol))
    d = w - center
    nz = d[np.abs(d) > tol]
    if np.any(nz[1:] * nz[:-1] > 0):
        return False
    hi, lo = trace_envelope(trace, center)
    return bool(np.all(np.diff(hi) <= tol) and np.all(np.diff(lo) <= tol))
