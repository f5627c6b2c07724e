"""Single-user subsidy problem: idle earns a constant ``omega`` per slot.

The optimal policy transmits iff the belief exceeds a threshold ``pi_star``.
Given the threshold, the values at the two reset beliefs ``p`` and ``r``
(the "anchors") have closed forms, and the value at any other belief follows
from them by counting idle slots until the threshold is crossed.

The threshold itself is found with :func:`value_iteration`, a grid-based
Bellman solver that knows nothing about thresholds or closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import BELIEF_EPS, MarkovChannel, hitting_time, q_iterate, q_step, steady_state
from .reward import RewardModel, eval_reward

DEFAULT_TOL = 1e-10


class ContractViolation(ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubsidyProblem:
    channel: MarkovChannel
    reward: RewardModel
    beta: float
    omega: float

    def __post_init__(self):
        if not (0.0 <= self.beta < 1.0):
            raise ValueError(f"beta must lie in [0, 1), got {self.beta!r}")
        if self.reward.delta != self.channel.delta:
            raise ValueError("reward model delta does not match channel delta")

    def R(self, pi):
        return eval_reward(self.reward, pi)


ALWAYS_ACTIVE = "always_active"
INTERIOR = "interior"
ALWAYS_IDLE = "always_idle"


@dataclass(frozen=True)
class ThresholdClass:
    """Optimal threshold of the subsidy problem.

    ``kind`` is one of ``always_active``, ``interior``, ``always_idle``;
    ``pi_star`` is only meaningful for ``interior``.
    """

    kind: str
    pi_star: float | None = None

    @property
    def level(self) -> float:
        """Threshold as a number: transmit iff belief > level."""
        if self.kind == ALWAYS_ACTIVE:
            return -math.inf
        if self.kind == ALWAYS_IDLE:
            return 1.0
        return self.pi_star

    @classmethod
    def interior(cls, pi_star: float) -> "ThresholdClass":
        return cls(INTERIOR, float(pi_star))


@dataclass(frozen=True)
class AnchorValues:
    v_p: float
    v_r: float


def truncation_horizon(beta: float, tol: float = DEFAULT_TOL) -> int:
    """Smallest T with beta**(T+1)/(1-beta) < tol (per-slot reward <= 1)."""
    if beta == 0.0:
        return 0
    return max(0, math.ceil(math.log(tol * (1.0 - beta)) / math.log(beta)))


def active_anchor_values(ch: MarkovChannel, reward: RewardModel, beta: float) -> AnchorValues:
    """Values at p and r of the policy that transmits in every slot.

    Solves the two linear Bellman equations
    ``V(x) = R(x) + beta*(x*V(p) + (1-x)*V(r))`` for x in {p, r}.
    """
    p, r = ch.p, ch.r
    Rp, Rr = eval_reward(reward, p), eval_reward(reward, r)
    a = np.array([[1.0 - beta * p, -beta * (1.0 - p)], [-beta * r, 1.0 - beta * (1.0 - r)]])
    vp, vr = np.linalg.solve(a, [Rp, Rr])
    return AnchorValues(float(vp), float(vr))


def always_active_value(prob: SubsidyProblem, start: float, tol: float = DEFAULT_TOL) -> float:
    """Discounted reward of transmitting in every slot from belief ``start``.

    After the first slot the belief is p or r according to the fed-back
    state, whose marginal law is the idle iterate, so slot ``t >= 1`` is
    worth ``Q^{t-1}(start)*R(p) + (1 - Q^{t-1}(start))*R(r)``.
    """
    ch, beta = prob.channel, prob.beta
    Rp, Rr = prob.R(ch.p), prob.R(ch.r)
    total = prob.R(start)
    x, disc = start, 1.0
    for _ in range(truncation_horizon(beta, tol)):
        disc *= beta
        total += disc * (x * Rp + (1.0 - x) * Rr)
        x = q_step(ch, x)
    return total


def open_loop_value(prob: SubsidyProblem, start: float, tol: float = DEFAULT_TOL) -> float:
    """``sum_t beta^t R(Q^t(start))``: transmit every slot, never use feedback.

    Equals :func:`always_active_value` only where R is affine on the
    reachable beliefs; with a strictly convex R it is smaller.
    """
    ch, beta = prob.channel, prob.beta
    total, x, disc = 0.0, start, 1.0
    for _ in range(truncation_horizon(beta, tol) + 1):
        total += disc * prob.R(x)
        disc *= beta
        x = q_step(ch, x)
    return total


def anchor_values(prob: SubsidyProblem, threshold: ThresholdClass, check: bool = False) -> AnchorValues:
    """Closed-form V(p), V(r) under the given optimal threshold.

    With ``check=True`` the threshold is verified to be self-consistent:
    the active and idle values must balance at an interior threshold.
    """
    ch, beta, w = prob.channel, prob.beta, prob.omega
    if threshold.kind == ALWAYS_IDLE and w < 1.0:
        raise ContractViolation(f"always-idle threshold needs omega >= 1, got {w}")
    if threshold.kind == ALWAYS_ACTIVE and w > ch.delta:
        raise ContractViolation(f"always-active threshold needs omega <= delta, got {w}")
    t = threshold.level
    p, r = ch.p, ch.r
    idle = w / (1.0 - beta)
    R = prob.R
    if ch.positive:
        pi0 = steady_state(ch)
        if t >= p:
            out = AnchorValues(idle, idle)
        elif t >= pi0 - BELIEF_EPS:  # matches hitting_time
            vp = (beta * (1.0 - p) * w + (1.0 - beta) * R(p)) / ((1.0 - beta) * (1.0 - beta * p))
            out = AnchorValues(vp, idle)
        elif t >= r:
            L = hitting_time(ch, r, t).slots
            x = q_iterate(ch, r, L)
            bL = beta**L
            num = (1.0 - bL) * (1.0 - beta * p) * w + (1.0 - beta) * bL * (
                (1.0 - beta * p) * R(x) + beta * x * R(p)
            )
            den = (1.0 - beta) * (1.0 - beta * p) * (1.0 - bL * beta) + (1.0 - beta) ** 2 * x * bL * beta
            vr = num / den
            vp = (R(p) + beta * (1.0 - p) * vr) / (1.0 - beta * p)
            out = AnchorValues(vp, vr)
        else:
            out = active_anchor_values(ch, prob.reward, beta)
    else:
        qp = q_step(ch, p)
        if not qp >= p:
            raise ContractViolation(f"expected Q(p) >= p for p <= r, got Q(p)={qp}, p={p}")
        if t >= r:
            out = AnchorValues(idle, idle)
        elif t >= qp:
            vr = (beta * r * w + (1.0 - beta) * R(r)) / ((1.0 - beta) * (1.0 - beta * (1.0 - r)))
            out = AnchorValues(idle, vr)
        elif t >= p:
            a = 1.0 - beta * (1.0 - r)
            b = 1.0 - beta**2 * qp
            d = a * b - beta**3 * r * (1.0 - qp)
            vp = (a * (w + beta * R(qp)) + beta**2 * (1.0 - qp) * R(r)) / d
            vr = (beta * r * w + beta**2 * r * R(qp) + b * R(r)) / d
            out = AnchorValues(vp, vr)
        else:
            out = active_anchor_values(ch, prob.reward, beta)
    if check and threshold.kind == INTERIOR:
        gap = active_value(prob, out, t) - idle_value(prob, threshold, out, t)
        scale = max(1.0, abs(idle))
        if abs(gap) > 1e-6 * scale:
            raise ContractViolation(f"threshold {t} does not balance active and idle values (gap {gap:.3g})")
    return out


def active_value(prob: SubsidyProblem, anchors: AnchorValues, pi: float) -> float:
    """Transmit now, act optimally afterwards."""
    return prob.R(pi) + prob.beta * (pi * anchors.v_p + (1.0 - pi) * anchors.v_r)


def idle_value(prob: SubsidyProblem, threshold: ThresholdClass, anchors: AnchorValues, pi: float) -> float:
    """Stay idle now, act optimally afterwards."""
    return prob.omega + prob.beta * value_at(prob, threshold, anchors, q_step(prob.channel, pi))


def value_at(prob: SubsidyProblem, threshold: ThresholdClass, anchors: AnchorValues, pi: float) -> float:
    """V(pi) from the anchors: idle ``k`` slots, then transmit."""
    beta, w = prob.beta, prob.omega
    L = hitting_time(prob.channel, pi, threshold.level)
    if not L.finite:
        return w / (1.0 - beta)
    k = L.slots
    x = q_iterate(prob.channel, pi, k)
    bk = beta**k
    return w * (1.0 - bk) / (1.0 - beta) + bk * active_value(prob, anchors, x)


# -- value-iteration oracle ---------------------------------------------------


def _orbit(ch: MarkovChannel, x: float, depth: int) -> list[float]:
    pi0 = steady_state(ch)
    out = [x]
    for _ in range(depth):
        x = q_step(ch, x)
        out.append(x)
        if abs(x - pi0) < 1e-15:
            break
    return out


@dataclass
class ValueTable:
    """Converged Bellman values on a belief grid.

    Grid nodes include the idle orbits of p, r and any requested points, so
    values at those nodes never rely on interpolation beyond the orbit tail.
    """

    prob: SubsidyProblem
    nodes: np.ndarray
    values: np.ndarray
    sweeps: int
    residual: float
    _ip: int = field(repr=False, default=0)
    _ir: int = field(repr=False, default=0)

    @property
    def v_p(self) -> float:
        return float(self.values[self._ip])

    @property
    def v_r(self) -> float:
        return float(self.values[self._ir])

    @property
    def anchors(self) -> AnchorValues:
        return AnchorValues(self.v_p, self.v_r)

    def interp(self, x: float) -> float:
        return float(np.interp(x, self.nodes, self.values))

    def value(self, x: float, depth: int | None = None) -> float:
        """Bellman value at an arbitrary belief, recursing through idle steps."""
        return max(self.active(x), self.idle(x, depth))

    def active(self, x: float) -> float:
        return active_value(self.prob, self.anchors, x)

    def idle(self, x: float, depth: int | None = None) -> float:
        """Idle value at ``x``, unrolling the idle orbit before interpolating."""
        beta, w = self.prob.beta, self.prob.omega
        if depth is None:
            depth = truncation_horizon(beta, 1e-14) if beta > 0 else 0
        orbit = [q_step(self.prob.channel, x)]
        for _ in range(depth):
            orbit.append(q_step(self.prob.channel, orbit[-1]))
        v = self.interp(orbit[-1])
        vp, vr = self.v_p, self.v_r
        for y in reversed(orbit[:-1]):
            act = self.prob.R(y) + beta * (y * vp + (1.0 - y) * vr)
            v = max(act, w + beta * v)
        return w + beta * v

    def gap(self, x: float) -> float:
        """Active minus idle value at ``x``."""
        return self.active(x) - self.idle(x)


def value_iteration(
    prob: SubsidyProblem,
    grid_size: int = 1001,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = 200_000,
    extra_points=(),
    v_init: ValueTable | None = None,
) -> ValueTable:
    """Iterate the Bellman operator on a belief grid until ``tol``-accurate.

    Stops when the sup-norm step is at most ``(1-beta)/beta * tol``, which
    bounds the distance to the fixed point by ``tol``.  Idle lookups at
    ``Q(x)`` are exact on orbit nodes and linearly interpolated elsewhere.
    """
    if grid_size < 101:
        raise ValueError("grid_size must be at least 101")
    ch, beta, w = prob.channel, prob.beta, prob.omega
    depth = truncation_horizon(beta, 1e-14) + 1 if beta > 0 else 1
    pts = set(np.linspace(0.0, 1.0, grid_size).tolist())
    pi0 = steady_state(ch)
    pts.update([ch.p, ch.r, pi0, q_step(ch, ch.p), q_step(ch, ch.r)])
    for x in (ch.p, ch.r, *extra_points):
        pts.update(_orbit(ch, float(x), depth))
    nodes = np.array(sorted(pts))
    n = len(nodes)
    pos = {x: i for i, x in enumerate(nodes.tolist())}
    qx = np.array([q_step(ch, x) for x in nodes.tolist()])
    left = np.empty(n, dtype=np.int64)
    wt = np.empty(n)
    for i, y in enumerate(qx.tolist()):
        j = pos.get(y)
        if j is not None:
            left[i], wt[i] = j, 0.0
        else:
            j = int(np.searchsorted(nodes, y, side="right")) - 1
            j = min(max(j, 0), n - 2)
            left[i] = j
            wt[i] = (y - nodes[j]) / (nodes[j + 1] - nodes[j])
    right = np.minimum(left + 1, n - 1)
    ip, ir = pos[ch.p], pos[ch.r]
    Rx = eval_reward(prob.reward, nodes)

    if v_init is not None:
        v = np.array([v_init.interp(x) for x in nodes])
    else:
        v = np.zeros(n)
    stop = (1.0 - beta) / beta * tol if beta > 0 else math.inf
    diff = math.inf
    for sweep in range(1, max_sweeps + 1):
        act = Rx + beta * (nodes * v[ip] + (1.0 - nodes) * v[ir])
        idl = w + beta * (v[left] * (1.0 - wt) + v[right] * wt)
        new = np.maximum(act, idl)
        diff = float(np.max(np.abs(new - v)))
        v = new
        if diff <= stop:
            return ValueTable(prob, nodes, v, sweep, diff, ip, ir)
    raise ConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps (step {diff:.3g})")


def solve_threshold(prob: SubsidyProblem, tol: float = 1e-8, table: ValueTable | None = None) -> ThresholdClass:
    """Interior threshold by bisection on the sign of active minus idle value."""
    if not (prob.channel.delta < prob.omega < 1.0):
        raise ValueError("solve_threshold needs delta < omega < 1")
    if table is None:
        table = value_iteration(prob)
    lo, hi = 0.0, 1.0
    if table.gap(lo) > 0 or table.gap(hi) <= 0:
        raise ConvergenceError("active-idle gap has no sign change on [0, 1]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if table.gap(mid) > 0:
            hi = mid
        else:
            lo = mid
    return ThresholdClass.interior(0.5 * (lo + hi))


def classify_threshold(prob: SubsidyProblem, **kw) -> ThresholdClass:
    if prob.omega >= 1.0:
        return ThresholdClass(ALWAYS_IDLE)
    if prob.omega <= prob.channel.delta:
        return ThresholdClass(ALWAYS_ACTIVE)
    return solve_threshold(prob, **kw)
