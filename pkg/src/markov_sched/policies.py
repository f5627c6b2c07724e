"""Scheduling policies for N users sharing one downlink slot.

The system state is the tuple of per-user beliefs.  Every policy picks one
user per slot; ties always go to the lowest user index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import MarkovChannel, feedback_update, q_step, steady_state
from .index import whittle_index
from .reward import RewardModel, eval_reward

POLICY_NAMES = ("whittle", "greedy", "random", "nofb", "optimal")

DP_HORIZON_CAP = 14


@dataclass(frozen=True)
class User:
    channel: MarkovChannel
    reward: RewardModel

    def __post_init__(self):
        if self.reward.delta != self.channel.delta:
            raise ValueError("reward model delta does not match channel delta")


@dataclass
class DownlinkSystem:
    """Users plus the discount factor.

    Reward, idle-step and index evaluations are cached per user and belief;
    beliefs reachable from a fixed start form a small set of floats, so the
    caches stay small.
    """

    users: tuple
    beta: float
    _r: list = field(init=False, repr=False)
    _q: list = field(init=False, repr=False)
    _w: list = field(init=False, repr=False)

    def __post_init__(self):
        self.users = tuple(self.users)
        if not self.users:
            raise ValueError("need at least one user")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError(f"beta must lie in [0, 1), got {self.beta!r}")
        n = len(self.users)
        self._r = [{} for _ in range(n)]
        self._q = [{} for _ in range(n)]
        self._w = [{} for _ in range(n)]

    @property
    def n(self) -> int:
        return len(self.users)

    def R(self, i: int, pi: float) -> float:
        c = self._r[i]
        v = c.get(pi)
        if v is None:
            v = c[pi] = eval_reward(self.users[i].reward, pi)
        return v

    def Q(self, i: int, pi: float) -> float:
        c = self._q[i]
        v = c.get(pi)
        if v is None:
            v = c[pi] = q_step(self.users[i].channel, pi)
        return v

    def W(self, i: int, pi: float) -> float:
        c = self._w[i]
        v = c.get(pi)
        if v is None:
            u = self.users[i]
            v = c[pi] = whittle_index(u.channel, u.reward, self.beta, pi)
        return v

    def steady_state(self) -> tuple:
        return tuple(steady_state(u.channel) for u in self.users)


def check_state(sys: DownlinkSystem, state: Sequence[float]) -> tuple:
    state = tuple(float(x) for x in state)
    if len(state) != sys.n:
        raise ValueError(f"state has {len(state)} beliefs for {sys.n} users")
    if any(not (0.0 <= x <= 1.0) for x in state):
        raise ValueError("beliefs must lie in [0, 1]")
    return state


def transition(sys: DownlinkSystem, state, scheduled: int, observed_high: bool) -> tuple:
    """Next belief vector: feedback for the scheduled user, idle step for the rest."""
    if not 0 <= scheduled < sys.n:
        raise IndexError(f"user {scheduled} out of range")
    return tuple(
        feedback_update(sys.users[i].channel, observed_high) if i == scheduled else sys.Q(i, x)
        for i, x in enumerate(state)
    )


def _argmax(scores) -> int:
    best, arg = -np.inf, 0
    for i, s in enumerate(scores):
        if s > best:
            best, arg = s, i
    return arg


def whittle_policy(sys: DownlinkSystem, state) -> int:
    return _argmax(sys.W(i, x) for i, x in enumerate(state))


def greedy_policy(sys: DownlinkSystem, state) -> int:
    return _argmax(state)


def random_policy(sys: DownlinkSystem, state, rng: np.random.Generator) -> int:
    return int(rng.integers(sys.n))


def no_feedback_policy(sys: DownlinkSystem, open_loop_beliefs) -> int:
    """Best immediate reward under beliefs that never see feedback."""
    return _argmax(sys.R(i, x) for i, x in enumerate(open_loop_beliefs))


def open_loop_step(sys: DownlinkSystem, open_loop_beliefs) -> tuple:
    return tuple(sys.Q(i, x) for i, x in enumerate(open_loop_beliefs))


def optimal_finite_horizon(sys: DownlinkSystem, state, horizon: int, cap: int = DP_HORIZON_CAP):
    """Exact ``horizon``-slot optimum by dynamic programming over feedback outcomes.

    Returns ``(value, first_action)``.  Sub-problems are memoized on the
    belief vector; histories that lead to the same vector share work.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > cap:
        raise ValueError(f"horizon {horizon} exceeds cap {cap}")
    state = check_state(sys, state)
    value, act = _OptimalDP(sys).solve(state, horizon)
    return value, act


class _OptimalDP:
    def __init__(self, sys: DownlinkSystem):
        self.sys = sys
        self.n = sys.n
        self.beta = sys.beta
        self.memo = {}
        self.p = [u.channel.p for u in sys.users]
        self.r = [u.channel.r for u in sys.users]

    def myopic(self, s):
        R = self.sys.R
        return max(R(i, x) for i, x in enumerate(s))

    def value(self, s, h):
        if h == 1:
            return self.myopic(s)
        key = (s, h)
        v = self.memo.get(key)
        if v is None:
            v = self.memo[key] = self._best(s, h)[0]
        return v

    def _best(self, s, h):
        sys, beta = self.sys, self.beta
        qs = [sys.Q(i, x) for i, x in enumerate(s)]
        best, arg = -np.inf, 0
        for i, x in enumerate(s):
            v = sys.R(i, x)
            if h > 1:
                qs[i] = self.p[i]
                vh = self.value(tuple(qs), h - 1)
                qs[i] = self.r[i]
                vl = self.value(tuple(qs), h - 1)
                qs[i] = sys.Q(i, x)
                v += beta * (x * vh + (1.0 - x) * vl)
            if v > best:
                best, arg = v, i
        return best, arg

    def solve(self, s, h):
        return self._best(s, h)
