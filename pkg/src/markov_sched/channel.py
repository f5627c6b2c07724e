"""Two-state (Gilbert-Elliott) Markov channel and belief dynamics.

A channel is described by ``p = P(h -> h)``, ``r = P(l -> h)`` and the rate
``delta`` supported in the low state (the high state supports rate 1).  The
scheduler tracks a belief ``pi``, the probability the channel is currently
in the high state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

# rounding slack absorbed by clamping; anything larger is a logic error
BELIEF_EPS = 1e-12


def _clamp(x: float) -> float:
    if x < 0.0:
        assert x > -BELIEF_EPS, x
        return 0.0
    if x > 1.0:
        assert x < 1.0 + BELIEF_EPS, x
        return 1.0
    return x


def _check_prob(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")


@dataclass(frozen=True)
class MarkovChannel:
    """Transition pair ``(p, r)`` and low-state rate ``delta`` of one user."""

    p: float
    r: float
    delta: float = 0.0

    def __post_init__(self):
        _check_prob("p", self.p)
        _check_prob("r", self.r)
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")
        if self.p == 1.0 and self.r == 0.0:
            raise ValueError("(p, r) = (1, 0) has no unique steady state")

    @property
    def positive(self) -> bool:
        """True for a positively correlated chain (p > r); p == r counts as negative."""
        return self.p > self.r

    @property
    def steady_state(self) -> float:
        return steady_state(self)


@dataclass(frozen=True)
class HittingTime:
    """Number of idle slots until the belief first exceeds a threshold.

    ``slots is None`` encodes an infinite hitting time.
    """

    slots: int | None

    @property
    def finite(self) -> bool:
        return self.slots is not None

    def __repr__(self):
        return "Infinite" if self.slots is None else f"Finite({self.slots})"


INFINITE = HittingTime(None)


def feedback_update(ch: MarkovChannel, observed_high: bool) -> float:
    """Belief after a scheduled slot whose channel state was fed back."""
    return ch.p if observed_high else ch.r


def q_step(ch: MarkovChannel, pi: float) -> float:
    """One idle step of the belief: ``pi*p + (1-pi)*r``."""
    return _clamp(pi * ch.p + (1.0 - pi) * ch.r)


def q_iterate(ch: MarkovChannel, pi: float, t: int) -> float:
    """Closed form of ``t`` idle steps from ``pi``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return pi
    d = ch.p - ch.r
    s = 1.0 + ch.r - ch.p
    return _clamp((ch.r - d**t * (ch.r - s * pi)) / s)


def steady_state(ch: MarkovChannel) -> float:
    return ch.r / (1.0 + ch.r - ch.p)


def hitting_time(ch: MarkovChannel, pi: float, threshold: float) -> HittingTime:
    """Idle slots until the belief, started at ``pi``, first exceeds ``threshold``.

    Follows the closed-form case split for each correlation sign.  The
    floor-log count of the positive branch is checked against the iterates
    and nudged by one slot if floating point put it on the wrong side.
    """
    if pi > threshold:
        return HittingTime(0)
    if not ch.positive:
        return HittingTime(1) if q_step(ch, pi) > threshold else INFINITE
    pi0 = steady_state(ch)
    # iterates approach pi0 from below and never pass it; the slack absorbs
    # rounding in pi0 itself
    if threshold >= pi0 - BELIEF_EPS:
        return INFINITE
    s = 1.0 + ch.r - ch.p
    ratio = (ch.r - s * threshold) / (ch.r - s * pi)
    k = max(1, math.floor(math.log(ratio) / math.log(ch.p - ch.r)) + 1)
    # confirm against stepped iterates, which are what a scheduler sees
    prev = pi
    for _ in range(k - 1):
        prev = q_step(ch, prev)
    while k > 1 and prev > threshold:
        k -= 1
        prev = pi
        for _ in range(k - 1):
            prev = q_step(ch, prev)
    cur = q_step(ch, prev)
    while cur <= threshold:
        nxt = q_step(ch, cur)
        if nxt == cur:
            return INFINITE
        k, cur = k + 1, nxt
    return HittingTime(k)


def hitting_time_brute(ch: MarkovChannel, pi: float, threshold: float, cap: int = 10_000) -> HittingTime:
    """Hitting time by stepping ``q_step`` up to ``cap`` times."""
    x = pi
    if ch.positive and x <= threshold and threshold >= steady_state(ch) - BELIEF_EPS:
        return INFINITE
    for t in range(cap + 1):
        if x > threshold:
            return HittingTime(t)
        x = q_step(ch, x)
    return INFINITE
