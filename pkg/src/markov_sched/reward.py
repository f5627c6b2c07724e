"""Expected immediate reward R(pi) as a pointwise max of linear payoffs.

Each estimator / rate-adapter strategy earns ``gamma_h`` on average when the
channel is high and ``gamma_l`` when it is low, so at belief ``pi`` it is worth
``pi*gamma_h + (1-pi)*gamma_l``.  The best strategy is picked per slot, which
makes R convex and increasing.  Two strategies are always available: send at
the safe rate ``delta`` (``(delta, delta)``) and send at rate 1 blindly
(``(1, 0)``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class PayoffPair:
    gamma_h: float
    gamma_l: float


@dataclass(frozen=True)
class RewardModel:
    delta: float
    pairs: tuple[PayoffPair, ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("reward model needs at least one payoff pair")
        for q in self.pairs:
            _check_pair(self.delta, q)
        if PayoffPair(self.delta, self.delta) not in self.pairs or PayoffPair(1.0, 0.0) not in self.pairs:
            raise ValueError("reward model must contain the (delta, delta) and (1, 0) pairs")
        gh = np.array([q.gamma_h for q in self.pairs])
        gl = np.array([q.gamma_l for q in self.pairs])
        object.__setattr__(self, "_gh", gh)
        object.__setattr__(self, "_gl", gl)

    def __call__(self, pi):
        return eval_reward(self, pi)

    def best_pair(self, pi: float) -> PayoffPair:
        """The payoff pair attaining R(pi); lowest position wins ties."""
        vals = self._gl + pi * (self._gh - self._gl)
        return self.pairs[int(np.argmax(vals))]


def _check_pair(delta: float, q: PayoffPair) -> None:
    if not (0.0 <= q.gamma_h <= 1.0):
        raise ValueError(f"gamma_h must lie in [0, 1], got {q.gamma_h!r}")
    if not (0.0 <= q.gamma_l <= delta):
        raise ValueError(f"gamma_l must lie in [0, delta={delta}], got {q.gamma_l!r}")


def make_estimation_model(delta: float, estimator_pairs: Iterable = ()) -> RewardModel:
    """Build a reward model from extra (gamma_h, gamma_l) pairs.

    The two mandatory pairs are prepended; duplicates are dropped while
    keeping first-seen order so the model is deterministic.
    """
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")
    pairs = [PayoffPair(delta, delta), PayoffPair(1.0, 0.0)]
    for q in estimator_pairs:
        if not isinstance(q, PayoffPair):
            q = PayoffPair(float(q[0]), float(q[1]))
        _check_pair(delta, q)
        if q not in pairs:
            pairs.append(q)
    return RewardModel(delta, tuple(pairs))


TANGENT_POINTS = (0.0, 0.25, 0.5)


def default_model(delta: float) -> RewardModel:
    """Mandatory pairs plus tangents of a smooth convex rate curve.

    The curve ``f(pi) = delta + c*pi + c*pi**2`` with ``c = (1-delta)/2``
    runs from ``delta`` to 1 and has positive slope at 0, so R increases
    strictly: some belief in the high state always buys some rate, as it
    does with channel estimation.  Tangents at ``TANGENT_POINTS`` give the
    extra pairs; a tangent whose low-state rate would be negative is skipped.
    """
    c = (1.0 - delta) / 2.0
    pairs = []
    for a in TANGENT_POINTS:
        gl = delta - c * a * a
        if gl >= 0.0:
            pairs.append((gl + c + 2.0 * c * a, gl))
    return make_estimation_model(delta, pairs)


def eval_reward(model: RewardModel, pi, delta: float | None = None):
    """R(pi); scalar in, float out, array in, array out.

    Each pair is evaluated as ``gamma_l + pi*(gamma_h - gamma_l)`` so the
    mandatory pairs give exactly ``delta`` and ``pi``, and every pair is
    nondecreasing in ``pi`` even after rounding.

    ``delta``, when given, must match the model (guards against pairing a
    model with the wrong channel).
    """
    if delta is not None and delta != model.delta:
        raise ValueError(f"reward model delta {model.delta} does not match channel delta {delta}")
    if np.ndim(pi) == 0:
        pi = float(pi)
        best = -1.0
        for q in model.pairs:
            v = q.gamma_l + pi * (q.gamma_h - q.gamma_l)
            if v > best:
                best = v
        return best
    x = np.asarray(pi, dtype=float)[..., None]
    return np.max(model._gl + x * (model._gh - model._gl), axis=-1)


def lower_bound(delta, pi):
    return np.maximum(delta, pi) if np.ndim(pi) else max(delta, pi)


def upper_bound(delta, pi):
    return (1.0 - delta) * pi + delta
