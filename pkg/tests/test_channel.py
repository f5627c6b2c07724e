
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from markov_sched.channel import (
    INFINITE,
    HittingTime,
    MarkovChannel,
    feedback_update,
    hitting_time,
    hitting_time_brute,
    q_iterate,
    q_step,
    steady_state,
)

probs = st.floats(0.0, 1.0, allow_nan=False)
inner = st.floats(0.01, 0.99, allow_nan=False)


def _iterate(p, r, pi, t):
    for _ in range(t):
        pi = pi * p + (1 - pi) * r
    return pi


class TestMarkovChannel:
    def test_rejects_out_of_range(self):
        for p, r in [(-0.1, 0.5), (0.5, 1.1), (float("nan"), 0.5)]:
            with pytest.raises(ValueError):
                MarkovChannel(p, r)

    def test_rejects_absorbing_pair(self):
        with pytest.raises(ValueError):
            MarkovChannel(1.0, 0.0)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            MarkovChannel(0.5, 0.5, 1.0)

    def test_correlation_sign(self):
        assert MarkovChannel(0.8, 0.2).positive
        assert not MarkovChannel(0.2, 0.8).positive
        assert not MarkovChannel(0.5, 0.5).positive


class TestBeliefUpdates:
    def test_feedback(self, pos_channel):
        assert feedback_update(pos_channel, True) == 0.8
        assert feedback_update(pos_channel, False) == 0.2
        iid = MarkovChannel(0.5, 0.5)
        assert feedback_update(iid, True) == feedback_update(iid, False) == 0.5

    def test_q_step_examples(self, pos_channel, neg_channel):
        assert q_step(pos_channel, 0.3) == pytest.approx(0.38, abs=1e-15)
        assert q_step(pos_channel, 0.5) == pytest.approx(0.5, abs=1e-15)
        assert q_step(neg_channel, 0.3) == pytest.approx(0.62, abs=1e-15)

    def test_q_iterate_examples(self, pos_channel):
        assert q_iterate(pos_channel, 0.3, 2) == pytest.approx(0.428, abs=1e-14)
        assert q_iterate(pos_channel, 0.3, 0) == 0.3
        assert q_iterate(MarkovChannel(0.5, 0.5), 0.9, 1) == pytest.approx(0.5, abs=1e-15)

    def test_negative_t(self, pos_channel):
        with pytest.raises(ValueError):
            q_iterate(pos_channel, 0.3, -1)

    @settings(max_examples=300, deadline=None)
    @given(inner, inner, probs, st.integers(0, 80))
    def test_closed_form_matches_iteration(self, p, r, pi, t):
        ch = MarkovChannel(p, r)
        assert q_iterate(ch, pi, t) == pytest.approx(_iterate(p, r, pi, t), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(inner, inner, probs, st.integers(1, 60))
    def test_iterates_stay_between_p_and_r(self, p, r, pi, t):
        x = q_iterate(MarkovChannel(p, r), pi, t)
        assert min(p, r) - 1e-15 <= x <= max(p, r) + 1e-15


class TestSteadyState:
    @pytest.mark.parametrize("p,r,want", [(0.8, 0.2, 0.5), (0.2, 0.8, 0.5), (0.6, 0.6, 0.6)])
    def test_examples(self, p, r, want):
        assert steady_state(MarkovChannel(p, r)) == pytest.approx(want, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(inner, inner)
    def test_fixed_point(self, p, r):
        ch = MarkovChannel(p, r)
        x = steady_state(ch)
        assert q_step(ch, x) == pytest.approx(x, abs=1e-14)
        # stationary law of the two-state chain: P(high) * (1-p) = P(low) * r
        assert x * (1 - p) == pytest.approx((1 - x) * r, abs=1e-14)

    def test_iterates_converge(self):
        ch = MarkovChannel(0.7, 0.1)
        assert q_iterate(ch, 0.95, 200) == pytest.approx(steady_state(ch), abs=1e-14)


class TestHittingTime:
    def test_examples(self, pos_channel, neg_channel):
        assert hitting_time(pos_channel, 0.2, 0.45) == HittingTime(4)
        assert hitting_time(pos_channel, 0.6, 0.45) == HittingTime(0)
        assert hitting_time(neg_channel, 0.3, 0.7) == INFINITE

    def test_example_by_iterates(self, pos_channel):
        xs = [_iterate(0.8, 0.2, 0.2, t) for t in range(5)]
        assert xs[3] <= 0.45 < xs[4]

    def test_repr(self):
        assert repr(HittingTime(3)) == "Finite(3)"
        assert repr(INFINITE) == "Infinite"
        assert not INFINITE.finite and HittingTime(0).finite

    def test_threshold_at_or_above_steady_state(self, pos_channel):
        assert hitting_time(pos_channel, 0.1, 0.5) == INFINITE
        assert hitting_time(pos_channel, 0.1, 0.7) == INFINITE

    def test_negative_one_step(self, neg_channel):
        assert hitting_time(neg_channel, 0.3, 0.6) == HittingTime(1)

    @settings(max_examples=500, deadline=None)
    @given(inner, inner, probs, probs)
    def test_matches_brute_force(self, p, r, pi, thr):
        ch = MarkovChannel(p, r)
        # rounding decides ties between an iterate and the threshold
        assume(abs(steady_state(ch) - thr) > 1e-9)
        assume(all(abs(_iterate(p, r, pi, t) - thr) > 1e-9 for t in range(200)))
        assert hitting_time(ch, pi, thr) == hitting_time_brute(ch, pi, thr)

    def test_hand_iterated_count(self):
        # 0.31 -> 0.486 -> 0.5916 -> 0.65496 -> 0.693 -> 0.7159 (> 0.7)
        ch = MarkovChannel(0.9, 0.3)
        assert hitting_time(ch, 0.31, 0.7) == HittingTime(5)
        assert _iterate(0.9, 0.3, 0.31, 4) <= 0.7 < _iterate(0.9, 0.3, 0.31, 5)
