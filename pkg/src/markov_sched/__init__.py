"""Whittle-index scheduling of a shared downlink over two-state Markov channels.

Users' channels are observed only when scheduled; the scheduler tracks a
belief per user and ranks users by a closed-form index.
"""
from .channel import HittingTime, MarkovChannel, hitting_time, q_iterate, q_step, steady_state
from .index import IndexBranch, index_branch, index_oracle, index_trace, indexability_scan, whittle_index
from .policies import DownlinkSystem, User, greedy_policy, optimal_finite_horizon, whittle_policy
from .reward import PayoffPair, RewardModel, default_model, eval_reward, make_estimation_model
from .sim import EvalConfig, ExperimentResult, evaluate_exact, evaluate_monte_carlo, pct_gain
from .subsidy import SubsidyProblem, ThresholdClass, anchor_values, solve_threshold, value_iteration

__version__ = "0.1.0"

__all__ = [
    "DownlinkSystem", "EvalConfig", "ExperimentResult", "HittingTime", "IndexBranch", "MarkovChannel",
    "PayoffPair", "RewardModel", "SubsidyProblem", "ThresholdClass", "User", "anchor_values",
    "default_model", "eval_reward", "evaluate_exact", "evaluate_monte_carlo", "greedy_policy",
    "hitting_time", "index_branch", "index_oracle", "index_trace", "indexability_scan",
    "make_estimation_model", "optimal_finite_horizon", "pct_gain", "q_iterate", "q_step",
    "solve_threshold", "steady_state", "value_iteration", "whittle_index", "whittle_policy",
]
