"""Run configuration: a TOML file plus command-line overrides.

Example::

    beta = 0.9
    initial_beliefs = "steady"          # or a list, one belief per user
    policies = ["whittle", "greedy", "nofb", "optimal"]

    [[users]]
    p = 0.8
    r = 0.2
    delta = 0.2
    reward_pairs = [[0.9, 0.1]]         # optional extra (gamma_h, gamma_l) pairs

    [eval]
    horizon = 10
    runs = 100000                       # omit for exact evaluation
    seed = 42

    [experiment]
    m_max = 10                          # keys depend on the subcommand
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from .channel import MarkovChannel
from .policies import POLICY_NAMES, DownlinkSystem, User
from .reward import default_model, make_estimation_model
from .sim import EvalConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("index-curve", "threshold", "simulate", "horizon-sweep", "memory-sweep", "table", "trace", "validate")

FIG5_PAIRS = [(0.8, 0.2), (0.2, 0.8)]
FIG6_PAIRS = [(0.2, 0.75), (0.6, 0.25), (0.8, 0.3), (0.4, 0.7), (0.65, 0.55)]

_EXPERIMENT_KEYS = {
    "index-curve": {"points": 1001},
    "threshold": {"omegas": None, "omega_points": 50},
    "simulate": {},
    "horizon-sweep": {"m_max": 10},
    "memory-sweep": {"n_users": 5, "p_grid": [0.5, 0.6, 0.7, 0.8, 0.9], "horizon": 10},
    "table": {"count": 20, "n_min": 4, "n_max": 5, "beta_min": 0.45, "beta_max": 0.67, "delta": 0.2},
    "trace": {"pi0": 0.3, "horizon": 20},
    "validate": {"quick": True},
}

_TOP_KEYS = {"users", "beta", "initial_beliefs", "policies", "eval", "experiment", "output_path"}
_USER_KEYS = {"p", "r", "delta", "reward_pairs"}
_EVAL_KEYS = {"horizon", "runs", "seed", "convergence_pct"}


class ConfigError(ValueError):
    pass


@dataclass
class UserSpec:
    p: float
    r: float
    delta: float = 0.2
    reward_pairs: list | None = None  # None selects the default model

    def build(self) -> User:
        if self.reward_pairs is None:
            model = default_model(self.delta)
        else:
            model = make_estimation_model(self.delta, self.reward_pairs)
        return User(MarkovChannel(self.p, self.r, self.delta), model)


@dataclass
class RunConfig:
    experiment: str
    users: list = field(default_factory=list)
    beta: float = 0.9
    initial_beliefs: object = "steady"
    policies: list = field(default_factory=lambda: ["whittle", "greedy", "nofb", "optimal"])
    eval: EvalConfig = field(default_factory=lambda: EvalConfig(horizon=10))
    options: dict = field(default_factory=dict)
    output_path: str | None = None

    def system(self) -> DownlinkSystem:
        return DownlinkSystem([u.build() for u in self.users], self.beta)

    def initial_state(self, sys: DownlinkSystem) -> tuple:
        if self.initial_beliefs == "steady":
            return sys.steady_state()
        return tuple(float(x) for x in self.initial_beliefs)


def default_config(experiment: str) -> RunConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if experiment in ("simulate", "horizon-sweep"):
        users = [UserSpec(p, r) for p, r in FIG6_PAIRS]
        beta = 0.8
    elif experiment == "memory-sweep":
        users = [UserSpec(0.8, 0.2)]  # only delta and the reward model are used
        beta = 0.6
    else:
        users = [UserSpec(p, r) for p, r in FIG5_PAIRS]
        beta = 0.9
    opts = {k: v for k, v in _EXPERIMENT_KEYS[experiment].items()}
    return RunConfig(experiment=experiment, users=users, beta=beta, options=opts)


def _num(where: str, v, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{where}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _unknown(where: str, got, allowed) -> None:
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def parse_config(data: dict, experiment: str) -> RunConfig:
    """Validate a decoded TOML mapping against ``experiment``'s schema."""
    cfg = default_config(experiment)
    _unknown("config", data, _TOP_KEYS)
    if "users" in data:
        users = data["users"]
        if not isinstance(users, list) or not users:
            raise ConfigError("users: expected a non-empty array of tables")
        cfg.users = []
        for i, u in enumerate(users):
            where = f"users[{i}]"
            if not isinstance(u, dict):
                raise ConfigError(f"{where}: expected a table")
            _unknown(where, u, _USER_KEYS)
            for k in ("p", "r"):
                if k not in u:
                    raise ConfigError(f"{where}.{k}: required")
            pairs = u.get("reward_pairs")
            if pairs is not None:
                if not isinstance(pairs, list) or any(not isinstance(q, list) or len(q) != 2 for q in pairs):
                    raise ConfigError(f"{where}.reward_pairs: expected a list of [gamma_h, gamma_l]")
                pairs = [(_num(f"{where}.reward_pairs", a), _num(f"{where}.reward_pairs", b)) for a, b in pairs]
            spec = UserSpec(
                _num(f"{where}.p", u["p"]),
                _num(f"{where}.r", u["r"]),
                _num(f"{where}.delta", u.get("delta", 0.2)),
                pairs,
            )
            try:
                spec.build()
            except ValueError as e:
                raise ConfigError(f"{where}: {e}") from None
            cfg.users.append(spec)
    if "beta" in data:
        cfg.beta = _num("beta", data["beta"])
        if not 0.0 <= cfg.beta < 1.0:
            raise ConfigError("beta: must lie in [0, 1)")
    if "initial_beliefs" in data:
        ib = data["initial_beliefs"]
        if ib != "steady":
            if not isinstance(ib, list):
                raise ConfigError('initial_beliefs: expected "steady" or a list of beliefs')
            ib = [_num(f"initial_beliefs[{i}]", x) for i, x in enumerate(ib)]
            if any(not 0.0 <= x <= 1.0 for x in ib):
                raise ConfigError("initial_beliefs: beliefs must lie in [0, 1]")
        cfg.initial_beliefs = ib
    if cfg.initial_beliefs != "steady" and len(cfg.initial_beliefs) != len(cfg.users):
        raise ConfigError(f"initial_beliefs: {len(cfg.initial_beliefs)} beliefs for {len(cfg.users)} users")
    if "policies" in data:
        pol = data["policies"]
        if not isinstance(pol, list) or not pol:
            raise ConfigError("policies: expected a non-empty list")
        for name in pol:
            if name not in POLICY_NAMES:
                raise ConfigError(f"policies: unknown policy {name!r} (choose from {', '.join(POLICY_NAMES)})")
        cfg.policies = list(pol)
    if "eval" in data:
        ev = data["eval"]
        if not isinstance(ev, dict):
            raise ConfigError("eval: expected a table")
        _unknown("eval", ev, _EVAL_KEYS)
        try:
            cfg.eval = EvalConfig(
                horizon=_num("eval.horizon", ev.get("horizon", cfg.eval.horizon), int),
                runs=None if ev.get("runs") is None else _num("eval.runs", ev["runs"], int),
                seed=_num("eval.seed", ev.get("seed", 0), int),
                convergence_pct=_num("eval.convergence_pct", ev.get("convergence_pct", 0.01)),
            )
        except ValueError as e:
            raise ConfigError(f"eval: {e}") from None
    if "experiment" in data:
        ex = dict(data["experiment"])
        kind = ex.pop("kind", experiment)
        if kind != experiment:
            raise ConfigError(f"experiment.kind: config is for {kind!r}, command runs {experiment!r}")
        _unknown("experiment", ex, _EXPERIMENT_KEYS[experiment])
        cfg.options.update(ex)
    if "output_path" in data:
        cfg.output_path = str(data["output_path"])
    return cfg


def load_config(path: str | Path | None, experiment: str) -> RunConfig:
    if path is None:
        return default_config(experiment)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return parse_config(data, experiment)
