"""Run configuration: plain-text key = value files, full defaulting, hashing.

Every field is explicit after load. The config hash covers the canonical
text of everything except the seed, so runs that differ only by seed share
a hash and can be aggregated together.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigurationError

ALGORITHMS = ("gdq", "vdn", "iql")
ENVIRONMENTS = ("particle", "nav")
ALLOWED_AGENT_COUNTS = (2, 3, 4, 8)


@dataclass
class RunConfig:
    algorithm: str = "gdq"
    env: str = "nav"
    scene: str = "train"
    n_agents: int = 2
    seed: int = 0
    max_epochs: int = 500
    max_episode_steps: int = -1          # -1: per-env default (nav 500, particle 25)
    gamma: float = 0.99
    batch_size: int = 64
    train_every: int = 4
    lr: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50000
    central_sync_every: int = 200
    target_sync_every: int = 200
    n_step: int = 3
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_beta_steps: int = 50000
    priority_epsilon: float = 1e-6
    replay_capacity: int = 50000
    team_reward: str = "mean"            # central estimator's team reward
    vdn_team_reward: str = "sum"
    update_order: str = "central_first"
    raw_global_value_aggregation: bool = False
    central_per: bool = False
    collision_resets_episode: bool = False
    reward_alpha: float = 5.0
    goal_radius: float = 0.1
    step_penalty: float = 0.005
    lidar_max_range: float = 3.5
    obs_stack: int = -1                  # -1: per-env default (nav 3, particle 1)
    trunk_hidden: tuple = (128, 64)
    stream_hidden: int = 64
    central_hidden: tuple = (64, 64)
    smoothing_window: int = 100

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"algorithm: expected one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.env not in ENVIRONMENTS:
            raise ConfigurationError(
                f"env: expected one of {ENVIRONMENTS}, got {self.env!r}")
        if self.n_agents not in ALLOWED_AGENT_COUNTS:
            raise ConfigurationError(
                f"n_agents: expected one of {ALLOWED_AGENT_COUNTS}, got {self.n_agents}")
        if self.team_reward not in ("mean", "sum") or self.vdn_team_reward not in ("mean", "sum"):
            raise ConfigurationError("team_reward / vdn_team_reward: expected mean or sum")
        if self.update_order not in ("central_first", "agents_first"):
            raise ConfigurationError(
                f"update_order: expected central_first or agents_first, got {self.update_order!r}")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs: must be positive")
        # materialize per-environment defaults
        if self.max_episode_steps == -1:
            self.max_episode_steps = 500 if self.env == "nav" else 25
        if self.obs_stack == -1:
            self.obs_stack = 3 if self.env == "nav" else 1
        if self.max_episode_steps < 1 or self.obs_stack < 1:
            raise ConfigurationError("max_episode_steps and obs_stack must be positive")

    def to_text(self, include_seed: bool = True) -> str:
        """Canonical key = value form (sorted keys, everything explicit)."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name == "seed" and not include_seed:
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """Hash of everything but the seed; 12 hex chars."""
        return hashlib.sha256(self.to_text(include_seed=False).encode()).hexdigest()[:12]


def _parse_value(name: str, text: str, kind):
    text = text.strip()
    try:
        if kind is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(x) for x in text.replace(",", " ").split())
        return text
    except ValueError:
        raise ConfigurationError(f"{name}: cannot parse {text!r} as {kind.__name__}")


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse key = value lines (# comments allowed) into a full RunConfig."""
    kinds = {f.name: type(f.default) for f in fields(RunConfig)}
    known = set(kinds)
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, val, kinds[key])
    for key, val in (overrides or {}).items():
        if key not in known:
            raise ConfigurationError(f"override: unknown key {key!r}")
        values[key] = val
    return RunConfig(**values)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}")
    return parse_config(text, overrides)


def apply_paper_scale(config: RunConfig) -> RunConfig:
    """Stretch a desk-scale config toward the published experiment sizes.

    No runtime guarantee: this exists so the full protocol stays runnable,
    not so it finishes quickly.
    """
    d = {f.name: getattr(config, f.name) for f in fields(config)}
    d["max_epochs"] = 3000 if config.env == "nav" else 10000
    d["epsilon_decay_steps"] = 150000
    d["per_beta_steps"] = 150000
    return RunConfig(**d)
