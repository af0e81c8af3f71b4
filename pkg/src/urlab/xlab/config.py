"""Experiment configuration: a validated dataclass read from and written to TOML.

Top-level keys set the experiment axes; optional ``[kinematics]`` and
``[trpo]`` tables override task geometry and learner constants::

    variant = "2-joint"            # or "6-joint"
    action_space = "velocity"      # or "smoothed-position"
    action_cycle_ms = 40.0
    medium = "wired"               # or "wireless"
    action_delay_ms = 0.0          # mean of the exponential action-update delay, 0 = off
    actuation_delay_ms = 0.0       # mean of the exponential actuation delay, 0 = off
    clock = "virtual"              # or "realtime"
    agent = "trpo"                 # or "random"
    seed = 0
    total_steps = 150000
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

VARIANTS = ("2-joint", "6-joint")
ACTION_SPACES = ("velocity", "smoothed-position")
MEDIA = ("wired", "wireless")
CLOCKS = ("virtual", "realtime")
AGENTS = ("trpo", "random")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Kinematics:
    link_lengths: Optional[tuple] = None
    dh: Optional[tuple] = None
    box_lo: Optional[tuple] = None
    box_hi: Optional[tuple] = None
    box_size: Optional[tuple] = None
    start_q: Optional[tuple] = None
    joint_window: Optional[float] = None
    margin: Optional[float] = None


@dataclass(frozen=True)
class LearnerSettings:
    gamma: float = 0.995
    step_size: float = 0.04
    cg_iters: int = 10
    cg_damping: float = 1e-5
    backtrack_ratio: float = 0.8
    max_backtracks: int = 10
    critic_epochs: int = 5
    critic_lr: float = 1e-3
    critic_minibatch: int = 64
    init_log_std: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "2-joint"
    action_space: str = "velocity"
    action_cycle_ms: float = 40.0
    medium: str = "wired"
    action_delay_ms: float = 0.0
    actuation_delay_ms: float = 0.0
    clock: str = "virtual"
    agent: str = "trpo"
    seed: int = 0
    total_steps: int = 150_000
    batch_episodes: int = 20
    episode_s: float = 4.0
    tick_log: bool = False
    out_dir: str = ""
    kinematics: Kinematics = field(default_factory=Kinematics)
    trpo: LearnerSettings = field(default_factory=LearnerSettings)

    def __post_init__(self):
        _choice("variant", self.variant, VARIANTS)
        _choice("action_space", self.action_space, ACTION_SPACES)
        _choice("medium", self.medium, MEDIA)
        _choice("clock", self.clock, CLOCKS)
        _choice("agent", self.agent, AGENTS)
        if not self.action_cycle_ms > 0:
            raise ConfigError("action_cycle_ms", "must be positive")
        if round(self.action_cycle_ms * 1e6) % 1_000 != 0:
            raise ConfigError("action_cycle_ms", "must be a whole number of microseconds")
        for key in ("action_delay_ms", "actuation_delay_ms"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be non-negative (0 disables the injector)")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if self.total_steps < 0:
            raise ConfigError("total_steps", "must be non-negative")
        if self.batch_episodes <= 0:
            raise ConfigError("batch_episodes", "must be positive")
        if not self.episode_s > 0:
            raise ConfigError("episode_s", "must be positive")
        ratio = self.episode_s * 1000.0 / self.action_cycle_ms
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("episode_s", "must be a whole number of action cycles")
        g = self.trpo
        if not 0 < g.gamma <= 1:
            raise ConfigError("trpo.gamma", "must be in (0, 1]")
        if not g.step_size > 0:
            raise ConfigError("trpo.step_size", "must be positive")
        k = self.kinematics
        if k.box_lo is not None and k.box_hi is not None:
            if len(k.box_lo) != len(k.box_hi) or len(k.box_lo) != (2 if self.variant == "2-joint" else 3):
                raise ConfigError("kinematics.box_lo", "box dimension does not match the variant")

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.episode_s * 1000.0 / self.action_cycle_ms))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _choice(key: str, value: Any, allowed: tuple) -> None:
    if value not in allowed:
        raise ConfigError(key, f"{value!r} not one of {', '.join(allowed)}")


_SECTIONS = {"kinematics": Kinematics, "trpo": LearnerSettings}


def _coerce(key: str, value: Any, default: Any, annotation: str) -> Any:
    if "tuple" in annotation:
        if not isinstance(value, list):
            raise ConfigError(key, f"expected an array, got {type(value).__name__}")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if "bool" in annotation:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {type(value).__name__}")
        return value
    if "int" in annotation and "float" not in annotation:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {type(value).__name__}")
        return value
    if "float" in annotation:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return float(value)
    if "str" in annotation:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {type(value).__name__}")
        return value
    return value


def _build(cls, data: dict, prefix: str = ""):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        full = prefix + key
        if key not in fields:
            raise ConfigError(full, "unknown key")
        f = fields[key]
        if key in _SECTIONS and cls is ExperimentConfig:
            if not isinstance(value, dict):
                raise ConfigError(full, "expected a table")
            kwargs[key] = _build(_SECTIONS[key], value, key + ".")
        else:
            kwargs[key] = _coerce(full, value, f.default, str(f.type))
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix.rstrip(".") or "config", str(exc)) from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"not valid TOML: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain dict with ``None`` entries omitted (TOML has no null)."""

    def clean(obj):
        out = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue
            if dataclasses.is_dataclass(v):
                v = clean(v)
            elif isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out

    return clean(cfg)


def dumps_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")
