"""Run configuration: a JSON document whose every field has a default.

Schema (all keys optional)::

    {
      "env": "team_reach:1_ant",            # a name from env.ENVIRONMENTS
      "env_overrides": {"max_steps": 60},    # EnvConfig fields to replace
      "pipeline": {
        "frame_mode": "learned_op",          # learned_op | heading_norm | goal_dir | identity
        "symmetry_mode": "sub_g",            # sub_g | so3
        "centering": "assignment_relative",  # none | sparse_root_mean | dense_body_mean | assignment_relative
        "assignment": "greedy",              # greedy | full
        "dims": {"hidden_dim": 64, "vector_dim": 32, "propagation_steps": 2, "mlp_hidden": 256}
      },
      "es": {"population": 64, "noise_std": 0.05, "learning_rate": 0.02,
             "generations": 200, "episodes_per_eval": 4, "pairs_per_chunk": 32},
      "seeds": [0],
      "eval_episodes": 1024,
      "eval_every": 50,
      "checkpoint_every": 10,
      "out_dir": "runs"
    }

The ES seed of each run is taken from ``seeds``; ``es.seed`` is ignored.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .env import ENVIRONMENTS, EnvConfig, make_env
from .policy import PipelineConfig
from .subeq import NetworkDims
from .trainer import ESConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    env: str = "team_reach:1_ant"
    env_overrides: dict = field(default_factory=dict)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    es: ESConfig = field(default_factory=ESConfig)
    seeds: tuple = (0,)
    eval_episodes: int = 1024
    eval_every: int = 50
    checkpoint_every: int = 10
    out_dir: str = "runs"

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for name in ("eval_episodes", "eval_every", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        try:
            self.env_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad env_overrides: {exc}") from exc

    def env_config(self) -> EnvConfig:
        return make_env(self.env, **self.env_overrides)

    def es_for_seed(self, seed: int) -> ESConfig:
        return dataclasses.replace(self.es, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "env": self.env,
            "env_overrides": dict(self.env_overrides),
            "pipeline": {
                **{k: getattr(self.pipeline, k) for k in ("frame_mode", "symmetry_mode", "centering", "assignment")},
                "dims": dataclasses.asdict(self.pipeline.dims),
            },
            "es": {k: v for k, v in dataclasses.asdict(self.es).items() if k != "seed"},
            "seeds": list(self.seeds),
            "eval_episodes": self.eval_episodes,
            "eval_every": self.eval_every,
            "checkpoint_every": self.checkpoint_every,
            "out_dir": self.out_dir,
        }


# Desk-scale learning check on Team Reach 1_ant: ES defaults, 60-step episodes,
# evaluation at generation 0 and at the end only.
SMOKE_CONFIG = {
    "env": "team_reach:1_ant",
    "env_overrides": {"max_steps": 60},
    "es": {"generations": 200},
    "seeds": [0, 1, 2],
    "eval_episodes": 1024,
    "eval_every": 200,
    "checkpoint_every": 50,
    "out_dir": "runs/smoke_1_ant",
}


def _build(cls, data, what: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown {what} key(s): {unknown}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    pipeline = dict(data.pop("pipeline", {}))
    if "dims" in pipeline:
        pipeline["dims"] = _build(NetworkDims, pipeline["dims"], "pipeline.dims")
    es = dict(data.pop("es", {}))
    es.pop("seed", None)
    kwargs = dict(data)
    kwargs["pipeline"] = _build(PipelineConfig, pipeline, "pipeline")
    kwargs["es"] = _build(ESConfig, es, "es")
    if "seeds" in kwargs:
        kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
    return _build(RunConfig, kwargs, "config")


def load_config(path: str | None) -> RunConfig:
    """Read a config file; ``None`` gives the all-default config."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)
