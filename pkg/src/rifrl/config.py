"""Run configuration: scenario + training + evaluation in one JSON file.

The file mirrors the dataclass fields section by section:

    {
      "method": "rifrl",
      "scenario":   { ... ScenarioConfig fields ... },
      "training":   { ... TrainSettings fields ... },
      "evaluation": { "episodes": 200, "seed": 1234 }
    }

Every section is optional and falls back to defaults; unknown keys are
rejected rather than silently ignored.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .env import ConfigError, ScenarioConfig
from .federation import Method, TrainSettings

_TUPLE_FIELDS = {"v2v_power_levels_dbm", "hidden_sizes"}


@dataclass
class EvalSettings:
    """Greedy-rollout evaluation; seeded independently of training."""

    episodes: int = 200
    seed: int = 1234

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ConfigError("evaluation episodes must be >= 1")
        if self.seed < 0:
            raise ConfigError("evaluation seed must be >= 0")


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    training: TrainSettings = field(default_factory=TrainSettings)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    method: str = "rifrl"


def desk_profile() -> RunConfig:
    """Laptop-sized default: 4 V2I links, 8 V2V agents, small network.

    The recent-mean reward baseline is on here: whole-episode returns
    are noisy at this scale and the raw estimator mostly learns noise.
    """
    return RunConfig(training=TrainSettings(use_reward_baseline=True))


def full_profile() -> RunConfig:
    """Full-size urban scenario: 8 V2I links, 24 V2V agents, wide network."""
    return RunConfig(
        scenario=ScenarioConfig(n_v2i=8, n_v2v=24),
        training=TrainSettings(hidden_sizes=(500, 250, 120), episodes=6000),
    )


PROFILES = {"desk": desk_profile, "full": full_profile}


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in '{section}': {', '.join(sorted(unknown))}")
    coerced = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - {"scenario", "training", "evaluation", "method"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    method = doc.get("method", "rifrl")
    Method.parse(str(method))
    return RunConfig(
        scenario=_build_section(ScenarioConfig, doc.get("scenario", {}),
                                "scenario"),
        training=_build_section(TrainSettings, doc.get("training", {}),
                                "training"),
        evaluation=_build_section(EvalSettings, doc.get("evaluation", {}),
                                  "evaluation"),
        method=str(method),
    )


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    return run_config_from_dict(doc)


def run_config_to_dict(cfg: RunConfig) -> dict:
    return {
        "method": cfg.method,
        "scenario": dataclasses.asdict(cfg.scenario),
        "training": dataclasses.asdict(cfg.training),
        "evaluation": dataclasses.asdict(cfg.evaluation),
    }


def save_run_config(path, cfg: RunConfig) -> None:
    doc = run_config_to_dict(cfg)
    for section in ("scenario", "training"):
        for key, value in doc[section].items():
            if isinstance(value, tuple):
                doc[section][key] = list(value)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def config_digest(cfg: RunConfig) -> bytes:
    """sha256 over the canonical JSON rendering; ties checkpoints to runs."""
    canonical = json.dumps(run_config_to_dict(cfg), sort_keys=True,
                           separators=(",", ":"), default=list)
    return hashlib.sha256(canonical.encode()).digest()
