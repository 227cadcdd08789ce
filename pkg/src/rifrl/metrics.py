"""Run metrics: per-episode returns and delivery-probability evaluations.

Files are written with repr() float formatting (shortest round-trip)
and explicit "\n" line endings, so identical runs produce byte-identical
CSVs and values survive a write/read cycle exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

TRAIN_COLUMNS = ("method", "seed", "episode", "return", "moving_avg")
SWEEP_COLUMNS = ("method", "seed", "axis_name", "axis_value",
                 "delivery_prob", "ci_half_width")


@dataclass
class EpisodeRecord:
    method: str
    seed: int
    episode: int
    episode_return: float
    moving_avg: float


@dataclass
class EvalRecord:
    method: str
    seed: int
    axis_name: str
    axis_value: float
    delivery_prob: float
    ci_half_width: float
    episodes: int = 0  # kept on the record; not part of the CSV schema


@dataclass
class RunMetrics:
    episodes: list[EpisodeRecord] = field(default_factory=list)
    evaluations: list[EvalRecord] = field(default_factory=list)


def tail_moving_average(values, window: int) -> float:
    """Mean of the trailing min(window, len) values."""
    if not len(values):
        raise ValueError("no values")
    tail = values[-window:] if window > 0 else values
    return float(sum(tail) / len(tail))


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _train_row(r: EpisodeRecord) -> tuple:
    return (r.method, r.seed, r.episode, r.episode_return, r.moving_avg)


def _sweep_row(r: EvalRecord) -> tuple:
    return (r.method, r.seed, r.axis_name, r.axis_value,
            r.delivery_prob, r.ci_half_width)


def write_training_csv(path, records: list[EpisodeRecord]) -> None:
    _write_csv(path, TRAIN_COLUMNS, [_train_row(r) for r in records])


def write_sweep_csv(path, records: list[EvalRecord]) -> None:
    _write_csv(path, SWEEP_COLUMNS, [_sweep_row(r) for r in records])


def write_training_jsonl(path, records: list[EpisodeRecord]) -> None:
    _write_jsonl(path, TRAIN_COLUMNS, [_train_row(r) for r in records])


def write_sweep_jsonl(path, records: list[EvalRecord]) -> None:
    _write_jsonl(path, SWEEP_COLUMNS, [_sweep_row(r) for r in records])


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _write_jsonl(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        for row in rows:
            doc = dict(zip(columns, row))
            f.write(json.dumps(doc) + "\n")


def read_training_csv(path) -> list[EpisodeRecord]:
    out = []
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != TRAIN_COLUMNS:
        raise ValueError(f"{path} is not a training metrics CSV")
    for line in lines[1:]:
        method, seed, episode, ret, mov = line.split(",")
        out.append(EpisodeRecord(method, int(seed), int(episode),
                                 float(ret), float(mov)))
    return out


def read_sweep_csv(path) -> list[EvalRecord]:
    out = []
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != SWEEP_COLUMNS:
        raise ValueError(f"{path} is not a sweep metrics CSV")
    for line in lines[1:]:
        method, seed, axis, value, prob, ci = line.split(",")
        out.append(EvalRecord(method, int(seed), axis, float(value),
                              float(prob), float(ci)))
    return out
