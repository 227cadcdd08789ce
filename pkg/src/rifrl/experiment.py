"""Greedy evaluation and sweep harness.

Evaluation rolls trained policies greedily (argmax action, no
exploration) through fresh episodes and reports the fraction of V2V
links that finish their payload inside the slot budget, with a 95%
normal-approximation half-width.  Sweeps repeat that along one
scenario axis per method and feed the metrics writers.
"""
from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .env import ScenarioConfig, V2XEnv
from .federation import (STREAM_EVAL, Method, StackedPolicy, TrainResult,
                         TrainSettings, run_training)
from .metrics import EvalRecord
from .policy import MlpParams

SWEEP_AXES = ("payload", "n_agents")


@dataclass
class DeliveryResult:
    probability: float
    ci_half_width: float
    delivered: int
    total_links: int
    episodes: int


def _as_model_list(models, k: int) -> list[MlpParams] | None:
    if models is None:
        return None
    if isinstance(models, MlpParams):
        return [models] * k
    models = list(models)
    if len(models) != k:
        raise ValueError(f"need one model per agent ({k}), got {len(models)}")
    return models


def evaluate_delivery(models, scenario: ScenarioConfig, episodes: int,
                      seed: int, salt: int = 0) -> DeliveryResult:
    """Delivery probability over greedy rollouts.

    models: a single MlpParams shared by every agent, a per-agent list,
    or None for uniform random actions.  The RNG streams are derived
    from (seed, salt) and are disjoint from all training streams.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    k = scenario.n_v2v
    model_list = _as_model_list(models, k)
    env = V2XEnv(scenario)
    n_act = scenario.n_actions
    policy = StackedPolicy(model_list) if model_list is not None else None

    delivered = 0
    for ep in range(episodes):
        env.reset(np.random.SeedSequence([seed, STREAM_EVAL, salt, ep]))
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, STREAM_EVAL, salt, ep, 1]))
        obs = env.observe_all()
        done = False
        while not done:
            if policy is None:
                idx = rng.integers(n_act, size=k)
            else:
                idx = policy.probs(obs).argmax(axis=1)
            obs, _, done = env.step(idx)
        delivered += int(np.count_nonzero(env.books.remaining_bytes == 0.0))

    total = k * episodes
    p = delivered / total
    ci = 1.96 * np.sqrt(p * (1.0 - p) / total)
    return DeliveryResult(p, float(ci), delivered, total, episodes)


def _scenario_for(scenario: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "payload":
        return dataclasses.replace(scenario, payload_bytes=float(value))
    return dataclasses.replace(scenario, n_v2v=int(value))


def sweep_workers(explicit: int | None = None) -> int:
    """Sweep-cell parallelism; the RIFRL_THREADS env var caps it."""
    if explicit is not None and explicit > 0:
        return explicit
    raw = os.environ.get("RIFRL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def sweep(scenario: ScenarioConfig, training: TrainSettings, axis: str,
          values, methods, eval_episodes: int = 200, eval_seed: int = 1234,
          workers: int | None = None, progress=None
          ) -> tuple[list[EvalRecord], dict]:
    """Train each method, evaluate along one axis, return records.

    axis "payload" trains once per method on the base scenario and
    re-evaluates the same policy under each payload size (the
    observation normalizes remaining bytes, so the policy transfers);
    axis "n_agents" retrains per cell because the observation layout
    depends on the agent count.  Cells run on up to sweep_workers()
    threads; results are deterministic and ordered regardless.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ValueError("no axis values given")
    methods = [Method.parse(m) if isinstance(m, str) else m for m in methods]
    n_workers = sweep_workers(workers)

    trained: dict[tuple[str, float | None], TrainResult | None] = {}

    def train_cell(method: Method, cell_scenario: ScenarioConfig,
                   key) -> None:
        if method is Method.RANDOM:
            trained[key] = None
        else:
            trained[key] = run_training(cell_scenario, training, method)
        if progress is not None:
            progress(f"trained {key}")

    if axis == "payload":
        train_jobs = [(m, scenario, (m.value, None)) for m in methods]
    else:
        train_jobs = [(m, _scenario_for(scenario, axis, v), (m.value, v))
                      for m in methods for v in values]

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(lambda job: train_cell(*job), train_jobs))
    else:
        for job in train_jobs:
            train_cell(*job)

    records: list[EvalRecord] = []
    for m_idx, method in enumerate(methods):
        for v_idx, value in enumerate(values):
            cell_scenario = _scenario_for(scenario, axis, value)
            key = (method.value, None if axis == "payload" else value)
            result = trained[key]
            models = None if result is None else result.models_for_eval()
            res = evaluate_delivery(models, cell_scenario, eval_episodes,
                                    eval_seed,
                                    salt=m_idx * len(values) + v_idx)
            records.append(EvalRecord(method.value, training.seed, axis,
                                      float(value), res.probability,
                                      res.ci_half_width, res.episodes))
            if progress is not None:
                progress(f"evaluated {method.value} {axis}={value}: "
                         f"{res.probability:.3f}")
    return records, trained
