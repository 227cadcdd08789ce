"""Federated policy-gradient training over a shared V2X environment.

Four methods share one loop:

  rifrl           local updates + periodic averaging, with every model
                  canonicalized by the column-normalizing rescale before
                  the mean and the mean canonicalized again before
                  broadcast
  frl             same schedule, plain averaging
  independent_pg  no aggregation at all, each agent learns alone
  random          uniform random actions, no learning

Every episode all K agents act in the *same* environment instance
(their joint action drives a single step), collect one trajectory each,
and take one RMSprop ascent step on the single-trajectory gradient
estimate.  A training run keeps one persistent world: the first episode
opens with a fresh drop, later ones via env.next_episode(), so radio
conditions drift instead of being redrawn and consecutive returns are
comparable.  With aggregation interval G, episodes 0, G, 2G, ... end
with upload -> mean (ascending agent order) -> broadcast; between
rounds the agents keep training their current local models.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import brio
from .checkpoint import save_checkpoint
from .env import ScenarioConfig, V2XEnv
from .metrics import EpisodeRecord, RunMetrics, tail_moving_average
from .policy import (MlpParams, OptimizerState, Trajectory, init_params,
                     policy_gradient, rmsprop_step)

# seed-stream tags: training and evaluation randomness never overlap
STREAM_INIT = 0
STREAM_ENV = 1
STREAM_SAMPLE = 2
STREAM_EVAL = 3


class NanDivergenceError(RuntimeError):
    """A model became non-finite; the run is aborted, not papered over."""


class Method(enum.Enum):
    RIFRL = "rifrl"
    FRL = "frl"
    INDEPENDENT_PG = "independent_pg"
    RANDOM = "random"

    @classmethod
    def parse(cls, name: str) -> "Method":
        try:
            return cls(name.strip().lower())
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown method {name!r}; pick one of {options}")

    @property
    def aggregates(self) -> bool:
        return self in (Method.RIFRL, Method.FRL)

    @property
    def learns(self) -> bool:
        return self is not Method.RANDOM


@dataclass
class TrainSettings:
    """Learning-side knobs; scenario physics live in ScenarioConfig."""

    episodes: int = 2000              # last episode index J; J+1 episodes run
    aggregation_interval: int = 5
    learning_rate: float = 1e-3       # rifrl and frl
    independent_learning_rate: float = 1e-4
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-8
    hidden_sizes: tuple[int, ...] = (128, 64, 32)
    activation: str = "relu"
    leaky_slope: float = 0.01
    seed: int = 0
    shared_init: bool = True          # all agents start from the same weights
    use_reward_baseline: bool = False # subtract mean return of recent episodes
    baseline_window: int = 40         # episodes in the mean; <= 0: full history
    reset_optimizer_on_broadcast: bool = False
    moving_average_window: int = 100
    checkpoint_interval: int = 0      # 0: only the final model is saved
    log_messages: bool = False

    def __post_init__(self) -> None:
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.aggregation_interval < 1:
            raise ValueError("aggregation_interval must be >= 1")
        if self.learning_rate < 0 or self.independent_learning_rate < 0:
            raise ValueError("learning rates must be >= 0")
        if not 0.0 <= self.rmsprop_decay < 1.0:
            raise ValueError("rmsprop_decay must be in [0, 1)")
        if self.rmsprop_eps <= 0:
            raise ValueError("rmsprop_eps must be > 0")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be positive")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.moving_average_window < 1:
            raise ValueError("moving_average_window must be >= 1")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0")

    def learning_rate_for(self, method: Method) -> float:
        if method is Method.INDEPENDENT_PG:
            return self.independent_learning_rate
        return self.learning_rate


@dataclass
class FedRoundState:
    """Snapshot of the federation between episodes (mostly for tests)."""

    episode: int
    global_model: MlpParams | None
    local_models: list[MlpParams]
    optimizers: list[OptimizerState]


@dataclass
class TrainResult:
    method: Method
    global_model: MlpParams | None
    local_models: list[MlpParams]
    metrics: RunMetrics
    uploads: int
    aggregation_episodes: list[int]
    message_log: list[dict] | None = None

    def models_for_eval(self):
        """What evaluation should run: the broadcast model if one exists,
        otherwise each agent's own."""
        if self.method is Method.RANDOM:
            return None
        if self.global_model is not None:
            return self.global_model
        return self.local_models


def aggregate(models: list[MlpParams]) -> MlpParams:
    """Entrywise mean of parameter sets, summed in ascending agent order."""
    if not models:
        raise ValueError("nothing to aggregate")
    first = models[0]
    for m in models[1:]:
        if [w.shape for w in m.weights] != [w.shape for w in first.weights]:
            raise ValueError("mismatched layer shapes across agents")
        if m.activation != first.activation:
            raise ValueError("mismatched activations across agents")
    out = first.copy()
    for m in models[1:]:
        for w, o in zip(m.weights, out.weights):
            o += w
        for b, o in zip(m.biases, out.biases):
            o += b
    k = float(len(models))
    for o in out.weights:
        o /= k
    for o in out.biases:
        o /= k
    return out


def _identity(params: MlpParams) -> MlpParams:
    return params


def _stack_layers(models: list[MlpParams]):
    return [(np.stack([m.weights[i] for m in models]),
             np.stack([m.biases[i] for m in models]))
            for i in range(models[0].n_layers)]


class StackedPolicy:
    """Batched forward pass of K same-shaped models, one row per agent.

    Layer buffers are allocated once and reused, so the returned
    probability array is only valid until the next call.
    """

    def __init__(self, models: list[MlpParams]):
        self.stack = _stack_layers(models)
        self.activation = models[0].activation
        self.slope = models[0].leaky_slope
        self._bufs = [np.empty(w.shape[:2] + (1,)) for w, _ in self.stack]

    def probs(self, obs: np.ndarray) -> np.ndarray:
        """Action probabilities, (K, n_actions), for observations (K, d)."""
        x = obs[..., None]
        last = len(self.stack) - 1
        for i, (w, b) in enumerate(self.stack):
            buf = self._bufs[i]
            np.matmul(w, x, out=buf)
            buf += b[:, :, None]
            if i < last:
                if self.activation == "relu":
                    np.maximum(buf, 0.0, out=buf)
                else:
                    buf = np.where(buf > 0.0, buf, self.slope * buf)
            x = buf
        z = x[..., 0]
        z -= z.max(axis=1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=1, keepdims=True)
        return z


def _stacked_forward(stack, activation: str, slope: float,
                     x: np.ndarray) -> np.ndarray:
    """Forward K different models on K observations at once; x is (K, d)."""
    x = x[..., None]
    for i, (w, b) in enumerate(stack):
        x = w @ x + b[..., None]
        if i < len(stack) - 1:
            if activation == "relu":
                x = np.maximum(x, 0.0)
            else:
                x = np.where(x > 0.0, x, slope * x)
    x = x[..., 0]
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sample_rows(probs: np.ndarray, sample_rngs) -> np.ndarray:
    """One categorical draw per row, one uniform per agent RNG.

    Matches policy.sample_action's inverse-CDF convention exactly."""
    u = np.empty(len(sample_rngs))
    for i, rng in enumerate(sample_rngs):
        u[i] = rng.random()
    cum = probs.cumsum(axis=1)
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def run_episode(env: V2XEnv, models: list[MlpParams],
                optimizers: list[OptimizerState],
                sample_rngs: list[np.random.Generator], method: Method,
                baseline: float = 0.0):
    """One shared episode plus each agent's local RMSprop ascent step.

    The caller is responsible for opening the episode (env.reset or
    env.next_episode).  Returns (models, optimizers, trajectories,
    episode_return); the input model and optimizer lists are not
    mutated.
    """
    cfg = env.config
    k, t_max = cfg.n_v2v, cfg.slots_per_episode
    n_act = cfg.n_actions

    obs = env.observe_all()
    obs_hist = np.empty((t_max, k, cfg.observation_dim))
    act_hist = np.empty((t_max, k), dtype=np.int64)
    rewards = np.empty(t_max)

    policy = StackedPolicy(models) if method.learns else None

    for t in range(t_max):
        obs_hist[t] = obs
        if policy is None:
            idx = np.fromiter((r.integers(n_act) for r in sample_rngs),
                              dtype=np.int64, count=k)
        else:
            idx = _sample_rows(policy.probs(obs), sample_rngs)
        act_hist[t] = idx
        obs, reward, _ = env.step(idx)
        rewards[t] = reward

    trajectories = [Trajectory(obs_hist[:, i, :], act_hist[:, i], rewards)
                    for i in range(k)]
    episode_return = float(rewards.sum())

    if not method.learns:
        return models, optimizers, trajectories, episode_return

    new_models, new_opts = [], []
    for i in range(k):
        grad = policy_gradient(models[i], trajectories[i], baseline)
        m, o = rmsprop_step(models[i], optimizers[i], grad, ascent=True)
        new_models.append(m)
        new_opts.append(o)
    return new_models, new_opts, trajectories, episode_return


def run_training(scenario: ScenarioConfig, settings: TrainSettings,
                 method: Method | str, rescale_fn=None,
                 checkpoint_dir=None, config_digest: bytes = b"",
                 progress=None) -> TrainResult:
    """Full training run of one method; deterministic per settings.seed.

    rescale_fn overrides the canonicalization applied by rifrl (used to
    stub it out in ablations); frl never rescales.  Raises
    NanDivergenceError the moment any model stops being finite.
    """
    if isinstance(method, str):
        method = Method.parse(method)
    k = scenario.n_v2v
    seed = settings.seed
    sizes = [scenario.observation_dim, *settings.hidden_sizes,
             scenario.n_actions]

    global_model = init_params(
        sizes, np.random.SeedSequence([seed, STREAM_INIT]),
        settings.activation, settings.leaky_slope)
    if settings.shared_init:
        local_models = [global_model.copy() for _ in range(k)]
    else:
        local_models = [
            init_params(sizes, np.random.SeedSequence([seed, STREAM_INIT,
                                                       i + 1]),
                        settings.activation, settings.leaky_slope)
            for i in range(k)
        ]
    lr = settings.learning_rate_for(method)
    optimizers = [OptimizerState.zeros_like(m, lr, settings.rmsprop_decay,
                                            settings.rmsprop_eps)
                  for m in local_models]
    if not method.aggregates:
        global_model = None

    if method is Method.RIFRL:
        canon = rescale_fn if rescale_fn is not None else brio.rescale
    else:
        canon = _identity

    env = V2XEnv(scenario)
    metrics = RunMetrics()
    returns: list[float] = []
    uploads = 0
    aggregation_episodes: list[int] = []
    message_log: list[dict] | None = [] if settings.log_messages else None
    model_bytes = 8 * local_models[0].n_parameters
    baseline = 0.0

    # one persistent world per run: vehicles keep driving between
    # delivery windows, so consecutive episodes see correlated channels
    env.reset(np.random.SeedSequence([seed, STREAM_ENV]))
    for j in range(settings.episodes + 1):
        if j > 0:
            env.next_episode()
        sample_rngs = [
            np.random.default_rng(np.random.SeedSequence(
                [seed, STREAM_SAMPLE, j, i]))
            for i in range(k)
        ]
        local_models, optimizers, _, episode_return = run_episode(
            env, local_models, optimizers, sample_rngs, method, baseline)

        if method.learns:
            for i, m in enumerate(local_models):
                if not m.all_finite():
                    raise NanDivergenceError(
                        f"non-finite weights in agent {i} after episode {j} "
                        f"({method.value}, seed {seed})")

        if method.aggregates and j % settings.aggregation_interval == 0:
            canonical = [canon(m) for m in local_models]
            uploads += k
            if message_log is not None:
                for i in range(k):
                    message_log.append({"episode": j, "event": "upload",
                                        "agent": i, "bytes": model_bytes})
            global_model = canon(aggregate(canonical))
            if not global_model.all_finite():
                raise NanDivergenceError(
                    f"non-finite aggregated model after episode {j} "
                    f"({method.value}, seed {seed})")
            local_models = [global_model.copy() for _ in range(k)]
            if settings.reset_optimizer_on_broadcast:
                optimizers = [
                    OptimizerState.zeros_like(m, lr, settings.rmsprop_decay,
                                              settings.rmsprop_eps)
                    for m in local_models
                ]
            aggregation_episodes.append(j)
            if message_log is not None:
                message_log.append({"episode": j, "event": "broadcast",
                                    "agent": -1, "bytes": model_bytes * k})

        returns.append(episode_return)
        if settings.use_reward_baseline:
            w = settings.baseline_window
            window = returns if w <= 0 else returns[-w:]
            baseline = sum(window) / len(window)
        metrics.episodes.append(EpisodeRecord(
            method.value, seed, j, episode_return,
            tail_moving_average(returns, settings.moving_average_window)))

        if checkpoint_dir is not None:
            interval = settings.checkpoint_interval
            if (interval > 0 and j % interval == 0) or j == settings.episodes:
                target = global_model if global_model is not None \
                    else local_models[0]
                path = Path(checkpoint_dir) / f"ep{j}.ckpt"
                path.parent.mkdir(parents=True, exist_ok=True)
                save_checkpoint(path, target, j, config_digest)
        if progress is not None:
            progress(j, episode_return)

    return TrainResult(method, global_model, local_models, metrics,
                       uploads, aggregation_episodes, message_log)
