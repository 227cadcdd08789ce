"""Softmax MLP policy with hand-written backpropagation.

No autodiff framework on purpose: downstream weight-rescaling code
needs direct access to the raw weight matrices, and the gradient path
here is small enough to verify against finite differences.  Weights
are (out, in) matrices applied as W @ x + b.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu")


@dataclass
class MlpParams:
    """Fully connected network: hidden activations, linear output layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    leaky_slope: float = 0.01

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases],
                         self.activation, self.leaky_slope)

    def all_finite(self) -> bool:
        return (all(np.isfinite(w).all() for w in self.weights)
                and all(np.isfinite(b).all() for b in self.biases))


@dataclass
class Gradients:
    """Same array shapes as MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class Trajectory:
    """One episode of a single agent: z_t, a_t, r_t for t = 1..T."""

    observations: np.ndarray   # (T, d)
    actions: np.ndarray        # (T,) int
    rewards: np.ndarray        # (T,)

    def total_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class OptimizerState:
    """RMSprop: per-parameter running mean of squared gradients."""

    sq_weights: list[np.ndarray]
    sq_biases: list[np.ndarray]
    learning_rate: float
    decay: float = 0.99
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParams, learning_rate: float,
                   decay: float = 0.99, eps: float = 1e-8) -> "OptimizerState":
        return cls([np.zeros_like(w) for w in params.weights],
                   [np.zeros_like(b) for b in params.biases],
                   learning_rate, decay, eps)

    def all_finite(self) -> bool:
        return (all(np.isfinite(v).all() for v in self.sq_weights)
                and all(np.isfinite(v).all() for v in self.sq_biases))


def init_params(layer_sizes: list[int], seed, activation: str = "relu",
                leaky_slope: float = 0.01) -> MlpParams:
    """He-scaled Gaussian weights, zero biases; deterministic per seed."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if activation not in HIDDEN_ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation, leaky_slope)


def _act(params: MlpParams, z: np.ndarray) -> np.ndarray:
    if params.activation == "relu":
        return np.maximum(z, 0.0)
    if params.activation == "leaky_relu":
        return np.where(z > 0.0, z, params.leaky_slope * z)
    raise ValueError(f"unknown activation {params.activation!r}")


def _act_grad(params: MlpParams, z: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0: 0 for relu, the slope for leaky_relu
    if params.activation == "relu":
        return (z > 0.0).astype(float)
    if params.activation == "leaky_relu":
        return np.where(z > 0.0, 1.0, params.leaky_slope)
    raise ValueError(f"unknown activation {params.activation!r}")


def raw_outputs(params: MlpParams, obs: np.ndarray) -> np.ndarray:
    """Pre-softmax network outputs; obs may be (d,) or a (T, d) batch."""
    x = np.asarray(obs, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w.T + b
        if i < len(params.weights) - 1:
            x = _act(params, x)
    return x[0] if squeeze else x


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: MlpParams, obs: np.ndarray) -> np.ndarray:
    """Action probabilities for one observation or a batch."""
    return softmax(raw_outputs(params, obs))


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an action index from a probability vector."""
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(
        0, len(probs) - 1))


def _forward_trace(params: MlpParams, x: np.ndarray):
    """Batched forward pass keeping layer inputs and pre-activations."""
    inputs, pres = [], []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(x)
        z = x @ w.T + b
        pres.append(z)
        x = _act(params, z) if i < len(params.weights) - 1 else z
    return inputs, pres


def _backprop(params: MlpParams, inputs, pres,
              dlogits: np.ndarray) -> Gradients:
    """Accumulate parameter gradients from per-row output-layer deltas."""
    n = len(params.weights)
    dws = [None] * n
    dbs = [None] * n
    delta = dlogits
    for i in range(n - 1, -1, -1):
        dws[i] = delta.T @ inputs[i]
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * _act_grad(params, pres[i - 1])
    return Gradients(dws, dbs)


def grad_log_prob(params: MlpParams, obs: np.ndarray,
                  action: int) -> Gradients:
    """Gradient of log pi(action | obs) with respect to every parameter."""
    x = np.asarray(obs, dtype=float)[None, :]
    inputs, pres = _forward_trace(params, x)
    probs = softmax(pres[-1])
    dlogits = -probs
    dlogits[0, action] += 1.0
    return _backprop(params, inputs, pres, dlogits)


def policy_gradient(params: MlpParams, trajectory: Trajectory,
                    baseline: float = 0.0) -> Gradients:
    """Single-trajectory estimator: the whole-episode return (minus an
    optional baseline) times the summed score function."""
    obs = np.asarray(trajectory.observations, dtype=float)
    inputs, pres = _forward_trace(params, obs)
    probs = softmax(pres[-1])
    dlogits = -probs
    dlogits[np.arange(len(trajectory.actions)), trajectory.actions] += 1.0
    scale = trajectory.total_return() - baseline
    g = _backprop(params, inputs, pres, dlogits)
    return Gradients([scale * dw for dw in g.weights],
                     [scale * db for db in g.biases])


def rmsprop_step(params: MlpParams, opt: OptimizerState, grad: Gradients,
                 ascent: bool = True) -> tuple[MlpParams, OptimizerState]:
    """One RMSprop step; returns fresh parameter and optimizer states.

    v <- decay * v + (1 - decay) * g^2, then the step is
    lr * g / (sqrt(v) + eps), added for ascent, subtracted otherwise.
    """
    sign = 1.0 if ascent else -1.0
    rho, eps, lr = opt.decay, opt.eps, opt.learning_rate
    new_w, new_b, new_vw, new_vb = [], [], [], []
    for w, vw, gw in zip(params.weights, opt.sq_weights, grad.weights):
        v = rho * vw + (1.0 - rho) * gw * gw
        new_vw.append(v)
        new_w.append(w + sign * lr * gw / (np.sqrt(v) + eps))
    for b, vb, gb in zip(params.biases, opt.sq_biases, grad.biases):
        v = rho * vb + (1.0 - rho) * gb * gb
        new_vb.append(v)
        new_b.append(b + sign * lr * gb / (np.sqrt(v) + eps))
    return (MlpParams(new_w, new_b, params.activation, params.leaky_slope),
            OptimizerState(new_vw, new_vb, lr, rho, eps))
