"""Finite-difference verification of the hand-written backpropagation.

The checks here touch only the forward pass, so they stay independent
of the code they are judging: central differences of log pi(a|z) per
parameter entry, plus the score-function identity
sum_a pi(a) * grad log pi(a) = 0, which any correct gradient must obey.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import (Gradients, MlpParams, forward, grad_log_prob,
                     init_params)


def log_prob(params: MlpParams, obs: np.ndarray, action: int) -> float:
    return float(np.log(forward(params, obs)[action]))


def central_difference_grads(params: MlpParams, obs: np.ndarray, action: int,
                             h: float = 1e-5) -> Gradients:
    """Per-entry central differences of log pi(action | obs)."""
    dws, dbs = [], []
    for arrays, grads in ((params.weights, dws), (params.biases, dbs)):
        for a in arrays:
            g = np.zeros_like(a)
            flat_a = a.ravel()
            flat_g = g.ravel()
            for i in range(flat_a.size):
                orig = flat_a[i]
                flat_a[i] = orig + h
                up = log_prob(params, obs, action)
                flat_a[i] = orig - h
                down = log_prob(params, obs, action)
                flat_a[i] = orig
                flat_g[i] = (up - down) / (2.0 * h)
            grads.append(g)
    return Gradients(dws, dbs)


def max_grad_error(analytic: Gradients, numeric: Gradients,
                   rtol: float = 1e-4, atol: float = 1e-6) -> float:
    """Largest error ratio; <= 1 means every entry is inside tolerance."""
    worst = 0.0
    for a_list, n_list in ((analytic.weights, numeric.weights),
                           (analytic.biases, numeric.biases)):
        for a, n in zip(a_list, n_list):
            err = np.abs(a - n) / (atol + rtol * np.abs(n))
            worst = max(worst, float(err.max()))
    return worst


def score_identity_residual(params: MlpParams, obs: np.ndarray) -> float:
    """Max |sum_a pi(a) grad log pi(a)| over all parameter entries."""
    probs = forward(params, obs)
    total: Gradients | None = None
    for action, p in enumerate(probs):
        g = grad_log_prob(params, obs, action)
        if total is None:
            total = Gradients([p * w for w in g.weights],
                              [p * b for b in g.biases])
        else:
            for acc, w in zip(total.weights, g.weights):
                acc += p * w
            for acc, b in zip(total.biases, g.biases):
                acc += p * b
    worst = max(float(np.abs(w).max()) for w in total.weights)
    return max(worst, max(float(np.abs(b).max()) for b in total.biases))


@dataclass
class GradCheckReport:
    nets: int
    max_error_ratio: float      # <= 1.0 passes (rtol/atol already folded in)
    max_score_residual: float
    rtol: float
    atol: float

    @property
    def passed(self) -> bool:
        return self.max_error_ratio <= 1.0 and self.max_score_residual <= 1e-8


def run_gradcheck(nets: int = 10, sizes=(4, 8, 6, 5), seed: int = 0,
                  h: float = 1e-5, rtol: float = 1e-4,
                  atol: float = 1e-6) -> GradCheckReport:
    """Compare backprop with central differences on random networks."""
    rng = np.random.default_rng(seed)
    worst_ratio = 0.0
    worst_residual = 0.0
    for i in range(nets):
        params = init_params(list(sizes), rng.integers(2**32))
        obs = rng.normal(size=sizes[0])
        action = int(rng.integers(sizes[-1]))
        analytic = grad_log_prob(params, obs, action)
        numeric = central_difference_grads(params, obs, action, h)
        worst_ratio = max(worst_ratio,
                          max_grad_error(analytic, numeric, rtol, atol))
        worst_residual = max(worst_residual,
                             score_identity_residual(params, obs))
    return GradCheckReport(nets, worst_ratio, worst_residual, rtol, atol)
