"""BRIO: backward column-normalizing weight rescale.

Networks built from positively homogeneous hidden activations (ReLU,
leaky ReLU) compute the same function under many different weight
scalings.  This module maps any such network to a canonical member of
its equivalence class by walking backwards from the output layer and
normalizing, per hidden unit, the column of outgoing weights as seen
through the scales already applied above.  Averaging canonicalized
networks then averages compatible parameterizations instead of
arbitrary ones.

All operations are pure: inputs are never mutated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import HIDDEN_ACTIVATIONS, MlpParams

# Columns whose norm falls below this floor keep it as their scale, so
# dead hidden units never cause a division by zero.
SCALE_FLOOR = 1e-12

# Norms this close to 1 are rounding residue of a previous rescale;
# snapping them makes the canonical form an exact fixed point (a second
# application multiplies by exactly 1.0 and changes nothing).
UNIT_SNAP = 1e-12


class UnsupportedActivationError(ValueError):
    """The network's hidden activation is not positively homogeneous."""


@dataclass
class ScaleSet:
    """Per-boundary scale vectors; scales[i] sits between layer i and i+1.

    scales[0] (network input) and scales[-1] (network output) are all
    ones so the computed function's interface is untouched.
    """

    scales: list[np.ndarray]


def _check(params: MlpParams) -> None:
    if params.activation not in HIDDEN_ACTIVATIONS:
        raise UnsupportedActivationError(
            f"activation {params.activation!r} is not positively homogeneous")
    if params.activation == "leaky_relu" and params.leaky_slope < 0:
        raise UnsupportedActivationError("leaky slope must be >= 0")
    if len(params.weights) < 2:
        raise ValueError("rescaling needs at least one hidden layer")


def compute_scales(params: MlpParams) -> ScaleSet:
    """Backward pass collecting one positive scale per hidden unit.

    For the boundary below layer i, each unit's scale is the Euclidean
    norm of its outgoing column after the boundary above layer i has
    been applied, floored at SCALE_FLOOR.
    """
    _check(params)
    n = len(params.weights)
    scales: list[np.ndarray | None] = [None] * (n + 1)
    scales[n] = np.ones(params.weights[-1].shape[0])
    for i in range(n - 1, 0, -1):
        scaled = scales[i + 1][:, None] * params.weights[i]
        norms = np.linalg.norm(scaled, axis=0)
        norms = np.where(np.abs(norms - 1.0) <= UNIT_SNAP, 1.0, norms)
        scales[i] = np.maximum(norms, SCALE_FLOOR)
    scales[0] = np.ones(params.weights[0].shape[1])
    return ScaleSet(scales)  # type: ignore[arg-type]


def rescale(params: MlpParams) -> MlpParams:
    """Return the canonicalized network; the input is left untouched.

    Layer i becomes diag(s[i+1]) @ W[i] @ diag(1/s[i]) with the bias
    scaled by s[i+1]; positive homogeneity of the hidden activations
    makes the end-to-end function identical.
    """
    s = compute_scales(params).scales
    new_w, new_b = [], []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        new_w.append(s[i + 1][:, None] * w / s[i][None, :])
        new_b.append(s[i + 1] * b)
    return MlpParams(new_w, new_b, params.activation, params.leaky_slope)
