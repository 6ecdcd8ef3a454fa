"""Finite-difference verification of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from aisprop.nn.config import ModelConfig
from aisprop.nn.model import backward, forward, init_params
from aisprop.nn.params import ParameterStore


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-5) -> float:
    """``||a - b|| / max(||a|| + ||b||, floor)`` over a whole parameter group.

    A group-level norm avoids dividing round-off by near-zero single entries.
    The floor matters for groups whose true gradient is identically zero,
    such as attention key biases (softmax ignores a per-query constant shift),
    where the numeric side is pure round-off.
    """
    a, b = np.ravel(a), np.ravel(b)
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / denom


def numeric_gradient(params: ParameterStore, config: ModelConfig, ids, lengths,
                     weights: np.ndarray, name: str, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``sum(weights * forward(...))`` w.r.t. one array."""
    theta = params.values[name]
    grad = np.zeros_like(theta)
    flat, gflat = theta.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(np.dot(weights, forward(params, config, ids, lengths)[0]))
        flat[i] = orig - eps
        down = float(np.dot(weights, forward(params, config, ids, lengths)[0]))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def check_model_gradients(config: ModelConfig, vocab_size: int, ids, lengths,
                          seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Relative error between analytic and numeric gradients per parameter.

    The scalar objective is a random weighting of the eval-mode predictions,
    so every output contributes with a distinct coefficient.
    """
    params = init_params(config, vocab_size, seed=seed)
    rng = np.random.default_rng(seed + 1)
    # perturb the deterministic parts of the init so biases and norms are generic
    for v in params.values.values():
        v += rng.normal(scale=0.1, size=v.shape)
    weights = rng.normal(size=len(lengths))
    _, cache = forward(params, config, ids, lengths)
    analytic = {k: g.copy() for k, g in backward(params, cache, weights).items()}
    return {name: relative_error(analytic[name],
                                 numeric_gradient(params, config, ids, lengths, weights, name, eps))
            for name in params.names()}
