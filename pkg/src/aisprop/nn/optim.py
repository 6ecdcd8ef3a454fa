from __future__ import annotations

import numpy as np

from aisprop.errors import NonFiniteGradient
from aisprop.nn.params import ParameterStore

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


def adam_update(theta: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, step: int,
                lr: float, beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS) -> None:
    """In-place Adam update of one array; ``step`` is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_gradients(store: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in store.grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in store.grads.values():
            g *= scale
    return norm


def adam_step(store: ParameterStore, learning_rate: float) -> None:
    """One Adam step over every parameter using ``store.grads``.

    Raises:
        NonFiniteGradient: any gradient entry is NaN or infinite; the store
            is left untouched.
    """
    for name, g in store.grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"gradient of {name} is not finite")
    store.step += 1
    for name, theta in store.values.items():
        adam_update(theta, store.grads[name], store.m[name], store.v[name], store.step, learning_rate)
    store.version += 1
