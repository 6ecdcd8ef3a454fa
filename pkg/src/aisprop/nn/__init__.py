"""Numpy sequence regressors with hand-written backpropagation."""

from aisprop.nn.config import Encoder, Loss, ModelConfig, Pooling, Positional
from aisprop.nn.model import backward, forward, init_params, predict
from aisprop.nn.optim import adam_step
from aisprop.nn.params import ParameterStore

__all__ = [
    "Encoder", "Loss", "ModelConfig", "ParameterStore", "Pooling", "Positional",
    "adam_step", "backward", "forward", "init_params", "predict",
]
