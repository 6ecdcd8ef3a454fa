from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from aisprop.errors import ConfigError


class Encoder(str, Enum):
    BIRECURRENT = "birecurrent"
    SELF_ATTENTION = "selfattention"
    BAG_OF_TOKENS = "bagoftokens"


class Positional(str, Enum):
    SINUSOIDAL = "sinusoidal"
    LEARNED = "learned"


class Pooling(str, Enum):
    MEAN = "mean"
    FIRST = "first"


class Loss(str, Enum):
    MAE = "mae"


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one sequence regressor.

    ``encoder`` picks the feature extractor.  With ``selfattention`` the
    token states additionally pass through a BiLSTM layer when
    ``recurrent_head`` is set.  ``birecurrent`` stacks ``num_layers`` BiLSTM
    layers directly over the embeddings.  ``bagoftokens`` sums embeddings
    and applies the head, with no encoder at all.  Recurrent layers use
    ``hidden_size // 2`` units per direction.
    """

    learning_rate: float = 1e-3
    batch_size: int = 16
    dropout: float = 0.1
    hidden_size: int = 64
    attention_heads: int = 4
    epochs: int = 10
    loss: Loss = Loss.MAE
    max_len: int = 128
    embed_dim: int = 32
    encoder: Encoder = Encoder.SELF_ATTENTION
    num_layers: int = 1
    seed: int = 0
    positional: Positional = Positional.SINUSOIDAL
    recurrent_head: bool = True
    pooling: Pooling = Pooling.MEAN
    head_hidden: int = 0
    grad_clip: float = 0.0

    def __post_init__(self) -> None:
        for name in ("encoder", "positional", "pooling", "loss"):
            cls = type(getattr(ModelConfig, name))
            value = getattr(self, name)
            if not isinstance(value, cls):
                object.__setattr__(self, name, cls(value))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        p = []
        if not self.learning_rate > 0:
            p.append("learning_rate: must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            p.append("dropout: must lie in [0, 1)")
        for name in ("batch_size", "hidden_size", "attention_heads", "embed_dim", "num_layers"):
            if getattr(self, name) < 1:
                p.append(f"{name}: must be >= 1")
        if self.epochs < 0:
            p.append("epochs: must be >= 0")
        if self.max_len < 2:
            p.append("max_len: must be >= 2")
        if self.head_hidden < 0:
            p.append("head_hidden: must be >= 0")
        if self.grad_clip < 0:
            p.append("grad_clip: must be >= 0 (0 disables clipping)")
        if (self.encoder is Encoder.SELF_ATTENTION and self.attention_heads >= 1
                and self.hidden_size % self.attention_heads):
            p.append("hidden_size: must be divisible by attention_heads for selfattention")
        if self.uses_recurrence and self.hidden_size % 2:
            p.append("hidden_size: must be even when a bidirectional recurrent layer is used")
        return p

    @property
    def uses_recurrence(self) -> bool:
        return self.encoder is Encoder.BIRECURRENT or (
            self.encoder is Encoder.SELF_ATTENTION and self.recurrent_head)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)
