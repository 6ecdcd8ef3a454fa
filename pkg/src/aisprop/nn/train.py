"""MAE loss, the training loop and its JSON report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from aisprop.configio import to_mapping
from aisprop.dataset import EncodedSet
from aisprop.errors import DivergedError, EmptyBatch, EmptyInput, LengthMismatch
from aisprop.metrics import MetricsReport
from aisprop.nn.config import ModelConfig
from aisprop.nn.model import backward, forward, init_params, predict
from aisprop.nn.optim import adam_step, clip_gradients
from aisprop.nn.params import ParameterStore


def mae_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean absolute error and its (sub)gradient w.r.t. ``pred``.

    The gradient is ``-sign(target - pred) / n``, which is 0 at exact ties.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(f"pred has shape {pred.shape}, target {target.shape}")
    n = pred.size
    if n == 0:
        raise EmptyBatch("loss of an empty batch")
    diff = target - pred
    return float(np.sum(np.abs(diff)) / n), -np.sign(diff) / n


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    valid_mae: float | None
    valid_rmse: float | None
    valid_r2: float | None


@dataclass
class TrainReport:
    """Per-epoch history plus final test predictions.

    Wall-clock time is deliberately left out so that identical runs write
    identical files; timings go to the run manifest instead.
    """

    config: dict
    epochs: list[EpochRow] = field(default_factory=list)
    best_epoch: int | None = None
    test_predictions: list[float] = field(default_factory=list)
    test_metrics: dict | None = None
    property: str = ""
    representation: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        d = json.loads(text)
        d["epochs"] = [EpochRow(**row) for row in d["epochs"]]
        return cls(**d)


Inverse = Callable[[np.ndarray], np.ndarray]


def _identity(z: np.ndarray) -> np.ndarray:
    return z


def _metrics(y: np.ndarray, y_hat: np.ndarray, prop: str, split: str) -> MetricsReport:
    return MetricsReport.compute(y, y_hat, prop, split)


def train(config: ModelConfig, vocab_size: int, train_set: EncodedSet,
          valid_set: EncodedSet | None = None, test_set: EncodedSet | None = None, *,
          inverse: Inverse = _identity, prop: str = "", representation: str = "",
          progress: Callable[[EpochRow], None] | None = None) -> tuple[ParameterStore, TrainReport]:
    """Train one regressor with Adam on MAE and keep the best-validation weights.

    Targets in the encoded sets may be scaled; ``inverse`` maps predictions
    and targets back to original units before any metric is computed.  The
    run is a pure function of ``config`` (including its seed) and the data.

    Raises:
        EmptyInput: the train set is empty.
        DivergedError: the training loss becomes non-finite.
    """
    if len(train_set) == 0:
        raise EmptyInput("cannot train on an empty train split")
    c = config
    params = init_params(c, vocab_size)
    # start the output at the target median, the best constant under MAE
    params.values["head.b"][0] = float(np.median(train_set.targets))
    drop_rng = np.random.default_rng(np.random.SeedSequence([c.seed, 1]))
    report = TrainReport(config=to_mapping(c), property=prop, representation=representation)
    has_valid = valid_set is not None and len(valid_set) > 0
    y_valid = inverse(valid_set.targets) if has_valid else None
    best_mae = math.inf
    best = params.snapshot()

    for epoch in range(1, c.epochs + 1):
        total, count = 0.0, 0
        for batch in train_set.batches(c.batch_size, seed=c.seed, epoch=epoch):
            pred, cache = forward(params, c, batch.ids, batch.lengths, train=True, rng=drop_rng)
            loss, dpred = mae_loss(pred, batch.targets)
            if not math.isfinite(loss):
                raise DivergedError(f"training loss became {loss} in epoch {epoch}")
            backward(params, cache, dpred)
            if c.grad_clip > 0:
                clip_gradients(params, c.grad_clip)
            adam_step(params, c.learning_rate)
            total += loss * len(batch)
            count += len(batch)
        row = EpochRow(epoch, total / count, None, None, None)
        if has_valid:
            y_hat = inverse(predict(params, c, valid_set.ids, valid_set.lengths))
            if not np.isfinite(y_hat).all():
                raise DivergedError(f"validation predictions became non-finite in epoch {epoch}")
            m = _metrics(y_valid, y_hat, prop, "valid")
            row.valid_mae, row.valid_rmse, row.valid_r2 = m.mae, m.rmse, m.r2
            if m.mae < best_mae:
                best_mae, best = m.mae, params.snapshot()
                report.best_epoch = epoch
        else:
            best = params.snapshot()
            report.best_epoch = epoch
        report.epochs.append(row)
        if progress is not None:
            progress(row)

    params.load(best)
    if test_set is not None and len(test_set) > 0:
        y_hat = inverse(predict(params, c, test_set.ids, test_set.lengths))
        report.test_predictions = [float(v) for v in y_hat]
        m = _metrics(inverse(test_set.targets), y_hat, prop, "test")
        report.test_metrics = {"mae": m.mae, "rmse": m.rmse, "r2": m.r2, "n": m.n}
    return params, report
