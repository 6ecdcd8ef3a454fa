"""Stacked ensemble: K base regressors combined by B bootstrap-bagged meta-learners.

Bases train on the Train split.  Their predictions on the Validation split
form the stacked rows a meta-learner is fit on, and each of the B
meta-learners sees its own bootstrap resample of those rows.  The final
prediction is the plain mean of the B meta outputs.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from aisprop.configio import from_mapping, to_mapping
from aisprop.dataset import EncodedSet, Record, Representation, Split, TargetScaler, encode_records, select
from aisprop.errors import ConfigError, EmptyInput, FormatError, VocabMismatch
from aisprop.metrics import MetricsReport
from aisprop.nn.checkpoint import load_arrays, save_arrays
from aisprop.nn.config import Encoder, ModelConfig, Positional
from aisprop.nn.model import init_params, predict
from aisprop.nn.params import ParameterStore
from aisprop.nn.train import TrainReport, train
from aisprop.vocab import Vocabulary


class MetaLearner(str, Enum):
    MEAN_LINEAR = "meanlinear"
    REGRESSION_STUMP = "regressionstump"


class StackingSource(str, Enum):
    VALIDATION_HOLDOUT = "validationholdout"


def default_base_configs() -> tuple[ModelConfig, ...]:
    """One base per extractor: two attention variants and a pure BiLSTM."""
    return (
        ModelConfig(encoder=Encoder.SELF_ATTENTION, positional=Positional.SINUSOIDAL),
        ModelConfig(encoder=Encoder.SELF_ATTENTION, positional=Positional.LEARNED),
        ModelConfig(encoder=Encoder.BIRECURRENT),
    )


@dataclass(frozen=True)
class EnsembleConfig:
    base_configs: tuple[ModelConfig, ...] = field(default_factory=default_base_configs)
    bagging_size: int = 10
    meta_learner: MetaLearner = MetaLearner.MEAN_LINEAR
    stacking_source: StackingSource = StackingSource.VALIDATION_HOLDOUT
    seed: int = 0
    ridge: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_configs", tuple(self.base_configs))
        object.__setattr__(self, "meta_learner", MetaLearner(self.meta_learner))
        object.__setattr__(self, "stacking_source", StackingSource(self.stacking_source))
        problems = []
        if len(self.base_configs) < 1:
            problems.append("base_configs: need at least one base model")
        if self.bagging_size < 1:
            problems.append("bagging_size: must be >= 1")
        if self.ridge < 0:
            problems.append("ridge: must be >= 0")
        if problems:
            raise ConfigError(problems)

    @property
    def K(self) -> int:
        return len(self.base_configs)

    def base_seed(self, k: int) -> int:
        return derive_seed(self.seed, 0, k)

    def meta_seeds(self) -> list[int]:
        return [derive_seed(self.seed, 1, i) for i in range(self.bagging_size)]

    def effective_base_configs(self) -> list[ModelConfig]:
        """Base configs with seeds derived from the ensemble seed."""
        return [replace(c, seed=self.base_seed(k)) for k, c in enumerate(self.base_configs)]

    @classmethod
    def from_dict(cls, d) -> "EnsembleConfig":
        return from_mapping(cls, d)


def derive_seed(seed: int, *path: int) -> int:
    """Independent 32-bit seed for a (seed, path...) coordinate.

    Parallel and serial execution draw the same numbers because each worker
    gets its seed from its index, never from a shared generator.
    """
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Bootstrap


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise EmptyInput("cannot resample zero rows")
    return np.random.default_rng(seed).integers(0, n, size=n)


def bootstrap_resample(rows, seed: int):
    """Same-size resample with replacement; arrays stay arrays, sequences become lists."""
    if isinstance(rows, np.ndarray):
        return rows[bootstrap_indices(len(rows), seed)]
    rows = list(rows)
    return [rows[i] for i in bootstrap_indices(len(rows), seed)]


# ---------------------------------------------------------------------------
# Meta-learners


@dataclass(frozen=True)
class MeanLinearFit:
    """``y = bias + X @ weights``, ridge-shrunk toward equal weights ``1/K``.

    With strong shrinkage this is the plain average of the bases plus an
    offset; with K = 1 and a perfect base it is exactly the identity.
    """

    weights: tuple[float, ...]
    bias: float

    kind = MetaLearner.MEAN_LINEAR

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, ridge: float = 0.1) -> "MeanLinearFit":
        n, K = X.shape
        prior = np.full(K, 1.0 / K)
        r = y - X @ prior
        Xc = X - X.mean(axis=0)
        rc = r - r.mean()
        # penalty scaled by the average feature energy so ridge is unit-free
        energy = float(np.trace(Xc.T @ Xc)) / K
        A = Xc.T @ Xc + ridge * max(energy, 1e-12) * np.eye(K)
        u = np.linalg.solve(A, Xc.T @ rc)
        w = prior + u
        b = float(np.mean(y - X @ w))
        return cls(tuple(float(v) for v in w), b)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ np.asarray(self.weights) + self.bias

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "weights": list(self.weights), "bias": self.bias}


@dataclass(frozen=True)
class StumpFit:
    """Depth-1 regression tree: ``left if x[feature] <= threshold else right``."""

    feature: int
    threshold: float
    left: float
    right: float

    kind = MetaLearner.REGRESSION_STUMP

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, ridge: float = 0.0) -> "StumpFit":
        n, K = X.shape
        mean = float(y.mean())
        best = (float(np.sum((y - mean) ** 2)), cls(0, float("inf"), mean, mean))
        for f in range(K):
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            csum = np.cumsum(ys)
            csq = np.cumsum(ys * ys)
            tot, tot_sq = csum[-1], csq[-1]
            for i in range(n - 1):
                if xs[i] == xs[i + 1]:
                    continue
                nl, nr = i + 1, n - i - 1
                sl, sr = csum[i], tot - csum[i]
                sse = (csq[i] - sl * sl / nl) + ((tot_sq - csq[i]) - sr * sr / nr)
                if sse < best[0] - 1e-12:
                    thr = float(0.5 * (xs[i] + xs[i + 1]))
                    best = (sse, cls(f, thr, float(sl / nl), float(sr / nr)))
        return best[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left, self.right)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right}


MetaFit = MeanLinearFit | StumpFit
_META_CLASSES = {MetaLearner.MEAN_LINEAR: MeanLinearFit, MetaLearner.REGRESSION_STUMP: StumpFit}


def meta_from_dict(d: dict) -> MetaFit:
    try:
        kind = MetaLearner(d["kind"])
        if kind is MetaLearner.MEAN_LINEAR:
            return MeanLinearFit(tuple(float(w) for w in d["weights"]), float(d["bias"]))
        return StumpFit(int(d["feature"]), float(d["threshold"]), float(d["left"]), float(d["right"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad meta-learner file: {exc}") from None


def fit_bagged(X: np.ndarray, y: np.ndarray, kind: MetaLearner, seeds: Sequence[int],
               ridge: float = 0.1) -> list[MetaFit]:
    """One meta-learner per seed, each on its own bootstrap of the rows."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cls = _META_CLASSES[MetaLearner(kind)]
    fits = []
    for s in seeds:
        idx = bootstrap_indices(len(y), s)
        fits.append(cls.fit(X[idx], y[idx], ridge))
    return fits


def bagged_predict(metas: Sequence[MetaFit], X: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the individual meta outputs."""
    X = np.asarray(X, dtype=np.float64)
    return np.mean([m.predict(X) for m in metas], axis=0)


# ---------------------------------------------------------------------------
# Model


@dataclass
class EnsembleModel:
    config: EnsembleConfig
    base_configs: list[ModelConfig]
    base_params: list[ParameterStore]
    metas: list[MetaFit]
    scaler: TargetScaler
    prop: str
    representation: Representation
    vocab_fingerprint: str
    vocab_size: int

    def base_matrix(self, enc: EncodedSet) -> np.ndarray:
        """(n, K) stacked base predictions in the (possibly scaled) target space."""
        cols = [predict(p, c, enc.ids, enc.lengths) for p, c in zip(self.base_params, self.base_configs)]
        return np.stack(cols, axis=1)


@dataclass
class EnsembleReport:
    base_reports: list[TrainReport]
    metrics: list[MetricsReport]
    test_predictions: list[float]

    def to_dict(self) -> dict:
        return {
            "base_reports": [r.to_dict() for r in self.base_reports],
            "metrics": [m.__dict__ for m in self.metrics],
            "test_predictions": self.test_predictions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def _train_base(args):
    cfg, vocab_size, tr, va, te, scaler, prop, rep = args
    return train(cfg, vocab_size, tr, va, te, inverse=lambda z: scaler.inverse_transform(prop, z),
                 prop=prop, representation=rep)


def train_ensemble(cfg: EnsembleConfig, records: Sequence[Record], vocab: Vocabulary, prop: str,
                   representation: Representation | str, scaler: TargetScaler | None = None,
                   workers: int = 1) -> tuple[EnsembleModel, EnsembleReport]:
    """Train the K bases on Train and fit the bagged meta-learners on Validation.

    Test rows, if any, are only predicted; they never influence a fit.

    Raises:
        EmptyInput: the Train or Validation split is empty.
    """
    rep = Representation(representation)
    train_rows = select(records, Split.TRAIN)
    valid_rows = select(records, Split.VALID)
    test_rows = select(records, Split.TEST)
    if not train_rows or not valid_rows:
        raise EmptyInput("ensemble training needs non-empty train and validation splits")
    if scaler is None:
        scaler = TargetScaler.fit(records, [prop])
    base_cfgs = cfg.effective_base_configs()
    max_len = max(c.max_len for c in base_cfgs)

    def enc(rows):
        return encode_records(rows, vocab, rep, max_len, prop, scaler)

    tr, va, te = enc(train_rows), enc(valid_rows), enc(test_rows)
    jobs = [(c, len(vocab), tr, va, te, scaler, prop, rep.value) for c in base_cfgs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_train_base, jobs))
    else:
        results = [_train_base(j) for j in jobs]

    model = EnsembleModel(cfg, base_cfgs, [p for p, _ in results], [], scaler, prop, rep,
                          vocab.fingerprint(), len(vocab))
    X_valid = model.base_matrix(va)
    model.metas = fit_bagged(X_valid, va.targets, cfg.meta_learner, cfg.meta_seeds(), cfg.ridge)

    metrics = []
    inv = lambda z: scaler.inverse_transform(prop, z)  # noqa: E731
    for name, es in (("train", tr), ("valid", va), ("test", te)):
        if len(es) == 0:
            continue
        y_hat = inv(bagged_predict(model.metas, model.base_matrix(es)))
        metrics.append(MetricsReport.compute(inv(es.targets), y_hat, prop, name))
        if name == "test":
            test_pred = [float(v) for v in y_hat]
    report = EnsembleReport([r for _, r in results], metrics, test_pred if len(te) else [])
    return model, report


def predict_ensemble(model: EnsembleModel, records: Sequence[Record], vocab: Vocabulary) -> np.ndarray:
    """Ensemble predictions in original target units, one per record.

    Raises:
        VocabMismatch: ``vocab`` is not the vocabulary the model was trained with.
    """
    if vocab.fingerprint() != model.vocab_fingerprint:
        raise VocabMismatch("vocabulary differs from the one the ensemble was trained with")
    if not records:
        return np.zeros(0)
    max_len = max(c.max_len for c in model.base_configs)
    enc = encode_records(records, vocab, model.representation, max_len)
    z = bagged_predict(model.metas, model.base_matrix(enc))
    return model.scaler.inverse_transform(model.prop, z)


# ---------------------------------------------------------------------------
# Persistence


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def save_ensemble(model: EnsembleModel, directory: str | os.PathLike) -> list[Path]:
    """Write base checkpoints, meta files and ``ensemble.json``; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for k, params in enumerate(model.base_params):
        path = d / f"base_{k}.ckpt"
        save_arrays(params.values, path)
        written.append(path)
    for i, meta in enumerate(model.metas):
        path = d / f"meta_{i}.json"
        _write_json(path, meta.to_dict())
        written.append(path)
    manifest = {
        "config": to_mapping(model.config),
        "base_configs": [to_mapping(c) for c in model.base_configs],
        "base_seeds": [c.seed for c in model.base_configs],
        "meta_seeds": model.config.meta_seeds(),
        "scaler": model.scaler.to_dict(),
        "property": model.prop,
        "representation": model.representation.value,
        "vocab_sha256": model.vocab_fingerprint,
        "vocab_size": model.vocab_size,
        "num_bases": len(model.base_params),
        "num_metas": len(model.metas),
    }
    path = d / "ensemble.json"
    _write_json(path, manifest)
    written.append(path)
    return written


def load_ensemble(directory: str | os.PathLike) -> EnsembleModel:
    d = Path(directory)
    try:
        man = json.loads((d / "ensemble.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{d / 'ensemble.json'}: {exc}") from None
    cfg = EnsembleConfig.from_dict(man["config"])
    base_cfgs = [from_mapping(ModelConfig, c) for c in man["base_configs"]]
    bases = []
    for k, c in enumerate(base_cfgs):
        store = init_params(c, man["vocab_size"])
        arrays = load_arrays(d / f"base_{k}.ckpt")
        if set(arrays) != set(store.values) or any(arrays[n].shape != store[n].shape for n in arrays):
            raise FormatError(f"base_{k}.ckpt does not match its configuration")
        store.load(arrays)
        bases.append(store)
    metas = [meta_from_dict(json.loads((d / f"meta_{i}.json").read_text(encoding="utf-8")))
             for i in range(man["num_metas"])]
    return EnsembleModel(cfg, base_cfgs, bases, metas, TargetScaler.from_dict(man["scaler"]),
                         man["property"], Representation(man["representation"]),
                         man["vocab_sha256"], man["vocab_size"])
