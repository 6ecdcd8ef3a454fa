"""CSV ingestion, tokenization caching, splits, target scaling and batching."""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from aisprop.ais import smiles_to_ais
from aisprop.errors import DataError, FormatError, MissingColumn, SmilesError
from aisprop.molgraph import lex_smiles
from aisprop.vocab import Vocabulary

PROPERTIES = ("qed", "logp", "molwt")

# property name -> CSV header, for the two public ZINC layouts
ZINC250K_COLUMNS = {"smiles": "smiles", "logp": "logP", "qed": "qed"}
ZINC310K_COLUMNS = {"smiles": "smiles", "qed": "qed", "logp": "logP", "molwt": "MolWt"}


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


class Representation(str, Enum):
    AIS = "ais"
    SMILES = "smiles"


@dataclass
class Record:
    smiles: str
    targets: dict[str, float]
    tokens_ais: tuple[str, ...] | None = None
    tokens_smiles: tuple[str, ...] | None = None
    split: Split | None = None
    row_number: int = 0

    def tokens(self, representation: Representation | str) -> tuple[str, ...]:
        rep = Representation(representation)
        toks = self.tokens_ais if rep is Representation.AIS else self.tokens_smiles
        if toks is None:
            raise DataError(f"record {self.smiles!r} has no cached {rep.value} tokens")
        return toks


@dataclass(frozen=True)
class Reject:
    row_number: int
    reason: str


@dataclass
class LoadResult:
    records: list[Record]
    rejects: list[Reject] = field(default_factory=list)
    duplicates: int = 0  # rows whose SMILES already appeared earlier in the file

    @property
    def reject_rate(self) -> float:
        total = len(self.records) + len(self.rejects)
        return len(self.rejects) / total if total else 0.0


# ---------------------------------------------------------------------------
# Loading


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def infer_column_map(header: Sequence[str]) -> dict[str, str]:
    """Match known property names case-insensitively against a header row."""
    lower = {h.strip().lower(): h for h in header}
    out = {}
    for name in ("smiles",) + PROPERTIES:
        if name in lower:
            out[name] = lower[name]
    return out


def _check_range(prop: str, value: float) -> str | None:
    if not math.isfinite(value):
        return f"RangeViolation: {prop}={value} is not finite"
    if prop == "qed" and not 0.0 <= value <= 1.0:
        return f"RangeViolation: qed={value} outside [0, 1]"
    if prop == "molwt" and value <= 0.0:
        return f"RangeViolation: molwt={value} must be positive"
    return None


def tokenize_smiles(s: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Both tokenizations of one SMILES from a single parse: (ais, smiles)."""
    seq = smiles_to_ais(s)
    return tuple(seq.render()), tuple(lex.text for lex in lex_smiles(seq.source_smiles))


def _tokenize_chunk(smiles: list[str]) -> list[tuple | str]:
    out: list[tuple | str] = []
    for s in smiles:
        try:
            out.append(tokenize_smiles(s))
        except SmilesError as exc:
            out.append(f"{type(exc).__name__}: {exc}")
    return out


def _tokenize_all(smiles: list[str], workers: int) -> list[tuple | str]:
    if workers <= 1 or len(smiles) < 2000:
        return _tokenize_chunk(smiles)
    size = math.ceil(len(smiles) / (workers * 4))
    chunks = [smiles[i:i + size] for i in range(0, len(smiles), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves order, so results do not depend on scheduling
        return [r for part in pool.map(_tokenize_chunk, chunks) for r in part]


def load_csv(path: str | os.PathLike, column_map: Mapping[str, str] | None = None,
             *, tokenize: bool = True, workers: int = 1, limit: int | None = None) -> LoadResult:
    """Read a ZINC-style CSV into records.

    ``column_map`` maps ``smiles`` and each wanted property name to its
    header; when omitted it is inferred from the header.  Rows that fail to
    parse or violate a target range are returned as rejects, keyed by their
    1-based data row number.  ``limit`` caps the number of data rows read.

    Raises:
        MissingColumn: a mapped column is absent from the header.
        FormatError: the file has no header row.
        OSError: the file cannot be read.
    """
    path = Path(path)
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected a header row") from None
        cmap = dict(column_map) if column_map is not None else infer_column_map(header)
        if "smiles" not in cmap:
            raise MissingColumn(f"{path}: no smiles column in header {header}")
        missing = [col for col in cmap.values() if col not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {name: header.index(col) for name, col in cmap.items()}
        props = [p for p in cmap if p != "smiles"]

        pending: list[tuple[int, str, dict[str, float]]] = []
        rejects: list[Reject] = []
        for row_number, row in enumerate(reader, 1):
            if limit is not None and row_number > limit:
                break
            if len(row) != len(header):
                rejects.append(Reject(row_number, f"FormatError: expected {len(header)} fields, got {len(row)}"))
                continue
            smiles = row[pos["smiles"]].strip()
            targets: dict[str, float] = {}
            problem = None
            for p in props:
                text = row[pos[p]].strip()
                try:
                    value = float(text)
                except ValueError:
                    problem = f"FormatError: {p}={text!r} is not a number"
                    break
                problem = _check_range(p, value)
                if problem:
                    break
                targets[p] = value
            if problem is None and not smiles:
                problem = "SmilesSyntaxError: empty SMILES"
            if problem:
                rejects.append(Reject(row_number, problem))
            else:
                pending.append((row_number, smiles, targets))

    records: list[Record] = []
    if tokenize:
        results = _tokenize_all([s for _, s, _ in pending], workers)
    else:
        results = [None] * len(pending)
    for (row_number, smiles, targets), res in zip(pending, results):
        if isinstance(res, str):
            rejects.append(Reject(row_number, res))
            continue
        ais, smi = res if res is not None else (None, None)
        records.append(Record(smiles, targets, ais, smi, None, row_number))
    rejects.sort(key=lambda r: r.row_number)
    counts = Counter(r.smiles for r in records)
    dups = sum(c - 1 for c in counts.values())
    return LoadResult(records, rejects, dups)


def write_rejects(rejects: Iterable[Reject], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_number", "reason"])
    for r in rejects:
        w.writerow([r.row_number, r.reason])
    _atomic_write(Path(path), buf.getvalue())


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Token cache (JSONL)


def write_jsonl(records: Iterable[Record], path: str | os.PathLike,
                representation: Representation | str) -> int:
    """One ``{smiles, tokens, targets, split}`` object per line; returns the count."""
    rep = Representation(representation)
    lines = []
    for r in records:
        obj = {"smiles": r.smiles, "tokens": list(r.tokens(rep)), "targets": r.targets,
               "split": r.split.value if r.split else None}
        lines.append(json.dumps(obj, sort_keys=True))
    _atomic_write(Path(path), "".join(line + "\n" for line in lines))
    return len(lines)


def _looks_like_ais(tokens: Sequence[str]) -> bool:
    # every AIS atom token carries ';' separators, and SMILES tokens never do
    return any(";" in t for t in tokens)


def read_jsonl(path: str | os.PathLike) -> tuple[list[Record], Representation | None]:
    """Read a token cache.  Returns the records and the detected representation.

    Raises:
        FormatError: a line is not a valid cache object or representations mix.
    """
    records: list[Record] = []
    rep: Representation | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                smiles, tokens, targets = obj["smiles"], obj["tokens"], obj["targets"]
                split = Split(obj["split"]) if obj.get("split") else None
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad cache line ({exc})") from None
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise FormatError(f"{path}:{lineno}: tokens must be a list of strings")
            this = Representation.AIS if _looks_like_ais(tokens) else Representation.SMILES
            if rep is None:
                rep = this
            elif rep is not this:
                raise FormatError(f"{path}:{lineno}: mixed AIS and SMILES tokens")
            tok = tuple(tokens)
            rec = Record(smiles, {k: float(v) for k, v in targets.items()},
                         tok if this is Representation.AIS else None,
                         tok if this is Representation.SMILES else None,
                         split, lineno)
            records.append(rec)
    return records, rep


# ---------------------------------------------------------------------------
# Splits


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 42

    def __post_init__(self) -> None:
        if len(self.fractions) != 3:
            raise ValueError("fractions must be a (train, valid, test) triple")
        if not all(0.0 < f < 1.0 for f in self.fractions):
            raise ValueError(f"each fraction must lie in (0, 1), got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")

    def counts(self, n: int) -> tuple[int, int, int]:
        """Largest-remainder apportionment, so each count is within 1 of its share."""
        shares = [f * n for f in self.fractions]
        base = [math.floor(s) for s in shares]
        order = sorted(range(3), key=lambda i: (-(shares[i] - base[i]), i))
        for i in order[: n - sum(base)]:
            base[i] += 1
        return base[0], base[1], base[2]


def assign_splits(records: Sequence[Record], spec: SplitSpec) -> list[Record]:
    """Return copies of ``records`` with ``split`` set; inputs are not modified."""
    n = len(records)
    n_train, n_valid, _ = spec.counts(n)
    perm = np.random.default_rng(spec.seed).permutation(n)
    labels = [Split.TEST] * n
    for rank, idx in enumerate(perm):
        if rank < n_train:
            labels[idx] = Split.TRAIN
        elif rank < n_train + n_valid:
            labels[idx] = Split.VALID
    return [replace(r, split=lab) for r, lab in zip(records, labels)]


def select(records: Iterable[Record], split: Split | str) -> list[Record]:
    s = Split(split)
    return [r for r in records if r.split is s]


# ---------------------------------------------------------------------------
# Target scaling


@dataclass(frozen=True)
class TargetScaler:
    """Per-property z-scoring with statistics from Train rows only."""

    stats: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    enabled: frozenset[str] = frozenset({"molwt"})

    @classmethod
    def fit(cls, records: Iterable[Record], properties: Iterable[str],
            enabled: Iterable[str] = ("molwt",)) -> "TargetScaler":
        train = [r for r in records if r.split is Split.TRAIN]
        stats = {}
        for p in properties:
            vals = np.array([r.targets[p] for r in train if p in r.targets], dtype=np.float64)
            if vals.size == 0:
                stats[p] = (0.0, 1.0)
                continue
            sd = float(vals.std())
            stats[p] = (float(vals.mean()), sd if sd > 0.0 else 1.0)
        return cls(stats, frozenset(enabled))

    def is_scaled(self, prop: str) -> bool:
        return prop in self.enabled and prop in self.stats

    def transform(self, prop: str, y):
        if not self.is_scaled(prop):
            return np.asarray(y, dtype=np.float64)
        mu, sd = self.stats[prop]
        return (np.asarray(y, dtype=np.float64) - mu) / sd

    def inverse_transform(self, prop: str, z):
        if not self.is_scaled(prop):
            return np.asarray(z, dtype=np.float64)
        mu, sd = self.stats[prop]
        return np.asarray(z, dtype=np.float64) * sd + mu

    def to_dict(self) -> dict:
        return {"enabled": sorted(self.enabled),
                "stats": {p: {"mean": m, "std": s} for p, (m, s) in sorted(self.stats.items())}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TargetScaler":
        stats = {p: (float(v["mean"]), float(v["std"])) for p, v in d["stats"].items()}
        return cls(stats, frozenset(d["enabled"]))


# ---------------------------------------------------------------------------
# Batching


@dataclass(frozen=True)
class Batch:
    ids: np.ndarray       # (B, T) int64
    lengths: np.ndarray   # (B,) int64
    targets: np.ndarray   # (B,) float64
    index: np.ndarray     # (B,) positions in the source record list

    def __len__(self) -> int:
        return int(self.ids.shape[0])


@dataclass(frozen=True)
class EncodedSet:
    """Records encoded once against a vocabulary; batches are views into it."""

    ids: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def batches(self, batch_size: int, seed: int | None = None, epoch: int = 0) -> Iterator[Batch]:
        """Fixed order when ``seed`` is None, else a per-epoch shuffle."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        n = len(self)
        if seed is None:
            order = np.arange(n)
        else:
            order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            yield Batch(self.ids[idx], self.lengths[idx], self.targets[idx], idx)


def encode_records(records: Sequence[Record], vocab: Vocabulary,
                   representation: Representation | str, max_len: int,
                   prop: str | None = None, scaler: TargetScaler | None = None) -> EncodedSet:
    """Encode every record; targets are scaled when a scaler is given.

    Without ``prop`` the target vector is all zeros (prediction-only use).
    """
    n = len(records)
    ids = np.zeros((n, max_len), dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    targets = np.zeros(n, dtype=np.float64)
    for i, r in enumerate(records):
        row, length = vocab.encode(r.tokens(representation), max_len)
        ids[i] = row
        lengths[i] = length
        if prop is not None:
            if prop not in r.targets:
                raise DataError(f"record {r.smiles!r} has no {prop} target")
            targets[i] = r.targets[prop]
    if prop is not None and scaler is not None:
        targets = scaler.transform(prop, targets)
    return EncodedSet(ids, lengths, targets)


def batches(records: Sequence[Record], batch_size: int, max_len: int, vocab: Vocabulary,
            representation: Representation | str, seed: int | None = None, *,
            prop: str | None = None, epoch: int = 0,
            scaler: TargetScaler | None = None) -> Iterator[Batch]:
    """Stream of batches; pass ``seed`` to shuffle (Train), ``None`` for fixed order."""
    enc = encode_records(records, vocab, representation, max_len, prop, scaler)
    return enc.batches(batch_size, seed, epoch)
