"""Command-line pipeline: tokenize, vocab, train, train-ensemble, evaluate, report, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import platform
import sys
import time
import traceback
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from aisprop import __version__
from aisprop.configio import from_mapping, to_mapping
from aisprop.dataset import (
    PROPERTIES, Record, Representation, Split, SplitSpec, TargetScaler, assign_splits,
    encode_records, load_csv, read_jsonl, select, write_jsonl, write_rejects,
)
from aisprop.ensemble import (
    EnsembleConfig, load_ensemble, predict_ensemble, save_ensemble, train_ensemble,
)
from aisprop.errors import AisPropError, ConfigError, DataError, FormatError, VocabMismatch
from aisprop.metrics import MetricsReport, reports_to_csv
from aisprop.nn.checkpoint import load_arrays, save_arrays
from aisprop.nn.config import ModelConfig
from aisprop.nn.model import init_params, predict
from aisprop.nn.train import train
from aisprop.vocab import Vocabulary, build_vocab, load_vocab, save_vocab

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
HIST_BINS = 50


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which means data error here
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Helpers


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_json(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_json(path: Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    seed: int | None
    threads: int
    config_sha256: str | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__
    wall_time_s: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def add_input(self, path: str | os.PathLike) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def write(self, path: Path) -> None:
        data = dataclasses.asdict(self)
        data["python"] = platform.python_version()
        data["numpy"] = np.__version__
        write_json(path, data)


def _load_config_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return data


@dataclass(frozen=True)
class TaskSettings:
    """Pipeline keys accepted next to the model or ensemble fields in a config file."""

    property: str = "qed"
    scale_targets: tuple[str, ...] = ("molwt",)

    def __post_init__(self) -> None:
        problems = []
        if self.property not in PROPERTIES:
            problems.append(f"property: must be one of {', '.join(PROPERTIES)}")
        for p in self.scale_targets:
            if p not in PROPERTIES:
                problems.append(f"scale_targets: unknown property {p!r}")
        if problems:
            raise ConfigError(problems)


def split_config(data: dict, main_cls: type) -> tuple[Any, TaskSettings]:
    """Parse a flat config into ``main_cls`` plus task settings, reporting all problems."""
    task_keys = {f.name for f in dataclasses.fields(TaskSettings)}
    main_part = {k: v for k, v in data.items() if k not in task_keys}
    task_part = {k: v for k, v in data.items() if k in task_keys}
    problems: list[str] = []
    main = task = None
    try:
        main = from_mapping(main_cls, main_part)
    except ConfigError as exc:
        problems += exc.problems
    try:
        task = from_mapping(TaskSettings, task_part)
    except ConfigError as exc:
        problems += exc.problems
    if problems:
        raise ConfigError(problems)
    return main, task


def _records_with_splits(path: str) -> tuple[list[Record], Representation]:
    records, rep = read_jsonl(path)
    if not records or rep is None:
        raise DataError(f"{path}: no records")
    if any(r.split is None for r in records):
        raise DataError(f"{path}: every record needs a split; re-run tokenize")
    return records, rep


def _scaler_for(records: Sequence[Record], task: TaskSettings) -> TargetScaler:
    return TargetScaler.fit(records, [task.property], enabled=task.scale_targets)


# ---------------------------------------------------------------------------
# Commands


def cmd_tokenize(args, man: RunManifest) -> int:
    rep = Representation(args.representation)
    column_map = None
    if args.columns:
        column_map = dict(item.split("=", 1) for item in args.columns.split(","))
    man.add_input(args.input)
    result = load_csv(args.input, column_map, workers=args.threads, limit=args.limit)
    fractions = tuple(float(x) for x in args.split.split(","))
    try:
        spec = SplitSpec(fractions, args.seed)  # type: ignore[arg-type]
    except ValueError as exc:
        raise UsageError(f"--split: {exc}") from None
    records = assign_splits(result.records, spec)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out, rep)
    rejects_path = Path(args.rejects) if args.rejects else out.with_name(out.name + ".rejects.csv")
    write_rejects(result.rejects, rejects_path)
    counts: Counter[str] = Counter()
    for r in records:
        counts.update(r.tokens(rep))
    n_tok = sum(counts.values())
    per_split = Counter(r.split.value for r in records)
    print(f"records: {len(records)}  rejects: {len(result.rejects)}  duplicates: {result.duplicates}")
    print(f"splits: train={per_split['train']} valid={per_split['valid']} test={per_split['test']}")
    mean = n_tok / len(records) if records else 0.0
    print(f"{rep.value} tokens: {n_tok} total, {mean:.2f} per molecule, {len(counts)} distinct")
    if result.rejects:
        print(f"warning: {len(result.rejects)} row(s) rejected, see {rejects_path}", file=sys.stderr)
    man.outputs += [str(out), str(rejects_path)]
    man.extra.update({"representation": rep.value, "records": len(records),
                      "rejects": len(result.rejects), "duplicates": result.duplicates,
                      "split": list(fractions)})
    return EXIT_OK


def cmd_vocab(args, man: RunManifest) -> int:
    man.add_input(args.input)
    records, rep = read_jsonl(args.input)
    if args.split:
        records = select(records, args.split)
    vocab = build_vocab((r.tokens(rep) for r in records) if rep else [], min_count=args.min_count)
    save_vocab(vocab, args.output)
    print(f"vocabulary size (excluding specials): {vocab.num_regular}")
    man.outputs.append(str(args.output))
    man.extra.update({"representation": rep.value if rep else None, "size": vocab.num_regular,
                      "vocab_sha256": vocab.fingerprint()})
    return EXIT_OK


def _check_vocab_rep(vocab: Vocabulary, records: Sequence[Record], rep: Representation) -> None:
    # structural tokens are shared, so tell the two apart by the AIS field separator
    vocab_rep = Representation.AIS if any(";" in t for t in vocab.token_of) else Representation.SMILES
    if vocab_rep is not rep:
        raise VocabMismatch(f"data is {rep.value} but the vocabulary holds {vocab_rep.value} tokens")


def cmd_train(args, man: RunManifest) -> int:
    data = _load_config_json(args.config)
    if args.seed is not None and "seed" not in data:
        data["seed"] = args.seed
    cfg, task = split_config(data, ModelConfig)
    man.config_sha256 = sha256_json(to_mapping(cfg) | to_mapping(task))
    for p in (args.config, args.data, args.vocab):
        man.add_input(p)
    records, rep = _records_with_splits(args.data)
    vocab = load_vocab(args.vocab)
    _check_vocab_rep(vocab, records, rep)
    scaler = _scaler_for(records, task)
    prop = task.property

    def enc(split):
        return encode_records(select(records, split), vocab, rep, cfg.max_len, prop, scaler)

    t0 = time.perf_counter()
    params, report = train(cfg, len(vocab), enc(Split.TRAIN), enc(Split.VALID), enc(Split.TEST),
                           inverse=lambda z: scaler.inverse_transform(prop, z), prop=prop,
                           representation=rep.value,
                           progress=lambda row: print(f"epoch {row.epoch}: train_loss={row.train_loss:.5f}"
                                                      f" valid_mae={row.valid_mae}", file=sys.stderr))
    man.extra["train_seconds"] = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_arrays(params.values, out / "params.ckpt")
    write_json(out / "model.json", {"kind": "single", "config": to_mapping(cfg), "property": prop,
                                    "representation": rep.value, "scaler": scaler.to_dict(),
                                    "vocab_sha256": vocab.fingerprint(), "vocab_size": len(vocab)})
    atomic_write_text(out / "train_report.json", report.to_json())
    if report.test_metrics:
        m = report.test_metrics
        print(f"test {prop}: mae={m['mae']:.6f} rmse={m['rmse']:.6f} r2={m['r2']:.4f}")
    man.outputs += [str(out / n) for n in ("params.ckpt", "model.json", "train_report.json")]
    man.extra["vocab_sha256"] = vocab.fingerprint()
    return EXIT_OK


def cmd_train_ensemble(args, man: RunManifest) -> int:
    data = _load_config_json(args.config)
    if args.seed is not None and "seed" not in data:
        data["seed"] = args.seed
    cfg, task = split_config(data, EnsembleConfig)
    man.config_sha256 = sha256_json(to_mapping(cfg) | to_mapping(task))
    for p in (args.config, args.data, args.vocab):
        man.add_input(p)
    records, rep = _records_with_splits(args.data)
    vocab = load_vocab(args.vocab)
    _check_vocab_rep(vocab, records, rep)
    scaler = _scaler_for(records, task)
    t0 = time.perf_counter()
    model, report = train_ensemble(cfg, records, vocab, task.property, rep, scaler, workers=args.threads)
    man.extra["train_seconds"] = time.perf_counter() - t0
    out = Path(args.out)
    paths = save_ensemble(model, out)
    atomic_write_text(out / "train_report.json", report.to_json())
    for m in report.metrics:
        print(f"ensemble {m.split} {m.property}: mae={m.mae:.6f} rmse={m.rmse:.6f} r2={m.r2:.4f}")
    man.outputs += [str(p) for p in paths] + [str(out / "train_report.json")]
    man.extra["vocab_sha256"] = vocab.fingerprint()
    return EXIT_OK


class _SingleModel:
    def __init__(self, directory: Path):
        meta = json.loads((directory / "model.json").read_text(encoding="utf-8"))
        self.config = from_mapping(ModelConfig, meta["config"])
        self.prop = meta["property"]
        self.representation = Representation(meta["representation"])
        self.scaler = TargetScaler.from_dict(meta["scaler"])
        self.vocab_sha256 = meta["vocab_sha256"]
        self.params = init_params(self.config, meta["vocab_size"])
        arrays = load_arrays(directory / "params.ckpt")
        if set(arrays) != set(self.params.values):
            raise FormatError(f"{directory}: checkpoint does not match model.json")
        self.params.load(arrays)

    def predict(self, records: Sequence[Record], vocab: Vocabulary) -> np.ndarray:
        if vocab.fingerprint() != self.vocab_sha256:
            raise VocabMismatch("vocabulary differs from the one the model was trained with")
        enc = encode_records(records, vocab, self.representation, self.config.max_len)
        return self.scaler.inverse_transform(self.prop, predict(self.params, self.config, enc.ids, enc.lengths))


def _load_any_model(directory: Path):
    if (directory / "ensemble.json").exists():
        return load_ensemble(directory)
    if (directory / "model.json").exists():
        return _SingleModel(directory)
    raise FormatError(f"{directory}: neither model.json nor ensemble.json found")


def cmd_evaluate(args, man: RunManifest) -> int:
    model_dir = Path(args.model)
    model = _load_any_model(model_dir)
    records, rep = _records_with_splits(args.data)
    vocab = load_vocab(args.vocab)
    man.add_input(args.data)
    man.add_input(args.vocab)
    for p in sorted(model_dir.iterdir()):
        if p.is_file():
            man.add_input(p)
    if rep is not model.representation:
        raise VocabMismatch(f"data is {rep.value} but the model was trained on {model.representation.value}")
    prop = model.prop
    splits = args.split.split(",")
    valid_names = [s.value for s in Split]
    for split in splits:
        if split not in valid_names:
            raise UsageError(f"--split: unknown split {split!r}; choose from {', '.join(valid_names)}")
    reports, pred_rows = [], []
    for split in splits:
        rows = select(records, split)
        if not rows:
            raise DataError(f"split {split!r} is empty in {args.data}")
        if isinstance(model, _SingleModel):
            y_hat = model.predict(rows, vocab)
        else:
            y_hat = predict_ensemble(model, rows, vocab)
        y = np.array([r.targets[prop] for r in rows])
        reports.append(MetricsReport.compute(y, y_hat, prop, split))
        pred_rows += [(r.smiles, prop, split, repr(float(a)), repr(float(b))) for r, a, b in zip(rows, y, y_hat)]
    atomic_write_text(Path(args.out), reports_to_csv(reports))
    man.outputs.append(str(args.out))
    if args.predictions:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["smiles", "property", "split", "true", "pred"])
        w.writerows(pred_rows)
        atomic_write_text(Path(args.predictions), buf.getvalue())
        man.outputs.append(str(args.predictions))
    for m in reports:
        print(f"{m.split} {m.property}: n={m.n} mae={m.mae:.6f} rmse={m.rmse:.6f} r2={m.r2:.4f}")
    return EXIT_OK


def histogram_pair(y: np.ndarray, y_hat: np.ndarray, bins: int = HIST_BINS):
    """Counts of both series over shared uniform edges spanning their union."""
    lo = float(min(y.min(), y_hat.min()))
    hi = float(max(y.max(), y_hat.max()))
    edges = np.histogram_bin_edges(np.array([lo, hi]), bins=bins)
    return edges, np.histogram(y, edges)[0], np.histogram(y_hat, edges)[0]


def cmd_report(args, man: RunManifest) -> int:
    man.add_input(args.predictions)
    with open(args.predictions, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"property", "true", "pred"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise FormatError(f"{args.predictions}: needs columns {', '.join(sorted(needed))}")
        by_prop: dict[str, list[tuple[float, float]]] = {}
        for row in reader:
            try:
                by_prop.setdefault(row["property"], []).append((float(row["true"]), float(row["pred"])))
            except ValueError:
                raise FormatError(f"{args.predictions}: non-numeric true/pred value") from None
    if not by_prop:
        raise DataError(f"{args.predictions}: no prediction rows")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for prop, pairs in sorted(by_prop.items()):
        arr = np.array(pairs)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true", "pred"])
        w.writerows((repr(a), repr(b)) for a, b in arr)
        atomic_write_text(out / f"scatter_{prop}.csv", buf.getvalue())
        edges, c_true, c_pred = histogram_pair(arr[:, 0], arr[:, 1])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count_true", "count_pred"])
        for i in range(len(c_true)):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(c_true[i]), int(c_pred[i])])
        atomic_write_text(out / f"hist_{prop}.csv", buf.getvalue())
        man.outputs += [str(out / f"scatter_{prop}.csv"), str(out / f"hist_{prop}.csv")]
        print(f"{prop}: {len(arr)} points, {HIST_BINS} bins")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Ablation


@dataclass(frozen=True)
class AblationConfig:
    """Grid of {each base, standalone recurrent baseline, ensemble} x representations x seeds."""

    data: str = ""
    property: str = "qed"
    rows: int = 5000
    split: tuple[float, ...] = (0.8, 0.1, 0.1)
    seeds: tuple[int, ...] = (0,)
    representations: tuple[str, ...] = ("ais", "smiles")
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    baseline: ModelConfig | None = None
    scale_targets: tuple[str, ...] = ("molwt",)

    def __post_init__(self) -> None:
        problems = []
        if not self.data:
            problems.append("data: path to a CSV file is required")
        if self.property not in PROPERTIES:
            problems.append(f"property: must be one of {', '.join(PROPERTIES)}")
        if self.rows < 10:
            problems.append("rows: need at least 10")
        for r in self.representations:
            if r not in ("ais", "smiles"):
                problems.append(f"representations: unknown {r!r}")
        if not self.seeds:
            problems.append("seeds: need at least one seed")
        try:
            SplitSpec(tuple(self.split))  # type: ignore[arg-type]
        except ValueError as exc:
            problems.append(f"split: {exc}")
        if problems:
            raise ConfigError(problems)


ABLATION_HEADER = ("model", "representation", "seed", "split", "n", "mae", "rmse", "r2")


def run_ablation(cfg: AblationConfig, workers: int = 1, log=print) -> tuple[list[tuple], dict]:
    """Train the whole grid.  Returns result rows and per-representation vocab hashes."""
    prop = cfg.property
    loaded = load_csv(cfg.data, limit=cfg.rows, workers=workers)
    rows: list[tuple] = []
    vocab_hashes: dict[str, str] = {}
    for seed in cfg.seeds:
        records = assign_splits(loaded.records, SplitSpec(tuple(cfg.split), seed))  # type: ignore[arg-type]
        scaler = TargetScaler.fit(records, [prop], enabled=cfg.scale_targets)
        ens_cfg = dataclasses.replace(cfg.ensemble, seed=seed)
        for rep_name in cfg.representations:
            rep = Representation(rep_name)
            vocab = build_vocab(r.tokens(rep) for r in select(records, Split.TRAIN))
            vocab_hashes[rep.value] = vocab.fingerprint()
            model, report = train_ensemble(ens_cfg, records, vocab, prop, rep, scaler, workers=workers)
            for k, (base_cfg, base_rep) in enumerate(zip(model.base_configs, report.base_reports)):
                name = f"base{k}-{base_cfg.encoder.value}"
                if base_cfg.encoder.value == "selfattention":
                    name += f"-{base_cfg.positional.value}"
                m = base_rep.test_metrics
                if m:
                    rows.append((name, rep.value, seed, "test", m["n"], m["mae"], m["rmse"], m["r2"]))
            if cfg.baseline is not None:
                base = dataclasses.replace(cfg.baseline, seed=seed)

                def enc(split, c=base):
                    return encode_records(select(records, split), vocab, rep, c.max_len, prop, scaler)

                _, rep_report = train(base, len(vocab), enc(Split.TRAIN), enc(Split.VALID), enc(Split.TEST),
                                      inverse=lambda z: scaler.inverse_transform(prop, z), prop=prop)
                m = rep_report.test_metrics
                if m:
                    rows.append(("baseline-" + base.encoder.value, rep.value, seed, "test",
                                 m["n"], m["mae"], m["rmse"], m["r2"]))
            for m in report.metrics:
                rows.append(("ensemble", rep.value, seed, m.split, m.n, m.mae, m.rmse, m.r2))
            log(f"seed {seed} {rep.value}: " + ", ".join(f"{m.split} mae={m.mae:.5f}" for m in report.metrics))
    return rows, vocab_hashes


def ablation_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_HEADER)
    for model, rep, seed, split, n, mae, rmse, r2 in rows:
        w.writerow([model, rep, seed, split, n, repr(mae), repr(rmse), repr(r2)])
    return buf.getvalue()


def cmd_ablate(args, man: RunManifest) -> int:
    data = _load_config_json(args.config)
    if args.seed is not None and "seeds" not in data:
        data["seeds"] = [args.seed]
    cfg = from_mapping(AblationConfig, data)
    man.config_sha256 = sha256_json(to_mapping(cfg))
    man.add_input(args.config)
    man.add_input(cfg.data)
    rows, hashes = run_ablation(cfg, workers=args.threads, log=lambda s: print(s, file=sys.stderr))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "ablation.csv", ablation_csv(rows))
    man.outputs.append(str(out / "ablation.csv"))
    man.extra["vocab_sha256"] = hashes
    print(f"{len(rows)} result rows written to {out / 'ablation.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="aisprop", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"aisprop {__version__}")
    ap.add_argument("--seed", type=int, default=None,
                    help="seed for splits, and for configs that do not set one")
    ap.add_argument("--threads", type=int, default=1, help="maximum worker processes")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tokenize", help="CSV -> tokenized JSONL with splits")
    p.add_argument("--input", required=True)
    p.add_argument("--representation", choices=["ais", "smiles"], default="ais")
    p.add_argument("--output", required=True)
    p.add_argument("--rejects", help="rejects CSV (default: OUTPUT.rejects.csv)")
    p.add_argument("--columns", help="column map, e.g. smiles=SMILES,qed=QED,logp=logP")
    p.add_argument("--split", default="0.8,0.1,0.1", help="train,valid,test fractions")
    p.add_argument("--limit", type=int, help="read at most this many data rows")

    p = sub.add_parser("vocab", help="JSONL -> vocabulary TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--output", required=True)
    p.add_argument("--split", choices=[s.value for s in Split], help="count only this split")

    for name, help_ in (("train", "train one base model"), ("train-ensemble", "train the stacked ensemble")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--vocab", required=True)
        p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="metrics CSV for a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--split", default="test", help="comma-separated splits")
    p.add_argument("--out", required=True)
    p.add_argument("--predictions", help="also write per-record predictions CSV")

    p = sub.add_parser("report", help="scatter and histogram data from predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="model x representation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    return ap


COMMANDS = {
    "tokenize": cmd_tokenize, "vocab": cmd_vocab, "train": cmd_train,
    "train-ensemble": cmd_train_ensemble, "evaluate": cmd_evaluate,
    "report": cmd_report, "ablate": cmd_ablate,
}


def _manifest_path(args) -> Path:
    if args.command in ("train", "train-ensemble", "report", "ablate"):
        return Path(args.out) / "manifest.json"
    target = Path(args.output if args.command in ("tokenize", "vocab") else args.out)
    return target.with_name(target.name + ".manifest.json")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
    except UsageError as exc:
        print(f"aisprop: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    seed = args.seed if args.seed is not None else 0
    if args.command == "tokenize":
        args.seed = seed
    man = RunManifest(args.command, argv, args.seed, args.threads)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, man)
    except UsageError as exc:
        print(f"aisprop: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"aisprop: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AisPropError as exc:
        print(f"aisprop: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL
    man.wall_time_s = time.perf_counter() - t0
    man.write(_manifest_path(args))
    return code


if __name__ == "__main__":
    sys.exit(main())
