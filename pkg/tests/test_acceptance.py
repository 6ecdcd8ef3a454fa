"""End-to-end acceptance checks, one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from aisprop.ais import ais_to_smiles, smiles_to_ais
from aisprop.cli import AblationConfig, main, run_ablation
from aisprop.dataset import Split, SplitSpec, assign_splits, load_csv, select
from aisprop.descriptors import mol_weight
from aisprop.ensemble import EnsembleConfig, bootstrap_resample, default_base_configs, train_ensemble
from aisprop.errors import SmilesError
from aisprop.metrics import mae, r2, rmse
from aisprop.molgraph import parse_smiles
from aisprop.nn import ModelConfig
from aisprop.nn.gradcheck import check_model_gradients
from aisprop.vocab import build_vocab

from conftest import GOLDEN, ZINC250K, ZINC310K, read_rows
from test_metrics import oracle
from test_molgraph import brute_force_rings

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return _report


def test_vocabulary_contrast(report):
    t0 = time.perf_counter()
    res = load_csv(ZINC250K, limit=50_000)
    smi = build_vocab(r.tokens_smiles for r in res.records).num_regular
    ais = build_vocab(r.tokens_ais for r in res.records).num_regular
    elapsed = time.perf_counter() - t0
    ok = len(res.records) >= 50_000 * 0.999 and 60 <= smi <= 100 and 500 <= ais <= 1500 and elapsed < 120
    report(1, ok, f"{len(res.records)} molecules, SMILES vocab {smi} (need 60-100), "
                  f"AIS vocab {ais} (need 500-1500), {elapsed:.0f}s (need < 120s)")


def test_tokenizer_round_trip(report):
    smiles = [r["smiles"] for r in read_rows(ZINC250K, 10_000)]
    parseable = failures = 0
    for s in smiles:
        try:
            seq = smiles_to_ais(s)
        except SmilesError:
            continue
        parseable += 1
        failures += ais_to_smiles(seq) != s
    styrene = "C(=C)C1=CC=CC=C1"
    golden = json.loads((GOLDEN / "ais_tokens.json").read_text())[styrene]
    golden_ok = smiles_to_ais(styrene).render() == golden
    ok = failures == 0 and parseable > 0 and golden_ok
    report(2, ok, f"{parseable - failures}/{parseable} exact round trips, styrene golden match {golden_ok}")


def test_ring_and_valence_oracles(report):
    smiles = [r["smiles"] for r in read_rows(ZINC250K, 500)]
    ring_bad = 0
    for s in smiles:
        m = parse_smiles(s)
        atom_ring, bond_ring = brute_force_rings(len(m.atoms), [(b.a, b.b) for b in m.bonds])
        ring_bad += [a.in_ring for a in m.atoms] != atom_ring or [b.in_ring for b in m.bonds] != bond_ring
    rows = read_rows(ZINC310K, 10_000)
    close = sum(abs(mol_weight(r["smiles"]) - float(r["MolWt"])) <= 0.5 for r in rows)
    frac = close / len(rows)
    ok = ring_bad == 0 and frac >= 0.99
    report(3, ok, f"ring mismatches {ring_bad}/500, MolWt within 0.5 g/mol on {frac:.4f} of {len(rows)} (need >= 0.99)")


def test_metric_formulas(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        y = rng.normal(size=n) * rng.uniform(0.1, 100)
        y_hat = y + rng.normal(size=n) * rng.uniform(0.01, 10)
        ref = oracle(y, y_hat)
        got = (mae(y, y_hat), rmse(y, y_hat), r2(y, y_hat))
        worst = max(worst, *(abs(a - b) / max(1.0, abs(b)) for a, b in zip(got, ref)))
    y, y_hat = [1, 2, 3, 4], [1.5, 2.5, 2.5, 4]
    examples = (mae(y, y_hat) == 0.375 and rmse(y, y_hat) == math.sqrt(0.75 / 4)
                and r2(y, y_hat) == 1 - 0.75 / 5)
    ok = worst <= 1e-12 and examples
    report(4, ok, f"max deviation from oracle {worst:.2e} (need <= 1e-12), worked examples exact {examples}")


GRAD_VARIANTS = [
    ModelConfig(embed_dim=4, hidden_size=4, attention_heads=2, max_len=8, **kw)
    for kw in (
        {"encoder": "selfattention", "positional": "sinusoidal"},
        {"encoder": "selfattention", "positional": "learned"},
        {"encoder": "selfattention", "recurrent_head": False, "num_layers": 2, "pooling": "first"},
        {"encoder": "birecurrent"},
        {"encoder": "birecurrent", "num_layers": 2, "head_hidden": 3},
        {"encoder": "bagoftokens"},
    )
]


def test_gradient_correctness(report):
    ids = np.array([[2, 5, 6, 4, 3, 0], [2, 4, 4, 3, 0, 0], [2, 6, 3, 0, 0, 0]])
    lengths = np.array([5, 4, 3])
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for cfg in GRAD_VARIANTS:
        for name, err in check_model_gradients(cfg, 7, ids, lengths, seed=1).items():
            if err > worst:
                worst, where = err, f"{cfg.encoder.value}/{name}"
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    report(5, ok, f"{len(GRAD_VARIANTS)} variants, worst relative error {worst:.2e} at {where} "
                  f"(need < 1e-4), {elapsed:.1f}s (need < 60s)")


def _desk_ensemble(rows, seed, epochs, representation):
    records = assign_splits(load_csv(ZINC250K, limit=rows).records, SplitSpec(seed=seed))
    vocab = build_vocab(r.tokens(representation) for r in select(records, Split.TRAIN))
    bases = tuple(replace(c, embed_dim=32, hidden_size=64, epochs=epochs) for c in default_base_configs())
    return train_ensemble(EnsembleConfig(bases, seed=seed), records, vocab, "qed", representation)


def test_desk_scale_learning(report):
    t0 = time.perf_counter()
    _, rep = _desk_ensemble(5000, 7, 10, "ais")
    elapsed = time.perf_counter() - t0
    base = [r.test_metrics["mae"] for r in rep.base_reports]
    ens = next(m.mae for m in rep.metrics if m.split == "test")
    ok = max(base) < 0.05 and ens <= min(base) * 1.05 and elapsed < 900
    report(6, ok, "base test QED MAE " + ", ".join(f"{b:.4f}" for b in base)
                  + f" (need < 0.05), ensemble {ens:.4f} (need <= {min(base) * 1.05:.4f}), "
                  f"{elapsed:.0f}s (need < 900s)")


ABLATION = dict(rows=5000, seeds=(0, 1, 2), epochs=10)


def test_ablation_direction(report):
    bases = tuple(replace(c, embed_dim=32, hidden_size=64, epochs=ABLATION["epochs"])
                  for c in default_base_configs())
    cfg = AblationConfig(data=str(ZINC250K), rows=ABLATION["rows"], seeds=ABLATION["seeds"],
                         ensemble=EnsembleConfig(bases))
    rows, _ = run_ablation(cfg, log=lambda s: None)
    ens = {(r[1], r[2]): r[5] for r in rows if r[0] == "ensemble" and r[3] == "test"}
    wins = sum(ens[("ais", s)] <= ens[("smiles", s)] for s in cfg.seeds)
    detail = "; ".join(f"seed {s}: AIS {ens[('ais', s)]:.4f} vs SMILES {ens[('smiles', s)]:.4f}" for s in cfg.seeds)
    report(7, wins >= 2, f"AIS <= SMILES on {wins}/3 seeds (need >= 2): {detail}")


def test_determinism(report, tmp_path, write_csv):
    rows = read_rows(ZINC250K, 300)
    data = write_csv("mols.csv", ["smiles", "logP", "qed"], [[r["smiles"], r["logP"], r["qed"]] for r in rows])
    (tmp_path / "single.json").write_text(json.dumps({"epochs": 2, "embed_dim": 16, "hidden_size": 16}))
    (tmp_path / "ens.json").write_text(json.dumps({"bagging_size": 4, "base_configs": [
        {"epochs": 1, "embed_dim": 8, "hidden_size": 8, "positional": p} for p in ("sinusoidal", "learned")
    ] + [{"epochs": 1, "embed_dim": 8, "hidden_size": 8, "encoder": "birecurrent"}]}))
    (tmp_path / "ablate.json").write_text(json.dumps({"data": str(data), "rows": 120, "ensemble": {
        "bagging_size": 2, "base_configs": [{"epochs": 1, "embed_dim": 8, "hidden_size": 8, "encoder": "birecurrent"}]}}))
    produced = []
    for run in ("a", "b"):
        d = tmp_path / run
        cmds = [
            ["tokenize", "--input", data, "--output", d / "t.jsonl"],
            ["vocab", "--input", d / "t.jsonl", "--output", d / "v.tsv"],
            ["train", "--config", tmp_path / "single.json", "--data", d / "t.jsonl", "--vocab", d / "v.tsv",
             "--out", d / "single"],
            ["train-ensemble", "--config", tmp_path / "ens.json", "--data", d / "t.jsonl", "--vocab", d / "v.tsv",
             "--out", d / "ens"],
            ["evaluate", "--model", d / "single", "--data", d / "t.jsonl", "--vocab", d / "v.tsv",
             "--split", "train,valid,test", "--out", d / "single.csv", "--predictions", d / "pred.csv"],
            ["evaluate", "--model", d / "ens", "--data", d / "t.jsonl", "--vocab", d / "v.tsv",
             "--out", d / "ens.csv"],
            ["report", "--predictions", d / "pred.csv", "--out", d / "report"],
            ["ablate", "--config", tmp_path / "ablate.json", "--out", d / "ablate"],
        ]
        codes = [main(["--seed", "5"] + [str(a) for a in c]) for c in cmds]
        assert codes == [0] * len(cmds), codes
        produced.append(d)
    files = ["t.jsonl", "v.tsv", "single/train_report.json", "single/params.ckpt", "ens/train_report.json",
             "single.csv", "ens.csv", "pred.csv", "report/hist_qed.csv", "ablate/ablation.csv"]
    differ = [f for f in files if (produced[0] / f).read_bytes() != (produced[1] / f).read_bytes()]
    report(8, not differ, f"{len(files) - len(differ)}/{len(files)} outputs byte-identical across two runs"
                          + (f", differing: {', '.join(differ)}" if differ else ""))


def test_bootstrap_statistics(report):
    fracs = [len(set(bootstrap_resample(range(1000), seed))) / 1000 for seed in range(50)]
    mean = float(np.mean(fracs))
    ok = abs(mean - (1 - math.exp(-1))) <= 0.03
    report(9, ok, f"mean distinct fraction {mean:.4f} (need 0.632 +/- 0.03)")
