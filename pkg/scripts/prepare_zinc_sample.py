"""Build ZINC-format CSV samples from the MOSES molecule set.

Requires RDKit (not a dependency of the package itself).  Writes
``zinc250k_sample.csv.gz`` (smiles,logP,qed) and
``zinc310k_sample.csv.gz`` (smiles,qed,logP,MolWt) to the output directory.
"""

import argparse
import csv
import gzip
import random
from pathlib import Path

from rdkit import Chem, RDLogger
from rdkit.Chem import QED, Crippen, Descriptors


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--moses", required=True, help="MOSES train.csv.gz")
    ap.add_argument("--out", required=True)
    ap.add_argument("--n", type=int, default=60000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    RDLogger.DisableLog("rdApp.*")

    with gzip.open(args.moses, "rt") as fh:
        smiles = [row["SMILES"] for row in csv.DictReader(fh)]
    random.Random(args.seed).shuffle(smiles)

    rows = []
    for s in smiles:
        mol = Chem.MolFromSmiles(s)
        if mol is None:
            continue
        rows.append((s, Crippen.MolLogP(mol), QED.qed(mol), Descriptors.MolWt(mol)))
        if len(rows) == args.n:
            break

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.open(out / "zinc250k_sample.csv.gz", "wt", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["smiles", "logP", "qed"])
        for s, logp, qed, _ in rows:
            w.writerow([s, f"{logp:.5f}", f"{qed:.6f}"])
    with gzip.open(out / "zinc310k_sample.csv.gz", "wt", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["smiles", "qed", "logP", "MolWt"])
        for s, logp, qed, mw in rows:
            w.writerow([s, f"{qed:.6f}", f"{logp:.5f}", f"{mw:.3f}"])


if __name__ == "__main__":
    main()
