import csv
import gzip
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"
ZINC250K = DATA / "zinc250k_sample.csv.gz"
ZINC310K = DATA / "zinc310k_sample.csv.gz"


def read_rows(path: Path, limit: int) -> list[dict]:
    with gzip.open(path, "rt", newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append(row)
            if len(rows) == limit:
                break
    return rows


@pytest.fixture(scope="session")
def zinc_smiles_1k() -> list[str]:
    return [r["smiles"] for r in read_rows(ZINC250K, 1000)]


@pytest.fixture
def write_csv(tmp_path):
    def _write(name: str, header: list[str], rows: list[list]) -> Path:
        path = tmp_path / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        return path

    return _write
