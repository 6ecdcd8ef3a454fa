"""Regression metrics: MAE, RMSE and the coefficient of determination."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from aisprop.errors import EmptyInput, LengthMismatch, ZeroVariance


def _as_pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"y has {y.size} values, y_hat has {y_hat.size}")
    if y.size == 0:
        raise EmptyInput("metrics need at least one value")
    if not (np.isfinite(y).all() and np.isfinite(y_hat).all()):
        raise ValueError("metrics inputs must be finite")
    return y, y_hat


# np.sum reduces with pairwise summation, which keeps large-n error small.


def mae(y, y_hat) -> float:
    y, y_hat = _as_pair(y, y_hat)
    return float(np.sum(np.abs(y - y_hat)) / y.size)


def rmse(y, y_hat) -> float:
    y, y_hat = _as_pair(y, y_hat)
    d = y - y_hat
    return math.sqrt(float(np.sum(d * d)) / y.size)


def r2(y, y_hat) -> float:
    """``1 - SS_res / SS_tot``; negative for predictors worse than the mean."""
    y, y_hat = _as_pair(y, y_hat)
    centered = y - np.sum(y) / y.size
    ss_tot = float(np.sum(centered * centered))
    if ss_tot == 0.0:
        raise ZeroVariance("R^2 is undefined when all true values are equal")
    d = y - y_hat
    return 1.0 - float(np.sum(d * d)) / ss_tot


@dataclass(frozen=True)
class MetricsReport:
    property: str
    split: str
    n: int
    mae: float
    rmse: float
    r2: float

    @classmethod
    def compute(cls, y, y_hat, property: str = "", split: str = "") -> "MetricsReport":
        y, y_hat = _as_pair(y, y_hat)
        try:
            r2_value = r2(y, y_hat)
        except ZeroVariance:
            r2_value = float("nan")
        return cls(property, split, int(y.size), mae(y, y_hat), rmse(y, y_hat), r2_value)

    def as_row(self) -> list[str]:
        return [self.property, self.split, str(self.n), repr(self.mae), repr(self.rmse), repr(self.r2)]


CSV_HEADER = ("property", "split", "n", "mae", "rmse", "r2")


def reports_to_csv(reports: Iterable[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rep in reports:
        writer.writerow(rep.as_row())
    return buf.getvalue()


def reports_from_csv(text: str) -> list[MetricsReport]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("not a metrics CSV")
    return [MetricsReport(p, s, int(n), float(a), float(b), float(c)) for p, s, n, a, b, c in rows[1:]]
