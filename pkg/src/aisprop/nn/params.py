from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np


class ParameterStore:
    """Named parameter arrays with same-shape gradient and Adam moment slots.

    ``version`` increases on every update so a forward cache can detect
    that the weights it was computed with have since changed.
    """

    def __init__(self, values: Mapping[str, np.ndarray]):
        self.values: dict[str, np.ndarray] = {k: np.array(v, dtype=np.float64) for k, v in values.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.step = 0
        self.version = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def num_parameters(self) -> int:
        return sum(v.size for v in self.values.values())

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.values.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.values.items()}

    def load(self, values: Mapping[str, np.ndarray]) -> None:
        """Overwrite values in place (shapes must match); bumps ``version``."""
        for k, v in values.items():
            self.values[k][...] = v
        self.version += 1

    def copy(self) -> "ParameterStore":
        out = ParameterStore(self.values)
        for src, dst in ((self.grads, out.grads), (self.m, out.m), (self.v, out.v)):
            for k in src:
                dst[k][...] = src[k]
        out.step = self.step
        out.version = self.version
        return out
