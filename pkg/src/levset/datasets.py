"""Training records: points with function values and gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class GradientSample:
    """One training record (x, f(x), grad f(x))."""

    x: np.ndarray
    y: float
    grad: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.grad = np.asarray(self.grad, dtype=float)
        self.y = float(self.y)
        if self.x.ndim != 1 or self.grad.shape != self.x.shape:
            raise ValueError(f"x shape {self.x.shape} and grad shape {self.grad.shape} must match")
        if not (np.all(np.isfinite(self.x)) and np.isfinite(self.y) and np.all(np.isfinite(self.grad))):
            raise ValueError("sample contains non-finite values")

    @property
    def dim(self) -> int:
        return self.x.shape[0]


def stack_samples(batch: Sequence[GradientSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack a batch into (xs, ys, grads) arrays of shapes (n,d), (n,), (n,d)."""
    if len(batch) == 0:
        raise ValueError("batch is empty")
    dims = {s.dim for s in batch}
    if len(dims) != 1:
        raise ValueError(f"batch mixes dimensions {sorted(dims)}")
    xs = np.stack([s.x for s in batch])
    ys = np.array([s.y for s in batch])
    grads = np.stack([s.grad for s in batch])
    return xs, ys, grads
