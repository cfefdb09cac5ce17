"""Per-coordinate sensitivity of a transformed function.

For a transform T (reversible network, linear map, or the identity) and
sample points x, the report holds the sample mean of |d(f o T^{-1})/dz_i| =
|<grad f(x), J_i(z)>| per coordinate, plus the same vector normalized by its
maximum so methods can be compared on one scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .baselines import LinearMap
from .calculus import forward_with_jacobian
from .datasets import GradientSample, stack_samples
from .functions import TestFunction, sample_points
from .revnet import RevNetParams

Transform = RevNetParams | LinearMap | None


@dataclass(frozen=True)
class SensitivityReport:
    method: str
    raw: np.ndarray
    normalized: np.ndarray
    n_samples: int
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.raw.shape[0]


def _gradients_at(source, samples) -> tuple[np.ndarray, np.ndarray]:
    """Resolve (xs, grads) from either a function plus points or a recorded dataset."""
    if isinstance(source, TestFunction):
        if samples is None:
            raise ValueError("sample points are required when source is a function")
        xs = np.asarray(samples, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != source.dim:
            raise ValueError(f"samples have shape {xs.shape}, expected (n, {source.dim})")
        grads = np.stack([source.grad(x) for x in xs])
        return xs, grads
    records: Sequence[GradientSample] = source
    if len(records) == 0:
        raise ValueError("dataset is empty")
    xs, _, grads = stack_samples(records)
    return xs, grads


def _abs_derivs(transform: Transform, xs: np.ndarray, grads: np.ndarray) -> np.ndarray:
    if transform is None:
        return np.abs(grads)
    if isinstance(transform, LinearMap):
        # x = A z, so J = A and the chain rule gives A^T grad.
        return np.abs(grads @ transform.matrix)
    _, jacs = forward_with_jacobian(transform, xs)
    return np.abs(np.matmul(grads[:, None, :], jacs)[:, 0, :])


def sensitivity(transform: Transform, source, samples=None, method: str = "") -> SensitivityReport:
    """Mean absolute partial derivatives of f o T^{-1}, normalized by the max.

    source is either a TestFunction (then `samples` supplies the evaluation
    points) or a sequence of GradientSample records (then stored gradients are
    used and `samples` must be omitted).  A constant function yields an
    all-zero report flagged degenerate.
    """
    xs, grads = _gradients_at(source, samples)
    if transform is not None and xs.shape[1] != transform.dim:
        raise ValueError(f"transform dimension {transform.dim} != sample dimension {xs.shape[1]}")
    raw = _abs_derivs(transform, xs, grads).mean(axis=0)
    peak = float(raw.max())
    if peak > 0.0:
        normalized = raw / peak
        degenerate = False
    else:
        normalized = np.zeros_like(raw)
        degenerate = True
    if not method:
        method = "identity" if transform is None else type(transform).__name__.lower()
    return SensitivityReport(
        method=method, raw=raw, normalized=normalized, n_samples=xs.shape[0], degenerate=degenerate
    )


def compare_methods(
    source,
    transforms: Mapping[str, Transform],
    n_samples: int | None = None,
    seed: int = 0,
) -> list[SensitivityReport]:
    """One sensitivity report per method on a shared validation sample set.

    An identity row is always included first, normalized on its own scale.
    For a TestFunction source, n_samples fresh points are drawn from its
    domain; for a recorded dataset the stored points are shared as-is.
    """
    if isinstance(source, TestFunction):
        if n_samples is None:
            raise ValueError("n_samples is required when source is a function")
        shared = sample_points(source.domain, n_samples, seed)
    else:
        shared = None
    reports = [sensitivity(None, source, shared, method="identity")]
    for name, transform in transforms.items():
        if name == "identity":
            continue
        reports.append(sensitivity(transform, source, shared, method=name))
    return reports


def write_sensitivity_csv(reports: Sequence[SensitivityReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "dim_index", "raw", "normalized"])
        for report in reports:
            for i in range(report.dim):
                writer.writerow([report.method, i + 1, repr(float(report.raw[i])), repr(float(report.normalized[i]))])
