"""Benchmark functions with closed-form gradients, box domains, and the
samplers that generate training records.

Five built-ins are registered: a 2D sine ridge (f1), a 2D off-center Gaussian
bump (f2), a 2D cubic (f3), a 20D radial sine (f4), and a 20D product of
inverse quadratics (f5).  An arbitrary tabulated dataset (delimited text file
of x, y, gradient columns) can stand in for functions whose simulator is not
available.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datasets import GradientSample


class OutOfDomainWarning(UserWarning):
    """A point outside the declared domain box was evaluated."""


@dataclass(frozen=True)
class DomainBox:
    lower: np.ndarray
    upper: np.ndarray
    density: str = "uniform"

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("domain requires lower < upper componentwise")
        if self.density != "uniform":
            raise ValueError(f"unsupported density {self.density!r}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @classmethod
    def cube(cls, dim: int, lower: float = 0.0, upper: float = 1.0) -> "DomainBox":
        return cls(np.full(dim, lower), np.full(dim, upper))


@dataclass(frozen=True)
class TestFunction:
    id: str
    dim: int
    domain: DomainBox
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


def _f1(x):
    return 0.5 * np.sin(2.0 * np.pi * (x[0] + x[1])) + 1.0


def _f1_grad(x):
    c = np.pi * np.cos(2.0 * np.pi * (x[0] + x[1]))
    return np.array([c, c])


def _f2(x):
    return np.exp(-((x[0] - 0.5) ** 2) - x[1] ** 2)


def _f2_grad(x):
    v = _f2(x)
    return np.array([-2.0 * (x[0] - 0.5) * v, -2.0 * x[1] * v])


def _f3(x):
    return x[0] ** 3 + x[1] ** 3 + 0.2 * x[0] + 0.6 * x[1]


def _f3_grad(x):
    return np.array([3.0 * x[0] ** 2 + 0.2, 3.0 * x[1] ** 2 + 0.6])


def _f4(x):
    return np.sin(np.sum(x * x))


def _f4_grad(x):
    return 2.0 * np.cos(np.sum(x * x)) * x


_F5_CONST = 1.2 ** -2


def _f5(x):
    return float(np.prod(1.0 / (_F5_CONST + x * x)))


def _f5_grad(x):
    return _f5(x) * (-2.0 * x) / (_F5_CONST + x * x)


FUNCTIONS: dict[str, TestFunction] = {
    "f1": TestFunction("f1", 2, DomainBox.cube(2, 0.0, 1.0), _f1, _f1_grad),
    "f2": TestFunction("f2", 2, DomainBox.cube(2, 0.0, 1.0), _f2, _f2_grad),
    "f3": TestFunction("f3", 2, DomainBox.cube(2, -1.0, 1.0), _f3, _f3_grad),
    "f4": TestFunction("f4", 20, DomainBox.cube(20, 0.0, 1.0), _f4, _f4_grad),
    "f5": TestFunction("f5", 20, DomainBox.cube(20, 0.0, 1.0), _f5, _f5_grad),
}


def get_function(fn_id: str) -> TestFunction:
    try:
        return FUNCTIONS[fn_id]
    except KeyError:
        raise KeyError(f"unknown function {fn_id!r}; known: {sorted(FUNCTIONS)}") from None


def _check_point(fn: TestFunction, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (fn.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({fn.dim},)")
    if not fn.domain.contains(x):
        warnings.warn(
            f"evaluating {fn.id} outside its domain box", OutOfDomainWarning, stacklevel=3
        )
    return x


def evaluate(fn: TestFunction, x) -> float:
    return float(fn.eval(_check_point(fn, x)))


def gradient(fn: TestFunction, x) -> np.ndarray:
    return np.asarray(fn.grad(_check_point(fn, x)), dtype=float)


def sample_points(
    domain: DomainBox, n: int, seed: int, layout: str = "uniform_random"
) -> np.ndarray:
    """Points in the box: i.i.d. uniform draws, or the tensor-product lattice
    with endpoints (n must be a perfect dim-th power for the grid)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    d = domain.dim
    if layout == "uniform_random":
        rng = np.random.default_rng(seed)
        return rng.uniform(domain.lower, domain.upper, size=(n, d))
    if layout == "grid":
        per_axis = round(n ** (1.0 / d))
        if per_axis**d != n:
            raise ValueError(f"grid layout needs n = k^{d}; {n} is not a perfect power")
        axes = [np.linspace(domain.lower[i], domain.upper[i], per_axis) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    raise ValueError(f"unknown layout {layout!r}; use 'uniform_random' or 'grid'")


def sample_dataset(
    fn: TestFunction, n: int, seed: int, layout: str = "uniform_random"
) -> list[GradientSample]:
    """Deterministic training records (x, f(x), grad f(x)) for a built-in function."""
    points = sample_points(fn.domain, n, seed, layout)
    return [GradientSample(x=x, y=fn.eval(x), grad=fn.grad(x)) for x in points]


# --- tabulated datasets -------------------------------------------------------
#
# File format: delimited text with a header row naming columns
# x_1,...,x_d,y,g_1,...,g_d.  Column count is validated strictly on every row.


def _expected_header(dim: int) -> list[str]:
    return [f"x_{i + 1}" for i in range(dim)] + ["y"] + [f"g_{i + 1}" for i in range(dim)]


def save_tabulated_dataset(samples: Sequence[GradientSample], path: str | Path) -> None:
    if len(samples) == 0:
        raise ValueError("cannot save an empty dataset")
    dim = samples[0].dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(dim))
        for s in samples:
            writer.writerow([repr(v) for v in s.x] + [repr(s.y)] + [repr(v) for v in s.grad])


def load_tabulated_dataset(path: str | Path) -> list[GradientSample]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        n_cols = len(header)
        if n_cols < 3 or n_cols % 2 == 0:
            raise ValueError(f"{path}: expected 2d+1 columns (x_1..x_d, y, g_1..g_d), got {n_cols}")
        dim = (n_cols - 1) // 2
        expected = _expected_header(dim)
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: header {header} does not match expected {expected}")
        samples = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise ValueError(f"{path}:{line_no}: expected {n_cols} columns, got {len(row)}")
            values = np.array([float(v) for v in row])
            samples.append(
                GradientSample(x=values[:dim], y=values[dim], grad=values[dim + 1 :])
            )
    if not samples:
        raise ValueError(f"{path}: no data rows")
    return samples
