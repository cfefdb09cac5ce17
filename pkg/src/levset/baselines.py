"""Linear dimension-reduction baselines.

Both produce an orthonormal matrix whose columns are directions sorted by
importance; the reduced coordinates are z = A^T x, inverted by x = A z.  The
active-subspace directions are eigenvectors of the mean outer product of
sampled gradients.  Sliced inverse regression whitens the inputs, slices the
samples by output value, and eigendecomposes the between-slice covariance of
the slice means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import GradientSample, stack_samples
from .revnet import CheckpointError, CheckpointSchemaError, CheckpointShapeError

LINEAR_MAP_SCHEMA_VERSION = 1


class DegenerateDataError(ValueError):
    """The samples cannot support the requested decomposition."""


@dataclass(frozen=True)
class LinearMap:
    """Orthonormal transformation z = A^T x with importance-sorted columns."""

    matrix: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        d = matrix.shape[0]
        if matrix.shape != (d, d):
            raise ValueError(f"matrix must be square, got {matrix.shape}")
        if eigenvalues.shape != (d,):
            raise ValueError(f"eigenvalues must have length {d}, got {eigenvalues.shape}")
        gram_err = np.abs(matrix.T @ matrix - np.eye(d)).max()
        if gram_err > 1e-10:
            raise ValueError(f"matrix is not orthonormal (max |A^T A - I| = {gram_err:.2e})")
        if np.any(np.diff(eigenvalues) > 1e-12 * max(1.0, abs(float(eigenvalues[0])))):
            raise ValueError("eigenvalues must be sorted in descending order")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _fix_signs(matrix: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: first nonzero component of each column positive."""
    out = matrix.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12)
        anchor = nonzero[0] if nonzero.size else 0
        if col[anchor] < 0:
            out[:, i] = -col
    return out


def active_subspace(samples: Sequence[GradientSample]) -> LinearMap:
    """Eigendecomposition of C = mean_s grad_s grad_s^T, descending eigenvalues."""
    _, _, grads = stack_samples(samples)
    cov = grads.T @ grads / grads.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = _fix_signs(eigenvectors[:, order])
    return LinearMap(matrix=eigenvectors, eigenvalues=eigenvalues)


def sliced_inverse_regression(
    xs: Sequence[np.ndarray] | np.ndarray, ys: Sequence[float] | np.ndarray, n_slices: int = 10
) -> LinearMap:
    """Directions along which the inverse-regression curve E[x | y] varies.

    The inputs are whitened with the (ridge-stabilized) sample covariance, the
    samples are sorted by y and cut into n_slices near-equal slices, and the
    weighted covariance of the whitened slice means is eigendecomposed.  The
    whitened directions are mapped back and re-orthonormalized.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 2 or ys.shape != (xs.shape[0],):
        raise ValueError(f"xs shape {xs.shape} and ys shape {ys.shape} are inconsistent")
    n, d = xs.shape
    if n_slices < 1:
        raise ValueError(f"n_slices must be >= 1, got {n_slices}")
    if n < n_slices:
        raise ValueError(f"need at least n_slices={n_slices} samples, got {n}")
    if np.all(ys == ys[0]):
        raise DegenerateDataError("all outputs are equal; slicing by y is undefined")

    mean = xs.mean(axis=0)
    centered = xs - mean
    cov = centered.T @ centered / (n - 1)
    trace = float(np.trace(cov))
    if trace <= 0.0:
        raise DegenerateDataError("sample covariance is zero; all inputs are identical")
    cov_eigvals, cov_eigvecs = np.linalg.eigh(cov)
    floor = 1e-10 * trace / d
    dead = cov_eigvals < floor
    if np.any(dead):
        directions = "; ".join(
            np.array2string(cov_eigvecs[:, i], precision=3) for i in np.flatnonzero(dead)
        )
        raise DegenerateDataError(
            f"sample covariance is singular along the direction(s): {directions}"
        )
    ridge = 1e-12 * trace / d
    inv_sqrt = cov_eigvecs @ np.diag(1.0 / np.sqrt(cov_eigvals + ridge)) @ cov_eigvecs.T
    whitened = centered @ inv_sqrt

    order = np.argsort(ys, kind="stable")
    slice_indices = np.array_split(order, n_slices)
    m = np.zeros((d, d))
    for idx in slice_indices:
        if idx.size == 0:
            continue
        slice_mean = whitened[idx].mean(axis=0)
        m += (idx.size / n) * np.outer(slice_mean, slice_mean)
    eigenvalues, eta = np.linalg.eigh(m)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    # Back to original coordinates, then restore orthonormality in importance order.
    raw_directions = inv_sqrt @ eta[:, order]
    q, _ = np.linalg.qr(raw_directions)
    q = _fix_signs(q)
    return LinearMap(matrix=q, eigenvalues=eigenvalues)


def apply_linear(linear_map: LinearMap, x: np.ndarray) -> np.ndarray:
    """z = A^T x."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != linear_map.dim:
        raise ValueError(f"x has last dimension {x.shape[-1]}, expected {linear_map.dim}")
    return x @ linear_map.matrix


def apply_linear_inverse(linear_map: LinearMap, z: np.ndarray) -> np.ndarray:
    """x = A z."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != linear_map.dim:
        raise ValueError(f"z has last dimension {z.shape[-1]}, expected {linear_map.dim}")
    return z @ linear_map.matrix.T


def save_linear_map(linear_map: LinearMap, path: str | Path) -> None:
    doc = {
        "schema_version": LINEAR_MAP_SCHEMA_VERSION,
        "dim": linear_map.dim,
        "matrix": linear_map.matrix.tolist(),
        "eigenvalues": linear_map.eigenvalues.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_linear_map(path: str | Path) -> LinearMap:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path} is not valid JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version is None:
        raise CheckpointSchemaError("linear-map file is missing the schema_version field")
    if version != LINEAR_MAP_SCHEMA_VERSION:
        raise CheckpointSchemaError(f"unsupported linear-map schema_version {version!r}")
    for key in ("dim", "matrix", "eigenvalues"):
        if key not in doc:
            raise CheckpointSchemaError(f"linear-map file is missing {key}")
    matrix = np.asarray(doc["matrix"], dtype=float)
    eigenvalues = np.asarray(doc["eigenvalues"], dtype=float)
    d = int(doc["dim"])
    if matrix.shape != (d, d) or eigenvalues.shape != (d,):
        raise CheckpointShapeError(
            f"stored shapes {matrix.shape}/{eigenvalues.shape} inconsistent with dim {d}"
        )
    return LinearMap(matrix=matrix, eigenvalues=eigenvalues)
