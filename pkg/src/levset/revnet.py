"""Additive-coupling reversible network: an exactly invertible map z = g(x).

The input vector is split evenly into two halves (u, v).  Each block updates
one half using a shear built from the other half:

    u_{n+1} = u_n + h * K1_n^T tanh(K1_n v_n     + b1_n)
    v_{n+1} = v_n - h * K2_n^T tanh(K2_n u_{n+1} + b2_n)

Because every half-update only reads the *other* partition, each block can be
undone in closed form, so the network is a bijection for any parameter values
and its Jacobian determinant is exactly one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

CHECKPOINT_SCHEMA_VERSION = 1

ACTIVATIONS = ("tanh",)


class CheckpointError(ValueError):
    """A checkpoint file could not be used."""


class CheckpointSchemaError(CheckpointError):
    """Missing or unsupported schema version / fields."""


class CheckpointShapeError(CheckpointError):
    """Stored arrays are inconsistent with the header dimensions."""


@dataclass(frozen=True)
class RevNetConfig:
    """Architecture hyperparameters of the reversible network.

    dim must be even: the coupling update adds a K^T tanh(...) increment that
    has the same length as the partition it modifies, which only balances
    when both partitions are equal.  Pad externally for odd inputs.
    """

    dim: int
    n_blocks: int
    step_size: float = 0.25
    hidden_width: int | None = None
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError(f"dim must be an even integer >= 2, got {self.dim}")
        if self.n_blocks < 1:
            raise ValueError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.hidden_width is None:
            object.__setattr__(self, "hidden_width", self.dim)
        if self.hidden_width < 1:
            raise ValueError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}; known: {ACTIVATIONS}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")

    @property
    def half_dim(self) -> int:
        return self.dim // 2


class SplitState(NamedTuple):
    """The two equal partitions (u, v) of a state vector."""

    u: np.ndarray
    v: np.ndarray


def split_state(x: np.ndarray) -> SplitState:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2 != 0:
        raise ValueError(f"cannot split a vector of odd length {x.shape[-1]}")
    m = x.shape[-1] // 2
    return SplitState(x[..., :m], x[..., m:])


def merge_state(state: SplitState) -> np.ndarray:
    return np.concatenate([state.u, state.v], axis=-1)


@dataclass
class RevNetParams:
    """All weights and biases of the network, one (K1, K2, b1, b2) set per block."""

    config: RevNetConfig
    k1: list[np.ndarray] = field(repr=False)
    k2: list[np.ndarray] = field(repr=False)
    b1: list[np.ndarray] = field(repr=False)
    b2: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        cfg = self.config
        n, hw, m = cfg.n_blocks, cfg.hidden_width, cfg.half_dim
        for name, arrays, shape in (
            ("k1", self.k1, (hw, m)),
            ("k2", self.k2, (hw, m)),
            ("b1", self.b1, (hw,)),
            ("b2", self.b2, (hw,)),
        ):
            if len(arrays) != n:
                raise ValueError(f"{name} has {len(arrays)} blocks, expected {n}")
            for i, a in enumerate(arrays):
                if a.shape != shape:
                    raise ValueError(f"{name}[{i}] has shape {a.shape}, expected {shape}")
                if not np.all(np.isfinite(a)):
                    raise ValueError(f"{name}[{i}] contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.config.dim

    def copy(self) -> "RevNetParams":
        return RevNetParams(
            config=self.config,
            k1=[a.copy() for a in self.k1],
            k2=[a.copy() for a in self.k2],
            b1=[a.copy() for a in self.b1],
            b2=[a.copy() for a in self.b2],
        )

    def allclose(self, other: "RevNetParams", rtol: float = 0.0, atol: float = 0.0) -> bool:
        if self.config != other.config:
            return False
        for mine, theirs in ((self.k1, other.k1), (self.k2, other.k2), (self.b1, other.b1), (self.b2, other.b2)):
            for a, b in zip(mine, theirs):
                if not np.allclose(a, b, rtol=rtol, atol=atol):
                    return False
        return True


def init_params(config: RevNetConfig, scale: float = 0.1) -> RevNetParams:
    """Draw all entries i.i.d. uniform on [-scale, scale] from a generator seeded
    by config.seed.  Draw order is fixed per block: K1, K2, b1, b2.

    scale = 0 yields the identity transformation (every increment vanishes).
    """
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale}")
    rng = np.random.default_rng(config.seed)
    m, hw = config.half_dim, config.hidden_width
    k1, k2, b1, b2 = [], [], [], []
    for _ in range(config.n_blocks):
        k1.append(rng.uniform(-scale, scale, size=(hw, m)))
        k2.append(rng.uniform(-scale, scale, size=(hw, m)))
        b1.append(rng.uniform(-scale, scale, size=hw))
        b2.append(rng.uniform(-scale, scale, size=hw))
    return RevNetParams(config=config, k1=k1, k2=k2, b1=b1, b2=b2)


def _check_input(params: RevNetParams, x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValueError(f"{name} has shape {x.shape}, expected ({params.dim},)")
    return x


def forward(params: RevNetParams, x: np.ndarray) -> np.ndarray:
    """Map x -> z through all blocks."""
    x = _check_input(params, x, "x")
    h = params.config.step_size
    u, v = split_state(x)
    for k1, k2, b1, b2 in zip(params.k1, params.k2, params.b1, params.b2):
        u = u + h * (k1.T @ np.tanh(k1 @ v + b1))
        v = v - h * (k2.T @ np.tanh(k2 @ u + b2))
    return merge_state(SplitState(u, v))


def inverse(params: RevNetParams, z: np.ndarray) -> np.ndarray:
    """Map z -> x by undoing the blocks in reverse order (exact algebraic inverse)."""
    z = _check_input(params, z, "z")
    h = params.config.step_size
    u, v = split_state(z)
    for k1, k2, b1, b2 in zip(
        reversed(params.k1), reversed(params.k2), reversed(params.b1), reversed(params.b2)
    ):
        v = v + h * (k2.T @ np.tanh(k2 @ u + b2))
        u = u - h * (k1.T @ np.tanh(k1 @ v + b1))
    return merge_state(SplitState(u, v))


def forward_batch(params: RevNetParams, xs: np.ndarray) -> np.ndarray:
    """Vectorized forward over rows of xs, shape (n, dim)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != params.dim:
        raise ValueError(f"xs has shape {xs.shape}, expected (n, {params.dim})")
    h = params.config.step_size
    m = params.config.half_dim
    u, v = xs[:, :m], xs[:, m:]
    for k1, k2, b1, b2 in zip(params.k1, params.k2, params.b1, params.b2):
        u = u + h * (np.tanh(v @ k1.T + b1) @ k1)
        v = v - h * (np.tanh(u @ k2.T + b2) @ k2)
    return np.concatenate([u, v], axis=1)


def inverse_batch(params: RevNetParams, zs: np.ndarray) -> np.ndarray:
    """Vectorized inverse over rows of zs, shape (n, dim)."""
    zs = np.asarray(zs, dtype=float)
    if zs.ndim != 2 or zs.shape[1] != params.dim:
        raise ValueError(f"zs has shape {zs.shape}, expected (n, {params.dim})")
    h = params.config.step_size
    m = params.config.half_dim
    u, v = zs[:, :m], zs[:, m:]
    for k1, k2, b1, b2 in zip(
        reversed(params.k1), reversed(params.k2), reversed(params.b1), reversed(params.b2)
    ):
        v = v + h * (np.tanh(u @ k2.T + b2) @ k2)
        u = u - h * (np.tanh(v @ k1.T + b1) @ k1)
    return np.concatenate([u, v], axis=1)


# --- checkpoint serialization ------------------------------------------------
#
# A checkpoint is a single JSON document:
#   {schema_version, dim, n_blocks, step_size, hidden_width, activation, seed,
#    blocks: [{K1, K2, b1, b2}, ...]}
# Matrices are stored row-major (nested lists of rows); floats keep full
# round-trip precision, so save -> load is bit-exact.


def params_to_dict(params: RevNetParams) -> dict:
    cfg = params.config
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "dim": cfg.dim,
        "n_blocks": cfg.n_blocks,
        "step_size": cfg.step_size,
        "hidden_width": cfg.hidden_width,
        "activation": cfg.activation,
        "seed": cfg.seed,
        "blocks": [
            {
                "K1": params.k1[n].tolist(),
                "K2": params.k2[n].tolist(),
                "b1": params.b1[n].tolist(),
                "b2": params.b2[n].tolist(),
            }
            for n in range(cfg.n_blocks)
        ],
    }


def params_from_dict(doc: dict) -> RevNetParams:
    if not isinstance(doc, dict):
        raise CheckpointSchemaError("checkpoint document is not a mapping")
    version = doc.get("schema_version")
    if version is None:
        raise CheckpointSchemaError("checkpoint is missing the schema_version field")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointSchemaError(
            f"unsupported checkpoint schema_version {version!r}, expected {CHECKPOINT_SCHEMA_VERSION}"
        )
    required = ("dim", "n_blocks", "step_size", "hidden_width", "activation", "seed", "blocks")
    missing = [key for key in required if key not in doc]
    if missing:
        raise CheckpointSchemaError(f"checkpoint is missing fields: {missing}")
    try:
        cfg = RevNetConfig(
            dim=int(doc["dim"]),
            n_blocks=int(doc["n_blocks"]),
            step_size=float(doc["step_size"]),
            hidden_width=int(doc["hidden_width"]),
            activation=str(doc["activation"]),
            seed=int(doc["seed"]),
        )
    except ValueError as exc:
        raise CheckpointSchemaError(f"invalid checkpoint header: {exc}") from exc
    blocks = doc["blocks"]
    if len(blocks) != cfg.n_blocks:
        raise CheckpointShapeError(f"checkpoint stores {len(blocks)} blocks, header says {cfg.n_blocks}")
    k1, k2, b1, b2 = [], [], [], []
    expect = {
        "K1": (cfg.hidden_width, cfg.half_dim),
        "K2": (cfg.hidden_width, cfg.half_dim),
        "b1": (cfg.hidden_width,),
        "b2": (cfg.hidden_width,),
    }
    for n, block in enumerate(blocks):
        for key, (out, shape) in (
            ("K1", (k1, expect["K1"])),
            ("K2", (k2, expect["K2"])),
            ("b1", (b1, expect["b1"])),
            ("b2", (b2, expect["b2"])),
        ):
            if key not in block:
                raise CheckpointSchemaError(f"block {n} is missing {key}")
            arr = np.asarray(block[key], dtype=float)
            if arr.shape != shape:
                raise CheckpointShapeError(
                    f"block {n} field {key} has shape {arr.shape}, expected {shape}"
                )
            out.append(arr)
    try:
        return RevNetParams(config=cfg, k1=k1, k2=k2, b1=b1, b2=b2)
    except ValueError as exc:
        raise CheckpointShapeError(str(exc)) from exc


def save_checkpoint(params: RevNetParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> RevNetParams:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    return params_from_dict(doc)
