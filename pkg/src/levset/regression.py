"""Downstream function approximation on reduced coordinates.

A small fully-connected network (tanh hidden layers, linear output) is
trained by full-batch gradient descent with momentum on standardized inputs
and targets.  Fit quality is reported as relative RMSE:

    rrmse = sqrt(mean((pred - truth)^2)) / sqrt(mean(truth^2))

i.e. the prediction RMS error normalized by the RMS of the true values, so a
constant-zero predictor scores exactly 1 and the measure is scale invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import LinearMap, apply_linear
from .revnet import RevNetParams, forward_batch


class FitDivergedError(RuntimeError):
    """Training hit a non-finite loss."""


@dataclass(frozen=True)
class MLPConfig:
    layer_widths: tuple[int, ...]
    learning_rate: float = 0.05
    n_epochs: int = 4000
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("layer_widths needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if widths[-1] != 1:
            raise ValueError(f"last layer width must be 1, got {widths[-1]}")
        object.__setattr__(self, "layer_widths", widths)
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.n_epochs < 0:
            raise ValueError("n_epochs must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]


@dataclass
class MLPModel:
    config: MLPConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_mean: np.ndarray
    input_scale: np.ndarray
    target_mean: float
    target_scale: float


@dataclass
class FitReport:
    train_rrmse: float
    valid_rrmse: float
    model: MLPModel = field(repr=False)


def relative_rmse(predictions, truths) -> float:
    """RMS prediction error over RMS of the truths."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape or predictions.size == 0:
        raise ValueError(
            f"predictions {predictions.shape} and truths {truths.shape} must be equal nonzero shapes"
        )
    norm = np.sqrt(np.mean(truths**2))
    if norm == 0.0:
        raise ValueError("truths are all zero; relative RMSE normalization is undefined")
    return float(np.sqrt(np.mean((predictions - truths) ** 2)) / norm)


def reduce_inputs(transform, xs, active_dims: Sequence[int]) -> np.ndarray:
    """Transformed coordinates restricted to the retained active dimensions."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2:
        raise ValueError(f"xs must be a 2D array, got shape {xs.shape}")
    active_dims = list(active_dims)
    if not active_dims:
        raise ValueError("active_dims must be nonempty")
    if any(i < 0 or i >= xs.shape[1] for i in active_dims):
        raise IndexError(f"active_dims {active_dims} out of range for dimension {xs.shape[1]}")
    if transform is None:
        zs = xs
    elif isinstance(transform, LinearMap):
        zs = apply_linear(transform, xs)
    elif isinstance(transform, RevNetParams):
        zs = forward_batch(transform, xs)
    else:
        raise TypeError(f"unsupported transform type {type(transform).__name__}")
    return zs[:, active_dims]


def _forward_mlp(weights, biases, inputs):
    a = inputs
    pre = []
    acts = [a]
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        pre.append(z)
        a = np.tanh(z) if layer < len(weights) - 1 else z
        acts.append(a)
    return pre, acts


def fit(cfg: MLPConfig, inputs, targets, validation=None) -> FitReport:
    """Full-batch gradient descent with momentum on mean squared error.

    inputs: (n, k) with k = cfg.input_dim; targets: (n,).  validation, when
    given, is an (inputs, targets) pair scored after training.  Deterministic
    for a fixed cfg.seed.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float).ravel()
    if inputs.ndim != 2 or inputs.shape[0] != targets.shape[0] or inputs.shape[0] < 1:
        raise ValueError(f"inputs {inputs.shape} and targets {targets.shape} are inconsistent")
    if inputs.shape[1] != cfg.input_dim:
        raise ValueError(f"inputs have {inputs.shape[1]} features, config expects {cfg.input_dim}")

    input_mean = inputs.mean(axis=0)
    input_scale = inputs.std(axis=0)
    input_scale[input_scale == 0.0] = 1.0
    target_mean = float(targets.mean())
    target_scale = float(targets.std())
    if target_scale == 0.0:
        target_scale = 1.0
    x = (inputs - input_mean) / input_scale
    t = (targets - target_mean) / target_scale

    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.layer_widths[:-1], cfg.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))

    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    n = x.shape[0]
    for epoch in range(cfg.n_epochs):
        pre, acts = _forward_mlp(weights, biases, x)
        resid = acts[-1][:, 0] - t
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss):
            raise FitDivergedError(f"non-finite training loss at epoch {epoch}")
        delta = (2.0 / n) * resid[:, None]
        for layer in range(len(weights) - 1, -1, -1):
            grad_w = acts[layer].T @ delta
            grad_b = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ weights[layer].T) * (1.0 - acts[layer] ** 2)
            vel_w[layer] = cfg.momentum * vel_w[layer] - cfg.learning_rate * grad_w
            vel_b[layer] = cfg.momentum * vel_b[layer] - cfg.learning_rate * grad_b
            weights[layer] = weights[layer] + vel_w[layer]
            biases[layer] = biases[layer] + vel_b[layer]

    model = MLPModel(
        config=cfg,
        weights=weights,
        biases=biases,
        input_mean=input_mean,
        input_scale=input_scale,
        target_mean=target_mean,
        target_scale=target_scale,
    )
    train_rrmse = relative_rmse(predict_batch(model, inputs), targets)
    if validation is not None:
        v_inputs, v_targets = validation
        valid_rrmse = relative_rmse(predict_batch(model, v_inputs), np.asarray(v_targets, dtype=float).ravel())
    else:
        valid_rrmse = float("nan")
    return FitReport(train_rrmse=train_rrmse, valid_rrmse=valid_rrmse, model=model)


def predict_batch(model: MLPModel, inputs) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.config.input_dim:
        raise ValueError(f"inputs have shape {inputs.shape}, expected (n, {model.config.input_dim})")
    x = (inputs - model.input_mean) / model.input_scale
    _, acts = _forward_mlp(model.weights, model.biases, x)
    return acts[-1][:, 0] * model.target_scale + model.target_mean


def predict(model: MLPModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"x must be a vector, got shape {x.shape}")
    return float(predict_batch(model, x[None, :])[0])
