"""Plain stochastic-gradient-descent training of the reversible transformation.

Deterministic by construction: minibatch shuffling draws from a generator
seeded by (seed, global epoch index), so a run of n epochs and a resumed
5 + 5 split walk identical batch schedules.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import GradientSample, stack_samples
from .losses import AnisotropyWeights, LossBreakdown, as_weights, total_loss, _loss_and_grad_arrays
from .revnet import RevNetParams, load_checkpoint, save_checkpoint

FULL_BATCH = "full"


@dataclass
class TrainConfig:
    learning_rate: float
    n_epochs: int
    omega: AnisotropyWeights
    lam: float = 1.0
    batch_size: int | str = FULL_BATCH
    seed: int = 0
    checkpoint_every: int | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.n_epochs < 0:
            raise ValueError(f"n_epochs must be >= 0, got {self.n_epochs}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        self.omega = as_weights(self.omega)
        if self.batch_size != FULL_BATCH:
            if not isinstance(self.batch_size, int) or self.batch_size < 1:
                raise ValueError(f"batch_size must be a positive integer or {FULL_BATCH!r}")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be a positive integer when set")


@dataclass
class TrainReport:
    loss_history: list[tuple[int, LossBreakdown]] = field(default_factory=list)
    final_params: RevNetParams | None = None
    wall_time: float = 0.0
    aborted: bool = False
    abort_reason: str | None = None


def _sgd_step(params: RevNetParams, xs, grads, omega, lam, lr) -> bool:
    """One update in place; returns False when the gradient went non-finite."""
    _, grad = _loss_and_grad_arrays(params, xs, grads, omega, lam)
    vec = grad.to_vector()
    if not np.all(np.isfinite(vec)):
        return False
    for n in range(params.config.n_blocks):
        params.k1[n] -= lr * grad.k1[n]
        params.k2[n] -= lr * grad.k2[n]
        params.b1[n] -= lr * grad.b1[n]
        params.b2[n] -= lr * grad.b2[n]
    return True


def train(
    params0: RevNetParams,
    dataset: Sequence[GradientSample],
    cfg: TrainConfig,
    start_epoch: int = 0,
    checkpoint_dir: str | Path | None = None,
) -> TrainReport:
    """Run cfg.n_epochs of SGD from params0 and record the full-dataset loss
    after every epoch.

    start_epoch offsets the epoch-indexed shuffle seed so a resumed run
    continues the exact batch schedule of an uninterrupted one.  When
    checkpoint_dir is set and cfg.checkpoint_every = k, the parameters are
    saved every k epochs as checkpoint_epoch{NNNNNN}.json.
    """
    xs, _, grads = stack_samples(dataset)
    if xs.shape[1] != params0.dim:
        raise ValueError(f"dataset dimension {xs.shape[1]} != network dimension {params0.dim}")
    omega = cfg.omega
    if omega.dim != params0.dim:
        raise ValueError(f"omega has length {omega.dim}, expected {params0.dim}")
    n_samples = xs.shape[0]
    if cfg.batch_size != FULL_BATCH and cfg.batch_size > n_samples:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n_samples}")

    params = params0.copy()
    report = TrainReport(final_params=params)
    started = time.perf_counter()
    omega_vec = omega.omega

    for e in range(cfg.n_epochs):
        epoch = start_epoch + e
        last_good = params.copy()
        ok = True
        if cfg.batch_size == FULL_BATCH:
            ok = _sgd_step(params, xs, grads, omega_vec, cfg.lam, cfg.learning_rate)
        else:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n_samples)
            for lo in range(0, n_samples, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                ok = _sgd_step(params, xs[idx], grads[idx], omega_vec, cfg.lam, cfg.learning_rate)
                if not ok:
                    break
        if ok:
            epoch_loss = total_loss(params, dataset, omega, cfg.lam)
            ok = np.isfinite(epoch_loss.total)
        if not ok:
            report.final_params = last_good
            report.aborted = True
            report.abort_reason = f"non-finite loss or gradient during epoch {epoch}"
            break
        report.loss_history.append((epoch, epoch_loss))
        if (
            checkpoint_dir is not None
            and cfg.checkpoint_every is not None
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            path = Path(checkpoint_dir) / f"checkpoint_epoch{epoch + 1:06d}.json"
            save_checkpoint(params, path)

    report.wall_time = time.perf_counter() - started
    return report


def resume(
    checkpoint_path: str | Path,
    dataset: Sequence[GradientSample],
    cfg: TrainConfig,
    start_epoch: int = 0,
    checkpoint_dir: str | Path | None = None,
) -> TrainReport:
    """Continue training from a saved checkpoint; history indices continue
    from start_epoch."""
    params = load_checkpoint(checkpoint_path)
    return train(params, dataset, cfg, start_epoch=start_epoch, checkpoint_dir=checkpoint_dir)
