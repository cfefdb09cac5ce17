"""Training objective for the reversible transformation.

The orthogonality term pushes the Jacobian columns of g^{-1} that carry a
positive anisotropy weight to be perpendicular to the sampled gradients:

    L1 = sum_s sum_i [ w_i <J_i(z_s)/||J_i(z_s)||, grad f(x_s)> ]^2,
    z_s = g(x_s).

Only J_i is normalized, never grad f, so regions where the function is flat
contribute little.  The volume term L2 penalizes drift of the Jacobian
determinant away from one, averaged over the batch; for this additive-coupling
architecture the determinant is one by construction, so L2 acts purely as a
numerical safeguard.  Total loss: L = L1 + lambda * L2.

loss_gradient is hand-written reverse-mode differentiation through the forward
trajectory, the shear-product Jacobian, and both loss terms; it is validated
against central finite differences over every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calculus import forward_with_jacobian
from .datasets import GradientSample, stack_samples
from .revnet import RevNetParams


class DegenerateJacobianError(RuntimeError):
    """A weighted Jacobian column had zero norm; the transform is numerically corrupt."""


class NonFiniteGradientError(RuntimeError):
    """Backpropagation produced non-finite values."""

    def __init__(self, message: str, block_index: int | None = None):
        super().__init__(message)
        self.block_index = block_index


@dataclass(frozen=True)
class AnisotropyWeights:
    """Per-coordinate nonnegative weights; zero entries mark the active dimensions."""

    omega: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim != 1:
            raise ValueError(f"omega must be a vector, got shape {omega.shape}")
        if not np.all(np.isfinite(omega)) or np.any(omega < 0):
            raise ValueError("omega entries must be finite and >= 0")
        object.__setattr__(self, "omega", omega)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    @property
    def active_dims(self) -> np.ndarray:
        return np.flatnonzero(self.omega == 0)

    @property
    def inactive_dims(self) -> np.ndarray:
        return np.flatnonzero(self.omega > 0)


def as_weights(omega) -> AnisotropyWeights:
    if isinstance(omega, AnisotropyWeights):
        return omega
    return AnisotropyWeights(np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    l2: float
    lam: float

    @property
    def total(self) -> float:
        return self.l1 + self.lam * self.l2


@dataclass
class ParamGradients:
    """Gradient of the loss with the same block structure as RevNetParams."""

    k1: list[np.ndarray]
    k2: list[np.ndarray]
    b1: list[np.ndarray]
    b2: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: RevNetParams) -> "ParamGradients":
        return cls(
            k1=[np.zeros_like(a) for a in params.k1],
            k2=[np.zeros_like(a) for a in params.k2],
            b1=[np.zeros_like(a) for a in params.b1],
            b2=[np.zeros_like(a) for a in params.b2],
        )

    def to_vector(self) -> np.ndarray:
        parts = []
        for arrays in (self.k1, self.k2, self.b1, self.b2):
            parts.extend(a.ravel() for a in arrays)
        return np.concatenate(parts)


def params_to_vector(params: RevNetParams) -> np.ndarray:
    parts = []
    for arrays in (params.k1, params.k2, params.b1, params.b2):
        parts.extend(a.ravel() for a in arrays)
    return np.concatenate(parts)


def params_from_vector(template: RevNetParams, vec: np.ndarray) -> RevNetParams:
    out = template.copy()
    offset = 0
    for arrays in (out.k1, out.k2, out.b1, out.b2):
        for a in arrays:
            a[...] = vec[offset : offset + a.size].reshape(a.shape)
            offset += a.size
    if offset != vec.size:
        raise ValueError(f"vector has {vec.size} entries, parameters need {offset}")
    return out


# --- batched trajectory + Jacobian with caches for backpropagation -----------


class _Trace:
    """Everything the backward pass needs from one forward evaluation."""

    __slots__ = ("s", "t", "u_next", "v_cur", "p", "q", "left_before", "right_after", "jac", "z")

    def __init__(self, n_blocks: int):
        self.s = [None] * n_blocks
        self.t = [None] * n_blocks
        self.u_next = [None] * n_blocks
        self.v_cur = [None] * n_blocks
        self.p = [None] * n_blocks
        self.q = [None] * n_blocks
        self.left_before = [None] * n_blocks
        self.right_after = [None] * n_blocks
        self.jac = None
        self.z = None


def _weighted_gram(k: np.ndarray, diag: np.ndarray, h: float) -> np.ndarray:
    """Batched h * K^T diag(d_s) K for per-sample diagonal weights d_s."""
    return np.matmul(k.T[None, :, :], h * diag[:, :, None] * k[None, :, :])


def _forward_trace(params: RevNetParams, xs: np.ndarray) -> _Trace:
    h = params.config.step_size
    d = params.dim
    m = d // 2
    n_samples = xs.shape[0]
    trace = _Trace(params.config.n_blocks)

    u, v = xs[:, :m], xs[:, m:]
    left = np.broadcast_to(np.eye(d)[:, :m], (n_samples, d, m)).copy()
    right = np.broadcast_to(np.eye(d)[:, m:], (n_samples, d, m)).copy()
    for n, (k1, k2, b1, b2) in enumerate(zip(params.k1, params.k2, params.b1, params.b2)):
        trace.v_cur[n] = v
        s = np.tanh(v @ k1.T + b1)
        u = u + h * (s @ k1)
        trace.u_next[n] = u
        t = np.tanh(u @ k2.T + b2)
        v = v - h * (t @ k2)
        trace.s[n] = s
        trace.t[n] = t
        p = _weighted_gram(k1, 1.0 - s * s, h)
        q = _weighted_gram(k2, 1.0 - t * t, h)
        trace.p[n] = p
        trace.q[n] = q
        trace.left_before[n] = left
        right = right - left @ p
        trace.right_after[n] = right
        left = left + right @ q
    trace.z = np.concatenate([u, v], axis=1)
    trace.jac = np.concatenate([left, right], axis=2)
    return trace


def _l1_pieces(jacs: np.ndarray, grads: np.ndarray, omega: np.ndarray):
    """Per-sample inner products w = J^T grad and column norms; raises on a
    zero-norm column that carries positive weight."""
    w = np.matmul(grads[:, None, :], jacs)[:, 0, :]
    norms = np.sqrt((jacs * jacs).sum(axis=1))
    bad = (norms == 0.0) & (omega > 0.0)
    if np.any(bad):
        sample_idx, col_idx = np.argwhere(bad)[0]
        raise DegenerateJacobianError(
            f"Jacobian column {col_idx} has zero norm at sample {sample_idx}; "
            "the transformation is numerically degenerate"
        )
    return w, norms


def l1_value(jacs: np.ndarray, grads: np.ndarray, omega) -> float:
    """Orthogonality loss from explicit Jacobians, summed over samples."""
    omega = as_weights(omega).omega
    w, norms = _l1_pieces(jacs, grads, omega)
    safe = np.where(norms > 0.0, norms, 1.0)
    terms = (omega * w / safe) ** 2
    return float(terms.sum())


def determinant_penalty(dets: np.ndarray) -> float:
    """Mean squared drift of determinants away from one."""
    dets = np.atleast_1d(np.asarray(dets, dtype=float))
    return float(np.mean((dets - 1.0) ** 2))


def _batch_arrays(batch: Sequence[GradientSample], params: RevNetParams):
    xs, _, grads = stack_samples(batch)
    if xs.shape[1] != params.dim:
        raise ValueError(f"batch dimension {xs.shape[1]} != network dimension {params.dim}")
    return xs, grads


def l1_loss(params: RevNetParams, batch: Sequence[GradientSample], omega) -> float:
    xs, grads = _batch_arrays(batch, params)
    omega = as_weights(omega)
    if omega.dim != params.dim:
        raise ValueError(f"omega has length {omega.dim}, expected {params.dim}")
    _, jacs = forward_with_jacobian(params, xs)
    return l1_value(jacs, grads, omega)


def l2_loss(params: RevNetParams, batch: Sequence[GradientSample]) -> float:
    xs, _ = _batch_arrays(batch, params)
    _, jacs = forward_with_jacobian(params, xs)
    return determinant_penalty(np.linalg.det(jacs))


def total_loss(params: RevNetParams, batch: Sequence[GradientSample], omega, lam: float) -> LossBreakdown:

    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    xs, grads = _batch_arrays(batch, params)
    omega = as_weights(omega)
    if omega.dim != params.dim:
        raise ValueError(f"omega has length {omega.dim}, expected {params.dim}")
    _, jacs = forward_with_jacobian(params, xs)
    l1 = l1_value(jacs, grads, omega)
    l2 = determinant_penalty(np.linalg.det(jacs))
    return LossBreakdown(l1=l1, l2=l2, lam=float(lam))


def loss_gradient(
    params: RevNetParams, batch: Sequence[GradientSample], omega, lam: float
) -> tuple[LossBreakdown, ParamGradients]:
    """Loss value and its exact gradient with respect to every K1, K2, b1, b2 entry."""
    xs, grads = _batch_arrays(batch, params)
    omega = as_weights(omega)
    if omega.dim != params.dim:
        raise ValueError(f"omega has length {omega.dim}, expected {params.dim}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return _loss_and_grad_arrays(params, xs, grads, omega.omega, float(lam))


def _loss_and_grad_arrays(
    params: RevNetParams, xs: np.ndarray, grads: np.ndarray, omega: np.ndarray, lam: float
) -> tuple[LossBreakdown, ParamGradients]:
    h = params.config.step_size
    n_blocks = params.config.n_blocks
    m = params.dim // 2
    n_samples = xs.shape[0]

    trace = _forward_trace(params, xs)
    jacs = trace.jac

    # Loss pieces.
    w, norms = _l1_pieces(jacs, grads, omega)
    safe = np.where(norms > 0.0, norms, 1.0)
    ratios = omega * w / safe
    l1 = float((ratios**2).sum())
    dets = np.linalg.det(jacs)
    l2 = determinant_penalty(dets)
    breakdown = LossBreakdown(l1=l1, l2=l2, lam=lam)

    # d(loss)/d(jacs).
    om2 = omega**2
    beta = 2.0 * om2 * w / safe**2                      # dL1/dw_i
    gamma = -2.0 * om2 * w**2 / safe**4                 # dL1/dJ via the column norms
    d_jac = grads[:, :, None] * beta[:, None, :] + jacs * gamma[:, None, :]
    if lam != 0.0:
        # d/dJ (det - 1)^2 = 2 (det - 1) det J^{-T}
        coef = lam * 2.0 * (dets - 1.0) * dets / n_samples
        inv_t = np.transpose(np.linalg.inv(jacs), (0, 2, 1))
        d_jac = d_jac + coef[:, None, None] * inv_t

    grad_out = ParamGradients.zeros_like(params)
    d_left = d_jac[:, :, :m].copy()
    d_right = d_jac[:, :, m:].copy()
    d_u = np.zeros((n_samples, m))
    d_v = np.zeros((n_samples, m))

    for n in range(n_blocks - 1, -1, -1):
        k1, k2 = params.k1[n], params.k2[n]
        s, t = trace.s[n], trace.t[n]
        d1 = 1.0 - s * s
        d2 = 1.0 - t * t

        # Jacobian accumulation: left_new = left + right_new @ q.
        d_right_total = d_right + d_left @ np.transpose(trace.q[n], (0, 2, 1))
        d_q = np.transpose(trace.right_after[n], (0, 2, 1)) @ d_left
        # right_new = right - left_before @ p.
        d_p = -(np.transpose(trace.left_before[n], (0, 2, 1)) @ d_right_total)
        d_left = d_left - d_right_total @ np.transpose(trace.p[n], (0, 2, 1))
        d_right = d_right_total

        # v_{n+1} = v_n - h t @ K2  (rows are samples).
        d_t = -h * (d_v @ k2.T)
        grad_out.k2[n] += -h * (t.T @ d_v)
        # q = h K2^T diag(d2) K2: explicit-K part plus the part through d2.
        sym_q = d_q + np.transpose(d_q, (0, 2, 1))
        k_sym_q = np.matmul(k2[None, :, :], sym_q)
        grad_out.k2[n] += h * (d2[:, :, None] * k_sym_q).sum(axis=0)
        d_d2 = h * (np.matmul(k2[None, :, :], d_q) * k2[None, :, :]).sum(axis=2)
        d_c = d_t * d2 + d_d2 * (-2.0 * t * d2)
        # c = u_{n+1} @ K2^T + b2.
        grad_out.k2[n] += d_c.T @ trace.u_next[n]
        grad_out.b2[n] += d_c.sum(axis=0)
        d_u = d_u + d_c @ k2

        # u_{n+1} = u_n + h s @ K1.
        d_s = h * (d_u @ k1.T)
        grad_out.k1[n] += h * (s.T @ d_u)
        # p = h K1^T diag(d1) K1.
        sym_p = d_p + np.transpose(d_p, (0, 2, 1))
        k_sym_p = np.matmul(k1[None, :, :], sym_p)
        grad_out.k1[n] += h * (d1[:, :, None] * k_sym_p).sum(axis=0)
        d_d1 = h * (np.matmul(k1[None, :, :], d_p) * k1[None, :, :]).sum(axis=2)
        d_a = d_s * d1 + d_d1 * (-2.0 * s * d1)
        # a = v_n @ K1^T + b1.
        grad_out.k1[n] += d_a.T @ trace.v_cur[n]
        grad_out.b1[n] += d_a.sum(axis=0)
        d_v = d_v + d_a @ k1

        if not (
            np.all(np.isfinite(grad_out.k1[n]))
            and np.all(np.isfinite(grad_out.k2[n]))
            and np.all(np.isfinite(grad_out.b1[n]))
            and np.all(np.isfinite(grad_out.b2[n]))
        ):
            raise NonFiniteGradientError(
                f"non-finite gradient while backpropagating block {n}", block_index=n
            )

    return breakdown, grad_out
