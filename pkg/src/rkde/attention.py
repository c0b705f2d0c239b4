"""Softmax, KDE (Nadaraya-Watson) and robust-KDE self-attention.

All three mechanisms work on one head at a time. :func:`multihead_attention`
splits projected inputs by columns, runs a mechanism per head and
concatenates the outputs.

Kernel attention is evaluated in log space: the log-kernel matrix is never
exponentiated before a max-subtraction, so queries and keys with large norms
do not underflow. The robust variant replaces the uniform KDE weights in the
numerator (joint density over ``[v, k]``) and denominator (marginal density
over ``k``) with KIRWLS weights:

    h_i = sum_j v_j w^joint_ij k(q_i - k_j) / sum_j w^marginal_ij k(q_i - k_j)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import InputError, NumericalError
from .kernels import KernelConfig, cross_kernel, gram_matrix
from .kirwls import DEFAULT_TOL, kirwls_solve
from .robust_loss import HUBER, RobustLossConfig

_NORM_FLOOR = 1e-12


def _matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class AttentionInputs:
    """Queries, keys and values for one head.

    ``mask[i, j]`` is True when query i may attend to key j. ``sigma_sq``
    defaults to sqrt(D), the bandwidth under which KDE attention on unit-norm
    keys reproduces softmax attention.
    """

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    mask: np.ndarray | None = None
    sigma_sq: float | None = None

    def __post_init__(self):
        q, k, v = _matrix(self.Q, "Q"), _matrix(self.K, "K"), _matrix(self.V, "V")
        if not q.shape[0] == k.shape[0] == v.shape[0]:
            raise InputError(f"row counts differ: Q {q.shape[0]}, K {k.shape[0]}, V {v.shape[0]}")
        if q.shape[1] != k.shape[1]:
            raise InputError(f"Q and K widths differ: {q.shape[1]} vs {k.shape[1]}")
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "K", k)
        object.__setattr__(self, "V", v)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != (q.shape[0], q.shape[0]):
                raise InputError(f"mask must be {q.shape[0]}x{q.shape[0]}, got {m.shape}")
            if not np.all(m.any(axis=1)):
                raise InputError("every mask row needs at least one attended position")
            object.__setattr__(self, "mask", m)
        s = math.sqrt(q.shape[1]) if self.sigma_sq is None else float(self.sigma_sq)
        if not math.isfinite(s) or s <= 0:
            raise InputError(f"sigma_sq must be positive, got {self.sigma_sq!r}")
        object.__setattr__(self, "sigma_sq", s)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.Q.shape[1]

    @property
    def d_v(self) -> int:
        return self.V.shape[1]

    def with_keys(self, K) -> "AttentionInputs":
        return AttentionInputs(self.Q, K, self.V, self.mask, self.sigma_sq)


@dataclass(frozen=True, eq=False)
class AttentionOutput:
    H: np.ndarray
    attn_probs: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class RobustAttentionWeights:
    """Per-query weights over key positions; masked positions are exactly 0."""

    marginal: np.ndarray
    joint: np.ndarray
    iterations_used: int


@dataclass(frozen=True)
class ProjectionSet:
    """Linear maps from inputs X (N x D_x) to queries, keys and values."""

    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    heads: int = 1

    def __post_init__(self):
        wq, wk, wv = _matrix(self.W_Q, "W_Q"), _matrix(self.W_K, "W_K"), _matrix(self.W_V, "W_V")
        if wq.shape != wk.shape:
            raise InputError(f"W_Q and W_K shapes differ: {wq.shape} vs {wk.shape}")
        if wv.shape[1] != wq.shape[1]:
            raise InputError(f"W_V expects D_x={wv.shape[1]}, W_Q expects D_x={wq.shape[1]}")
        if self.heads < 1 or wq.shape[0] % self.heads or wv.shape[0] % self.heads:
            raise InputError(
                f"{self.heads} heads do not evenly divide D={wq.shape[0]} and D_v={wv.shape[0]}"
            )
        object.__setattr__(self, "W_Q", wq)
        object.__setattr__(self, "W_K", wk)
        object.__setattr__(self, "W_V", wv)

    @property
    def d_x(self) -> int:
        return self.W_Q.shape[1]


def causal_mask(n: int) -> np.ndarray:
    """Lower-triangular mask: position i attends to positions 0..i."""
    return np.tril(np.ones((n, n), dtype=bool))


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, _NORM_FLOOR)


def project(X, proj: ProjectionSet) -> AttentionInputs:
    """Q = X W_Q^T, K = X W_K^T, V = X W_V^T (all heads, side by side)."""
    x = _matrix(X, "X")
    if x.shape[1] != proj.d_x:
        raise InputError(f"X has {x.shape[1]} columns, projections expect {proj.d_x}")
    return AttentionInputs(x @ proj.W_Q.T, x @ proj.W_K.T, x @ proj.W_V.T)


def split_heads(inputs: AttentionInputs, heads: int, sigma_sq: float | None = None) -> list[AttentionInputs]:
    """Split Q, K, V column-wise into ``heads`` equal slices."""
    if heads < 1 or inputs.d % heads or inputs.d_v % heads:
        raise InputError(f"{heads} heads do not evenly divide D={inputs.d}, D_v={inputs.d_v}")
    dh, dvh = inputs.d // heads, inputs.d_v // heads
    return [
        AttentionInputs(
            inputs.Q[:, h * dh:(h + 1) * dh],
            inputs.K[:, h * dh:(h + 1) * dh],
            inputs.V[:, h * dvh:(h + 1) * dvh],
            inputs.mask,
            sigma_sq,
        )
        for h in range(heads)
    ]


def _masked(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return logits
    return np.where(mask, logits, -np.inf)


def softmax_attention(inputs: AttentionInputs) -> AttentionOutput:
    """Scaled dot-product attention, softmax(Q K^T / sqrt(D)) V."""
    logits = _masked(inputs.Q @ inputs.K.T / math.sqrt(inputs.d), inputs.mask)
    probs = softmax(logits, axis=1)
    return AttentionOutput(probs @ inputs.V, probs)


def kernel_logits(inputs: AttentionInputs, keys: np.ndarray | None = None) -> np.ndarray:
    """Masked log-kernel matrix log k(q_i - k_j) with the attention bandwidth."""
    cfg = KernelConfig(inputs.sigma_sq)
    return _masked(cross_kernel(inputs.Q, inputs.K if keys is None else keys, cfg, log_space=True), inputs.mask)


def kde_attention(inputs: AttentionInputs, normalize_keys: bool = False) -> AttentionOutput:
    """Nadaraya-Watson estimate of the values at each query with a Gaussian kernel.

    With unit-norm keys and sigma^2 = sqrt(D) this equals softmax attention.
    """
    keys = normalize_rows(inputs.K) if normalize_keys else inputs.K
    logk = kernel_logits(inputs, keys)
    lse = logsumexp(logk, axis=1)
    bad = np.flatnonzero(~np.isfinite(lse))
    if bad.size:
        raise NumericalError(f"kernel normalizer vanished in log space for query rows {bad.tolist()}")
    return AttentionOutput(np.exp(logk - lse[:, None]) @ inputs.V)


def _row_groups(mask: np.ndarray | None, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Group query rows sharing the same set of attended positions."""
    if mask is None:
        return [(np.arange(n), np.arange(n))]
    groups: dict[bytes, list[int]] = {}
    for i in range(n):
        groups.setdefault(np.packbits(mask[i]).tobytes(), []).append(i)
    return [(np.asarray(rows), np.flatnonzero(mask[rows[0]])) for rows in groups.values()]


def compute_robust_weights(
    inputs: AttentionInputs,
    loss: RobustLossConfig = HUBER,
    steps: int = 1,
    *,
    normalize_keys: bool = True,
    normalize_values: bool = False,
    joint_sigma_sq: float | None = None,
    tol: float = DEFAULT_TOL,
) -> RobustAttentionWeights:
    """KIRWLS weights for the marginal (keys) and joint (values ++ keys) densities.

    Each query row is solved over its own unmasked key positions, starting
    from uniform weights on those positions; rows with identical masks share
    one solve. Without a mask all rows are identical. ``steps`` bounds the
    number of KIRWLS updates; the default single step is the cheap forward
    approximation. The joint bandwidth defaults to sqrt(D + D_v).

    Gram matrices are built once over all positions and sliced per row group.
    """
    if steps < 1:
        raise InputError(f"steps must be >= 1, got {steps}")
    keys = normalize_rows(inputs.K) if normalize_keys else inputs.K
    values = normalize_rows(inputs.V) if normalize_values else inputs.V
    joint_s = math.sqrt(inputs.d + inputs.d_v) if joint_sigma_sq is None else float(joint_sigma_sq)
    g_marg = gram_matrix(keys, KernelConfig(inputs.sigma_sq))
    g_joint = gram_matrix(np.hstack([values, keys]), KernelConfig(joint_s))

    n = inputs.n
    marginal = np.zeros((n, n))
    joint = np.zeros((n, n))
    used = 0
    for rows, cols in _row_groups(inputs.mask, n):
        sub = np.ix_(cols, cols)
        rep_m = kirwls_solve(g_marg[sub], loss, max_iter=steps, tol=tol)
        rep_j = kirwls_solve(g_joint[sub], loss, max_iter=steps, tol=tol)
        marginal[np.ix_(rows, cols)] = rep_m.weights
        joint[np.ix_(rows, cols)] = rep_j.weights
        used = max(used, rep_m.iterations, rep_j.iterations)
    return RobustAttentionWeights(marginal, joint, used)


def rkde_attention(
    inputs: AttentionInputs,
    loss: RobustLossConfig = HUBER,
    steps: int = 1,
    *,
    weights: RobustAttentionWeights | None = None,
    normalize_keys: bool = True,
    **weight_kwargs,
) -> AttentionOutput:
    """Robust KDE attention.

    Keys are normalized to unit norm first unless ``normalize_keys`` is
    False (kernel and weights then both use the raw keys). Numerator and denominator are
    each reduced with log-sum-exp over ``log w + log k``; the output is
    ``exp(lse_joint - lse_marginal) * softmax(log w_joint + log k) @ V``.
    Pass ``weights`` to reuse precomputed (frozen) weights; otherwise they
    come from :func:`compute_robust_weights` with ``loss``, ``steps`` and
    ``weight_kwargs``.
    """
    if weights is None:
        weights = compute_robust_weights(inputs, loss, steps, normalize_keys=normalize_keys, **weight_kwargs)
    keys = normalize_rows(inputs.K) if normalize_keys else inputs.K
    logk = kernel_logits(inputs, keys)
    with np.errstate(divide="ignore"):
        log_joint = np.log(weights.joint) + logk
        log_marg = np.log(weights.marginal) + logk
    lse_marg = logsumexp(log_marg, axis=1)
    lse_joint = logsumexp(log_joint, axis=1)
    bad = np.flatnonzero(~np.isfinite(lse_marg) | ~np.isfinite(lse_joint))
    if bad.size:
        raise NumericalError(f"robust attention denominator underflowed for query rows {bad.tolist()}")
    probs = np.exp(log_joint - lse_joint[:, None])
    scale = np.exp(lse_joint - lse_marg)
    return AttentionOutput(scale[:, None] * (probs @ inputs.V))


MECHANISMS: dict[str, Callable[..., AttentionOutput]] = {
    "softmax": softmax_attention,
    "kde": kde_attention,
    "rkde": rkde_attention,
}


def multihead_attention(X, proj: ProjectionSet, mechanism: str = "softmax", mask=None, sigma_sq=None, **kwargs) -> np.ndarray:
    """Project X, run ``mechanism`` independently per head, concatenate head outputs."""
    try:
        fn = MECHANISMS[mechanism]
    except KeyError:
        raise InputError(f"unknown mechanism {mechanism!r}; expected one of {sorted(MECHANISMS)}") from None
    full = project(X, proj)
    full = AttentionInputs(full.Q, full.K, full.V, mask)
    outs = [fn(head, **kwargs).H for head in split_heads(full, proj.heads, sigma_sq)]
    return np.hstack(outs)
