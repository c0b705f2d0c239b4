"""Isotropic Gaussian kernel, Gram matrices and cross-kernel matrices.

The kernel is

    k(x, y) = exp(-||x - y||^2 / (2 sigma^2))

optionally multiplied by the Gaussian normalizer (2 pi sigma^2)^(-D/2) so
that it integrates to one. Attention code uses the unnormalized form (the
constant cancels in a Nadaraya-Watson ratio); density metrics use the
normalized form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidth and normalization of the Gaussian kernel.

    Attributes:
        sigma_sq: Bandwidth sigma^2, in squared-distance units.
        normalized: Include the (2 pi sigma^2)^(-D/2) factor.
    """

    sigma_sq: float
    normalized: bool = False

    def __post_init__(self):
        s = float(self.sigma_sq)
        if not math.isfinite(s) or s <= 0.0:
            raise InputError(f"sigma_sq must be a positive finite number, got {self.sigma_sq!r}")
        object.__setattr__(self, "sigma_sq", s)

    def log_normalizer(self, d: int) -> float:
        """Log of the multiplicative constant applied in dimension ``d``."""
        if not self.normalized:
            return 0.0
        return -0.5 * d * math.log(2.0 * math.pi * self.sigma_sq)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """An N x D matrix of finite observations (one atom per row)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise InputError(f"sample set must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"sample set needs N >= 1 and D >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("sample set contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n


def as_samples(xs) -> SampleSet:
    """Coerce an array-like (or an existing SampleSet) to a SampleSet.

    A 1-D array is read as N one-dimensional atoms.
    """
    if isinstance(xs, SampleSet):
        return xs
    return SampleSet(xs)


def _as_point(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise InputError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def kernel_eval(x, y, cfg: KernelConfig) -> float:
    """Kernel value between two points of equal dimension."""
    x = _as_point(x, "x")
    y = _as_point(y, "y")
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    sq = float(np.dot(diff, diff))
    return math.exp(cfg.log_normalizer(x.shape[0]) - sq / (2.0 * cfg.sigma_sq))


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances via ||a||^2 + ||b||^2 - 2 a.b, clamped at 0."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    sq = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def cross_kernel(queries, keys, cfg: KernelConfig, log_space: bool = False) -> np.ndarray:
    """Kernel matrix between two sample sets.

    Args:
        queries: N_q x D samples.
        keys: N_k x D samples.
        cfg: Kernel configuration.
        log_space: Return the log-kernel (the exponent plus the log normalizer)
            without exponentiating.

    Returns:
        N_q x N_k array with entry (i, j) = k(q_i, k_j), or its logarithm.
    """
    q = as_samples(queries)
    k = as_samples(keys)
    if q.d != k.d:
        raise InputError(f"dimension mismatch: queries have D={q.d}, keys have D={k.d}")
    logk = squared_distances(q.data, k.data)
    logk *= -1.0 / (2.0 * cfg.sigma_sq)
    logk += cfg.log_normalizer(q.d)
    if log_space:
        return logk
    return np.exp(logk)


def gram_matrix(xs, cfg: KernelConfig) -> np.ndarray:
    """Symmetric N x N kernel matrix of a sample set with itself."""
    x = as_samples(xs)
    sq = squared_distances(x.data, x.data)
    # exact symmetry and a zero diagonal regardless of BLAS round-off
    sq = 0.5 * (sq + sq.T)
    np.fill_diagonal(sq, 0.0)
    return np.exp(cfg.log_normalizer(x.d) - sq / (2.0 * cfg.sigma_sq))
