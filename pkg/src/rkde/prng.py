"""Portable seeded random streams for the experiment harness.

Bits come from PCG64 (O'Neill's permuted congruential generator, 128-bit
state, XSL-RR output) seeded through numpy's ``SeedSequence``; both are
specified independently of platform. Only raw 64-bit outputs are taken from
numpy. The continuous distributions are derived here so the stream layout is
fixed by this module rather than by numpy version:

* uniform: top 53 bits of one 64-bit word, in [0, 1)
* normal: Box-Muller, two uniforms -> two normals, consumed in order
* gamma: Marsaglia-Tsang squeeze/rejection on the same normal/uniform stream,
  with the u^(1/shape) boost for shape < 1
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

_TWO_NEG_53 = 2.0 ** -53


class PortableRng:
    """A seeded stream of uniforms, normals and gamma variates."""

    algorithm = "pcg64+boxmuller+marsaglia-tsang"

    def __init__(self, seed: int):
        if int(seed) < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
        self.seed = int(seed)
        self._bits = np.random.PCG64(self.seed)

    def uniform(self, size: int) -> np.ndarray:
        """``size`` doubles in [0, 1)."""
        raw = self._bits.random_raw(size)
        return (raw >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53

    def standard_normal(self, size: int) -> np.ndarray:
        """``size`` N(0, 1) draws via Box-Muller; an odd tail discards one normal."""
        pairs = (size + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u in (0, 1]
        angle = 2.0 * math.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = radius * np.cos(angle)
        out[:, 1] = radius * np.sin(angle)
        return out.ravel()[:size]

    def _gamma_one(self, shape: float) -> float:
        boost = 1.0
        if shape < 1.0:
            boost = float(1.0 - self.uniform(1)[0]) ** (1.0 / shape)
            shape += 1.0
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = float(self.standard_normal(2)[0])
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = float(self.uniform(1)[0])
            if u < 1.0 - 0.0331 * x ** 4:
                return d * v * boost
            if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v * boost

    def gamma(self, shape: float, scale: float, size: int) -> np.ndarray:
        if not (shape > 0 and scale > 0 and math.isfinite(shape) and math.isfinite(scale)):
            raise ConfigError(f"gamma needs positive finite shape and scale, got ({shape!r}, {scale!r})")
        return np.array([self._gamma_one(shape) * scale for _ in range(size)], dtype=np.float64)

    def multivariate_normal(self, mean, cov, size: int) -> np.ndarray:
        """``size`` x D draws from N(mean, cov) through a Cholesky factor."""
        mean = np.asarray(mean, dtype=np.float64)
        chol = cholesky_factor(cov, mean.shape[0])
        z = self.standard_normal(size * mean.shape[0]).reshape(size, mean.shape[0])
        return mean + z @ chol.T


def covariance_matrix(cov, dim: int) -> np.ndarray:
    """Expand a covariance descriptor to a dim x dim matrix.

    The descriptor is a scalar variance (isotropic), a length-``dim`` list of
    variances (diagonal) or a full matrix.
    """
    arr = np.asarray(cov, dtype=np.float64)
    if arr.ndim == 0:
        mat = float(arr) * np.eye(dim)
    elif arr.ndim == 1 and arr.shape[0] == dim:
        mat = np.diag(arr)
    elif arr.shape == (dim, dim):
        mat = arr
    else:
        raise ConfigError(f"covariance descriptor of shape {arr.shape} does not fit dim={dim}")
    if not np.all(np.isfinite(mat)) or not np.allclose(mat, mat.T):
        raise ConfigError("covariance must be finite and symmetric")
    return mat


def cholesky_factor(cov, dim: int) -> np.ndarray:
    try:
        return np.linalg.cholesky(covariance_matrix(cov, dim))
    except np.linalg.LinAlgError:
        raise ConfigError("covariance is not positive definite") from None
