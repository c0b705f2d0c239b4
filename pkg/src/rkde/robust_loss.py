"""Robust losses rho and their weight functions psi(x) = rho'(x) / x.

Only the Huber loss and plain least squares are provided. Least squares has
psi identically one, so a robust fit with it reduces to the ordinary KDE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import InputError

LossKind = Literal["huber", "least_squares"]
_KINDS = ("huber", "least_squares")


@dataclass(frozen=True)
class RobustLossConfig:
    """Loss selection.

    Attributes:
        kind: ``"huber"`` or ``"least_squares"``.
        a: Huber threshold in RKHS-norm units. ``None`` means "pick it from the
            data": the ``quantile``-th quantile of the residuals of the
            uniform-weight estimate (see :func:`resolve_threshold`).
        quantile: Residual quantile used when ``a`` is ``None``.
    """

    kind: LossKind = "huber"
    a: float | None = None
    quantile: float = 0.5

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown loss kind {self.kind!r}; expected one of {_KINDS}")
        if self.a is not None:
            a = float(self.a)
            if not math.isfinite(a) or a <= 0.0:
                raise InputError(f"Huber threshold a must be positive and finite, got {self.a!r}")
            object.__setattr__(self, "a", a)
        if not 0.0 <= self.quantile <= 1.0:
            raise InputError(f"quantile must lie in [0, 1], got {self.quantile!r}")

    @property
    def is_resolved(self) -> bool:
        return self.kind == "least_squares" or self.a is not None


HUBER = RobustLossConfig("huber")
LEAST_SQUARES = RobustLossConfig("least_squares")


def _check_nonneg(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise InputError("robust loss arguments must be nonnegative")
    return arr


def _threshold(cfg: RobustLossConfig) -> float:
    if cfg.a is None:
        raise InputError("Huber threshold is unresolved; call resolve_threshold first")
    return cfg.a


def rho(x, cfg: RobustLossConfig):
    """Loss value. Accepts scalars or arrays; returns the same shape."""
    arr = _check_nonneg(x)
    if cfg.kind == "least_squares":
        out = 0.5 * arr * arr
    else:
        a = _threshold(cfg)
        out = np.where(arr <= a, 0.5 * arr * arr, a * arr - 0.5 * a * a)
    return out if out.ndim else float(out)


def psi(x, cfg: RobustLossConfig):
    """Weight function rho'(x) / x, with psi(0) taken as its limit (1 here)."""
    arr = _check_nonneg(x)
    if cfg.kind == "least_squares":
        out = np.ones_like(arr)
    else:
        a = _threshold(cfg)
        out = np.divide(a, arr, out=np.ones_like(arr), where=arr > a)
    return out if out.ndim else float(out)


def resolve_threshold(cfg: RobustLossConfig, residuals) -> RobustLossConfig:
    """Fill in the Huber threshold from residuals if it was left unset.

    The threshold becomes the configured quantile of ``residuals``. A zero
    quantile (more than that fraction of residuals vanish) falls back to the
    largest residual, and to 1.0 if every residual is zero.
    """
    if cfg.is_resolved:
        return cfg
    r = _check_nonneg(residuals).ravel()
    a = float(np.quantile(r, cfg.quantile)) if r.size else 0.0
    if a <= 0.0:
        a = float(r.max()) if r.size and r.max() > 0 else 1.0
    return replace(cfg, a=a)
