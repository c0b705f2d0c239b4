"""Kernelized iteratively re-weighted least squares (KIRWLS).

The robust KDE minimizes

    J(p) = (1/N) sum_j rho(||k(x_j, .) - p||_H)

over the RKHS. Its minimizer is a mixture ``sum_j w_j k(x_j, .)`` whose
weights satisfy ``w_j ∝ psi(r_j)`` with ``r_j`` the RKHS residual of atom j.
KIRWLS iterates that fixed-point map. Every RKHS quantity is computed from
the Gram matrix ``G`` through the reproducing property:

    r_j^2 = G_jj - 2 (G w)_j + w^T G w
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .kde import DensityEstimate, check_simplex, uniform_weights
from .kernels import KernelConfig, as_samples, gram_matrix
from .robust_loss import RobustLossConfig, psi, resolve_threshold, rho

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class KirwlsReport:
    """Result of a KIRWLS solve.

    ``objective_trace[k]`` is J at the k-th weight iterate, starting with the
    initial weights, so it has ``iterations + 1`` entries. ``weight_trace``
    stores those iterates row by row.
    """

    weights: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    final_residuals: np.ndarray
    gateaux_residual_norm: float
    converged: bool
    loss: RobustLossConfig
    weight_trace: np.ndarray = field(repr=False)


def _check_gram(gram) -> np.ndarray:
    g = np.asarray(gram, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
        raise InputError(f"Gram matrix must be square and non-empty, got shape {g.shape}")
    return g


def _residuals(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    gw = g @ w
    sq = np.diag(g) - 2.0 * gw + w @ gw
    return np.sqrt(np.maximum(sq, 0.0))


def rkhs_residuals(gram, w) -> np.ndarray:
    """RKHS distances ``||k(x_j, .) - sum_m w_m k(x_m, .)||`` for every atom j."""
    g = _check_gram(gram)
    w = check_simplex(w, g.shape[0])
    return _residuals(g, w)


def objective(gram, w, loss: RobustLossConfig) -> float:
    """J(w) = mean of rho over the RKHS residuals."""
    return float(np.mean(rho(rkhs_residuals(gram, w), loss)))


def gateaux_residual_norm(gram, w, loss: RobustLossConfig) -> float:
    """RKHS norm of the Gateaux gradient V(p) at ``p = sum_m w_m k(x_m, .)``.

    V(p) = (1/N) sum_j psi(r_j) (k(x_j, .) - p) lies in the span of the atoms
    with coefficients c = psi(r)/N - (sum psi(r)/N) w, so ||V|| = sqrt(c^T G c).
    It vanishes at a stationary point of J.
    """
    g = _check_gram(gram)
    w = check_simplex(w, g.shape[0])
    n = g.shape[0]
    ps = psi(_residuals(g, w), loss) / n
    c = ps - ps.sum() * w
    return float(np.sqrt(max(float(c @ g @ c), 0.0)))


def resolve_loss(gram, loss: RobustLossConfig) -> RobustLossConfig:
    """Fix the Huber threshold from the uniform-weight residuals if unset."""
    if loss.is_resolved:
        return loss
    g = _check_gram(gram)
    return resolve_threshold(loss, _residuals(g, uniform_weights(g.shape[0])))


def kirwls_solve(
    gram,
    loss: RobustLossConfig,
    init=None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> KirwlsReport:
    """Run KIRWLS on a precomputed Gram matrix.

    Each iteration computes residuals of the current mixture and replaces the
    weights with ``psi(r) / sum(psi(r))``. Iteration stops once the largest
    weight change falls below ``tol`` or after ``max_iter`` updates.

    Raises:
        InputError: ``init`` is off the simplex, or ``max_iter``/``tol`` invalid.
        NumericalError: a non-finite iterate, or every psi value is zero.
    """
    g = _check_gram(gram)
    n = g.shape[0]
    if max_iter < 1:
        raise InputError(f"max_iter must be >= 1, got {max_iter}")
    if not tol > 0:
        raise InputError(f"tol must be positive, got {tol}")
    w = uniform_weights(n) if init is None else check_simplex(init, n).copy()
    loss = resolve_loss(g, loss)

    r = _residuals(g, w)
    trace_w = [w]
    trace_j = [float(np.mean(rho(r, loss)))]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        ps = psi(r, loss)
        total = ps.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise NumericalError(f"psi weights degenerate (sum={total!r}) at iterate {it}")
        w_new = ps / total
        r = _residuals(g, w_new)
        if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(r))):
            raise NumericalError(f"non-finite KIRWLS iterate at iterate {it}")
        step = float(np.max(np.abs(w_new - w)))
        w = w_new
        trace_w.append(w)
        trace_j.append(float(np.mean(rho(r, loss))))
        if step < tol:
            converged = True
            break
    if not converged:
        logger.debug("KIRWLS stopped at max_iter=%d without meeting tol=%g", max_iter, tol)

    return KirwlsReport(
        weights=w,
        iterations=it,
        objective_trace=np.asarray(trace_j),
        final_residuals=r,
        gateaux_residual_norm=gateaux_residual_norm(g, w, loss),
        converged=converged,
        loss=loss,
        weight_trace=np.asarray(trace_w),
    )


def kirwls_fit(
    xs,
    cfg: KernelConfig,
    loss: RobustLossConfig,
    init=None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> KirwlsReport:
    """Robust KDE weights for a sample set; see :func:`kirwls_solve`."""
    return kirwls_solve(gram_matrix(as_samples(xs), cfg), loss, init, max_iter, tol)


def rkde_fit(xs, cfg: KernelConfig, loss: RobustLossConfig, **kwargs) -> tuple[DensityEstimate, KirwlsReport]:
    """Fit a robust KDE and return it together with the solver report."""
    atoms = as_samples(xs)
    report = kirwls_fit(atoms, cfg, loss, **kwargs)
    return DensityEstimate(atoms, report.weights, cfg), report
