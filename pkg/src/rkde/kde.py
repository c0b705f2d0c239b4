"""Weighted Gaussian kernel mixtures: plain KDE and evaluation helpers.

A :class:`DensityEstimate` is ``sum_j w_j k(x_j, .)`` with ``w`` on the
simplex. The vanilla KDE is the uniform-weight case; the robust estimate
from :mod:`rkde.kirwls` reuses the same type with non-uniform weights.
Joint densities over ``(v, k)`` are just estimates on concatenated atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .kernels import KernelConfig, SampleSet, as_samples, cross_kernel

SIMPLEX_TOL = 1e-12


def check_simplex(w, n: int | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a weight vector on the probability simplex and return it as floats."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"weights must be a vector, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise InputError(f"weights have length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InputError("weights must be finite and nonnegative")
    if abs(arr.sum() - 1.0) > tol:
        raise InputError(f"weights sum to {arr.sum()!r}, not 1")
    return arr


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    atoms: SampleSet
    weights: np.ndarray
    kernel: KernelConfig

    def __post_init__(self):
        atoms = as_samples(self.atoms)
        w = check_simplex(self.weights, atoms.n).copy()
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.atoms.d

    def __call__(self, points) -> np.ndarray:
        return density_at_points(self, points)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Density values on a rectilinear grid.

    ``values`` has shape ``(len(axes[0]),)`` in 1-D and
    ``(len(axes[0]), len(axes[1]))`` in 2-D (row-major, first axis slowest).
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def points(self) -> np.ndarray:
        """Grid coordinates as an (M, D) array in the same row-major order as ``values``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([ax[1] - ax[0] for ax in self.axes]))


def kde_fit(xs, cfg: KernelConfig) -> DensityEstimate:
    """Vanilla KDE: every atom gets weight 1/N."""
    atoms = as_samples(xs)
    return DensityEstimate(atoms, uniform_weights(atoms.n), cfg)


def density_at_points(est: DensityEstimate, points) -> np.ndarray:
    """Vectorized ``density_at`` for an (M, D) array of points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :] if pts.shape[0] == est.d else pts[:, None]
    if pts.shape[1] != est.d:
        raise InputError(f"dimension mismatch: points have D={pts.shape[1]}, estimate has D={est.d}")
    kmat = cross_kernel(pts, est.atoms, est.kernel)
    return kmat @ est.weights


def density_at(est: DensityEstimate, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.shape[0] != est.d:
        raise InputError(f"dimension mismatch: point has shape {x.shape}, estimate has D={est.d}")
    return float(density_at_points(est, x[None, :])[0])


def make_axes(grid) -> tuple[np.ndarray, ...]:
    """Turn ``[(min, max, count), ...]`` axis specs into coordinate arrays."""
    axes = []
    for spec in grid:
        try:
            lo, hi, count = spec
        except (TypeError, ValueError):
            raise InputError(f"axis spec must be (min, max, count), got {spec!r}") from None
        count = int(count)
        if count < 2 or not float(hi) > float(lo):
            raise InputError(f"axis spec needs count >= 2 and max > min, got {spec!r}")
        axes.append(np.linspace(float(lo), float(hi), count))
    return tuple(axes)


def density_on_grid(est: DensityEstimate, grid) -> DensityGrid:
    """Evaluate an estimate on a 1-D or 2-D grid given as axis specs."""
    if est.d > 2:
        raise InputError(f"grid export supports D <= 2, estimate has D={est.d}")
    axes = make_axes(grid)
    if len(axes) != est.d:
        raise InputError(f"got {len(axes)} axis specs for a {est.d}-D estimate")
    shell = DensityGrid(axes, np.empty(0))
    values = density_at_points(est, shell.points()).reshape(tuple(len(ax) for ax in axes))
    return DensityGrid(axes, values)
