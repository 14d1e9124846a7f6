"""Closed-form Wasserstein geometry between members of the G family.

Every member ``G_phi(v, V)`` is the affine image ``x -> V^(1/2) y + v`` of one
standardized law, so optimal maps, distances and geodesics reduce to the
Gaussian formulas on ``(v, V)``.  None of these functions takes a generator:
the distance is the same for every ``phi``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, NumericError

__all__ = [
    "GaussianParams",
    "OptimalMap",
    "spd_sqrt",
    "spd_inv_sqrt",
    "optimal_matrix",
    "w2_distance",
    "geodesic_point",
    "pushforward_check",
]

SYM_TOL = 1e-10
CLAMP = 1e-14


@dataclass(frozen=True)
class GaussianParams:
    """Mean and nonnegative-definite covariance; ``cov = 0`` is a Dirac mass."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        d = mean.size
        if cov.shape != (d, d):
            raise InputError(f"covariance must be {d}x{d}, got {cov.shape}")
        _check_symmetric(cov)
        cov = 0.5 * (cov + cov.T)
        w = np.linalg.eigvalsh(cov)
        if w.min() < -CLAMP * max(1.0, abs(np.trace(cov))) * d:
            raise InputError("covariance must be nonnegative definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class OptimalMap:
    """The affine map ``x -> W (x - v) + u``."""

    W: np.ndarray
    source_mean: np.ndarray
    target_mean: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.source_mean) @ self.W.T + self.target_mean

    @property
    def jacobian(self) -> float:
        return float(np.linalg.det(self.W))


def _check_symmetric(M):
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T)) > SYM_TOL * scale:
        raise InputError("matrix is not symmetric")


def _eigh(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    _check_symmetric(M)
    w, Q = np.linalg.eigh(0.5 * (M + M.T))
    floor = CLAMP * max(abs(float(np.trace(M))), np.finfo(float).tiny)
    if w.min() < -floor * M.shape[0]:
        raise InputError(f"matrix has a negative eigenvalue {w.min():.3g}")
    return np.maximum(w, 0.0), Q, floor


def spd_sqrt(M):
    """Symmetric square root by spectral decomposition.

    Eigenvalues below ``1e-14 * trace`` are clamped to zero, so nonnegative
    (boundary) covariances are accepted.
    """
    w, Q, floor = _eigh(M)
    w = np.where(w < floor, 0.0, w)
    R = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (R + R.T)


def spd_inv_sqrt(M, max_cond: float = 1e14):
    w, Q, _ = _eigh(M)
    cond = w.max() / w.min() if w.min() > 0 else math.inf
    if cond > max_cond:
        raise NumericError(f"matrix is near singular (condition estimate {cond:.3g})", estimate=cond)
    R = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (R + R.T)


def optimal_matrix(V, U, v=None, u=None) -> OptimalMap:
    """``W = U^(1/2) (U^(1/2) V U^(1/2))^(-1/2) U^(1/2)``, so that ``W V W = U``."""
    V = np.asarray(V, dtype=float)
    U = np.asarray(U, dtype=float)
    if V.shape != U.shape:
        raise InputError("covariances have different shapes")
    d = V.shape[0]
    Uh = spd_sqrt(U)
    inner = Uh @ V @ Uh
    W = Uh @ spd_inv_sqrt(0.5 * (inner + inner.T)) @ Uh
    W = 0.5 * (W + W.T)
    v = np.zeros(d) if v is None else np.asarray(v, dtype=float)
    u = np.zeros(d) if u is None else np.asarray(u, dtype=float)
    return OptimalMap(W, v, u)


def _well_conditioned(M, rtol=1e-10):
    w = np.linalg.eigvalsh(M)
    return w.min() > rtol * max(w.max(), np.finfo(float).tiny)


def w2_distance(p: GaussianParams, q: GaussianParams) -> float:
    """``sqrt(|v-u|^2 + tr V + tr U - 2 tr (U^(1/2) V U^(1/2))^(1/2))``.

    When both covariances are nonsingular the covariance part is evaluated as
    ``|(W - I) V^(1/2)|_F^2`` with ``W`` the optimal matrix (equal to the
    trace expression because ``W V W = U``).  That sum of squares keeps full
    relative accuracy for nearby laws, where the trace form loses half the
    digits to cancellation.  Singular covariances use the trace form.
    """
    if p.dim != q.dim:
        raise InputError("dimension mismatch")
    mean_part = float(np.sum((p.mean - q.mean) ** 2))
    if _well_conditioned(p.cov) and _well_conditioned(q.cov):
        W = optimal_matrix(p.cov, q.cov).W
        D = (W - np.eye(p.dim)) @ spd_sqrt(p.cov)
        return math.sqrt(mean_part + float(np.sum(D * D)))
    Uh = spd_sqrt(q.cov)
    cross = np.trace(spd_sqrt(Uh @ p.cov @ Uh))
    rad = mean_part + np.trace(p.cov) + np.trace(q.cov) - 2.0 * cross
    if rad < 0:
        scale = max(1.0, mean_part + np.trace(p.cov) + np.trace(q.cov))
        if rad < -1e-12 * scale:
            raise NumericError(f"negative squared distance {rad:.3g}", estimate=rad)
        warnings.warn(f"clamped negative squared distance {rad:.3g} to 0", RuntimeWarning, stacklevel=2)
        rad = 0.0
    return math.sqrt(rad)


def geodesic_point(p: GaussianParams, q: GaussianParams, t: float, extrapolate: bool = False) -> GaussianParams:
    """Point at time ``t`` on the geodesic from ``p`` to ``q``.

    Mean ``(1-t) v + t u``; covariance ``[(1-t) I + t W] V [(1-t) I + t W]``.
    ``t > 1`` continues the same displacement and needs ``extrapolate=True``.
    """
    if t < 0 or (t > 1 and not extrapolate):
        raise DomainError(f"t={t} outside [0, 1]")
    d = p.dim
    W = optimal_matrix(p.cov, q.cov).W
    M = (1.0 - t) * np.eye(d) + t * W
    cov = M @ p.cov @ M
    if t == 1.0:
        cov = q.cov.copy()
    return GaussianParams((1.0 - t) * p.mean + t * q.mean, 0.5 * (cov + cov.T))


def default_grid(point, n: int = 41, radii: float = 5.0):
    """Tensor grid of ``n^d`` points within ``radii`` Mahalanobis radii of ``point``."""
    d = point.dim
    if d > 3:
        raise DomainError("tensor residual grids are limited to d <= 3")
    axis = np.linspace(-radii, radii, n)
    y = np.array(list(itertools.product(axis, repeat=d)))
    return y @ spd_sqrt(point.cov).T + point.mean


def pushforward_check(src, dst, tmap: OptimalMap, grid=None) -> float:
    """``max |rho(x) - sigma(W(x - v) + u) det W| / peak`` over ``grid``.

    ``src`` and ``dst`` are family members (callables with ``peak``); a small
    value certifies that the affine map carries ``src`` onto ``dst``.
    """
    if grid is None:
        grid = default_grid(src)
    x = np.asarray(grid, dtype=float)
    lhs = np.asarray(src(x))
    rhs = np.asarray(dst(tmap(x))) * tmap.jacobian
    return float(np.max(np.abs(lhs - rhs)) / src.peak)
