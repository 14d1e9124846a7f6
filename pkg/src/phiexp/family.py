"""The two phi-exponential families with mean and covariance parameters.

``N``: ``n(v, V)(x) = exp_phi(lam(V) - c(V) |x - v|_V^2)`` with the constants
solved at ``V`` itself.

``G``: ``g(v, V)(x) = exp_phi(lam(I) - c(I) |x - v|_V^2) / sqrt(det V)``, the
affine image of the standardized member.

Both are probability densities with mean ``v`` and covariance ``V``; they
coincide at every scale only for power generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateError, DomainError, InputError, TruncationError
from .grids import DensityGrid, sphere_area
from .normalization import NormalizationConstants, solve_constants
from .phi_core import PhiSpec, deformed

__all__ = [
    "FamilyPoint",
    "FitResult",
    "MomentReport",
    "make_point",
    "density",
    "verify_moments",
    "coincidence_gap",
    "fit_family",
    "family_values",
    "family_cell_averages",
    "sample_radial",
    "sample_cartesian",
]


@lru_cache(maxsize=4096)
def _constants(spec: PhiSpec, d: int, det_V: float, family: str) -> NormalizationConstants:
    return solve_constants(spec, d, family=family, det_V=det_V)


def _check_cov(cov, d):
    cov = np.array(cov, dtype=float)
    if cov.shape != (d, d):
        raise InputError(f"covariance must be {d}x{d}, got {cov.shape}")
    if np.max(np.abs(cov - cov.T)) > 1e-10 * max(1.0, np.max(np.abs(cov))):
        raise InputError("covariance must be symmetric")
    cov = 0.5 * (cov + cov.T)
    w = np.linalg.eigvalsh(cov)
    if w.min() <= 0:
        raise InputError("covariance must be positive definite")
    return cov, float(np.prod(w))


@dataclass(frozen=True)
class FamilyPoint:
    family: str
    phi: PhiSpec
    dim: int
    mean: np.ndarray
    cov: np.ndarray
    constants: NormalizationConstants
    det_V: float = field(default=1.0)

    @property
    def lx(self):
        return deformed(self.phi)

    @property
    def scale_factor(self) -> float:
        """Prefactor multiplying the profile (``det V^-1/2`` for ``G``)."""
        return self.det_V ** -0.5 if self.family == "G" else 1.0

    def profile(self, m2):
        """Density as a function of the squared Mahalanobis distance."""
        lam, c = self.constants.lam, self.constants.c
        return self.scale_factor * np.asarray(self.lx.exp(lam - c * np.asarray(m2, dtype=float)))

    def mahalanobis2(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InputError(f"points must have {self.dim} coordinates, got {x.shape[-1]}")
        y = x - self.mean
        sol = np.linalg.solve(self.cov, y.reshape(-1, self.dim).T).T.reshape(y.shape)
        return np.sum(y * sol, axis=-1)

    def __call__(self, x):
        out = self.profile(self.mahalanobis2(x))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def peak(self) -> float:
        return float(self.profile(0.0))

    @property
    def support_radius(self) -> float:
        """Mahalanobis radius of the support; inf unless ``l_phi`` is finite."""
        lo = self.lx.lower_bound
        if not math.isfinite(lo):
            return math.inf
        return math.sqrt((self.constants.lam - lo) / self.constants.c)


def make_point(phi: PhiSpec, mean, cov, family: str = "N") -> FamilyPoint:
    """Solve the constants for ``(phi, V)`` and return the family member."""
    if family not in ("N", "G"):
        raise DomainError(f"family must be 'N' or 'G', got {family!r}")
    mean = np.array(mean, dtype=float).reshape(-1)
    d = mean.size
    cov, det = _check_cov(cov, d)
    consts = _constants(phi, d, 1.0 if family == "G" else det, family)
    if family == "G" and consts.det_V != det:
        consts = NormalizationConstants(
            consts.lam, consts.c, d, det, "G", consts.residual, consts.multiple_crossings, consts.bracket
        )
    mean.setflags(write=False)
    cov.setflags(write=False)
    return FamilyPoint(family, phi, d, mean, cov, consts, det)


def density(point: FamilyPoint, x):
    return point(x)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    mass: float
    mean: np.ndarray
    cov: np.ndarray
    mass_dev: float
    mean_dev: float
    cov_dev: float
    radius: float
    tail_estimate: float

    def ok(self, tol: float) -> bool:
        return max(self.mass_dev, self.mean_dev, self.cov_dev) < tol


def _radial_integral(prof, k, r_support, tol, r0=4.0, r_budget=1e12):
    """``integral_0^inf r^k prof(r^2) dr`` on doubling panels until the tail is small.

    The tail beyond ``R`` is estimated from the local power decay of the
    integrand between ``R/2`` and ``R``.
    """

    def g(r):
        return r**k * prof(r * r)

    # the profile comes from a Newton inversion, so 1e-11 is near its noise floor
    opts = dict(epsabs=1e-15, epsrel=1e-11, limit=200)
    if math.isfinite(r_support):
        val, _ = quad(g, 0.0, r_support, **opts)
        return val, r_support, 0.0
    total, _ = quad(g, 0.0, r0, **opts)
    R = r0
    while True:
        g_half, g_R = float(g(0.5 * R)), float(g(R))
        if g_R <= 0.0:
            tail = 0.0
        elif g_half > 0 and g_R < g_half:
            beta = math.log(g_half / g_R) / math.log(2.0)
            tail = g_R * R / (beta - 1.0) if beta > 1.0 else math.inf
        else:
            tail = math.inf
        if tail < tol / 10.0:
            return total, R, tail
        if 2 * R > r_budget:
            raise TruncationError(f"tail estimate {tail:.3g} still above {tol / 10:.3g} at radius {R:.3g}")
        piece, _ = quad(g, R, 2 * R, **opts)
        total += piece
        R *= 2


def verify_moments(point: FamilyPoint, tol: float = 1e-6) -> MomentReport:
    """Mass, mean and covariance of ``point`` by radial quadrature.

    In standardized coordinates ``y = V^(-1/2)(x - v)`` the density is a
    function of ``|y|``; mass and second moments reduce to one-dimensional
    integrals in ``r = |y|``, integrated adaptively (Gauss-Kronrod) out to a
    radius where the estimated tail is below ``tol / 10``.  The first moment
    about ``v`` vanishes by symmetry, so the mean is ``v`` times the mass.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    d = point.dim
    prof = point.profile
    jac = math.sqrt(point.det_V)
    area = sphere_area(d)
    # tolerances on the raw radial integrals so the tails of mass and covariance fall below tol / 10
    scale0 = area * jac
    scale2 = scale0 * float(np.max(np.abs(point.cov))) / d
    m0, R0, t0 = _radial_integral(prof, d - 1, point.support_radius, tol / scale0)
    m2, R2, t2 = _radial_integral(prof, d + 1, point.support_radius, tol / scale2)
    mass = area * jac * m0
    second = area * jac * m2 / d
    mean = point.mean * mass
    cov = point.cov * second
    return MomentReport(
        mass=mass,
        mean=mean,
        cov=cov,
        mass_dev=abs(mass - 1.0),
        mean_dev=float(np.max(np.abs(mean - point.mean))),
        cov_dev=float(np.max(np.abs(cov - point.cov))),
        radius=max(R0, R2),
        tail_estimate=max(scale0 * t0, scale2 * t2),
    )


def coincidence_gap(phi: PhiSpec, psi: PhiSpec, d: int, a: float, n_grid: int = 4001, r_max: float = 8.0) -> float:
    """``sup |g_phi(0, a^2 I) - n_psi(0, a^2 I)| / peak`` over radii in ``[0, r_max * a]``."""
    if not a > 0:
        raise DomainError("a must be positive")
    cov = (a * a) * np.eye(d)
    g = make_point(phi, np.zeros(d), cov, "G")
    n = make_point(psi, np.zeros(d), cov, "N")
    reach = r_max
    for pt in (g, n):
        if math.isfinite(pt.support_radius):
            reach = max(reach, 1.05 * pt.support_radius)
    m2 = np.linspace(0.0, reach, n_grid) ** 2  # Mahalanobis radius squared
    gv = g.profile(m2)
    nv = n.profile(m2)
    peak = max(gv.max(), nv.max())
    return float(np.max(np.abs(gv - nv)) / peak)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    fitted_mean: np.ndarray
    fitted_cov: np.ndarray
    l1_residual: float
    family: str


def family_values(point: FamilyPoint, grid: DensityGrid):
    """``point`` evaluated at the cell centers of ``grid``, shaped like ``grid.values``."""
    vals = point(grid.points())
    return np.asarray(vals).reshape(grid.shape)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def family_cell_averages(point: FamilyPoint, grid: DensityGrid):
    """Cell averages of ``point`` over ``grid`` by 4-point Gauss-Legendre per cell and axis.

    Radial grids need a member centered at the origin with isotropic
    covariance.
    """
    if grid.geometry == "radial":
        d = grid.dim
        a2 = float(point.cov[0, 0])
        if np.any(point.mean != 0) or not np.allclose(point.cov, a2 * np.eye(d), rtol=1e-12, atol=0):
            raise DomainError("radial averaging needs a centered isotropic member")
        e = grid.edges[0]
        lo, hi = e[:-1, None], e[1:, None]
        r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GL_X[None, :]
        w = 0.5 * (hi - lo) * _GL_W[None, :] * r ** (d - 1)
        return np.sum(w * point.profile(r * r / a2), axis=1) / ((hi[:, 0] ** d - lo[:, 0] ** d) / d)
    ex, ey = grid.edges
    ny, nx = grid.shape
    xs = (0.5 * (ex[:-1] + ex[1:]))[:, None] + 0.5 * np.diff(ex)[:, None] * _GL_X[None, :]
    ys = (0.5 * (ey[:-1] + ey[1:]))[:, None] + 0.5 * np.diff(ey)[:, None] * _GL_X[None, :]
    vals = np.zeros((ny, nx))
    for a in range(_GL_X.size):
        for b in range(_GL_X.size):
            P = np.stack(np.meshgrid(xs[:, a], ys[:, b]), axis=-1).reshape(-1, 2)
            vals += 0.25 * _GL_W[a] * _GL_W[b] * np.asarray(point(P)).reshape(ny, nx)
    return vals


def fit_family(grid: DensityGrid, phi: PhiSpec, family: str = "N", mass_tol: float = 1e-4) -> FitResult:
    """Moment-matched family member and its L1 distance to the grid density.

    The member is averaged over each cell before comparison, so a grid that
    holds exact cell averages of a family member has residual near zero.
    """
    mass = grid.mass()
    if abs(mass - 1.0) > mass_tol:
        raise DomainError(f"grid mass {mass:.8g} is not within {mass_tol} of 1")
    mean = grid.mean()
    cov = grid.covariance()
    w = np.linalg.eigvalsh(cov)
    if not np.all(np.isfinite(w)) or w.min() <= 0:
        raise DegenerateError("empirical covariance is not positive definite")
    point = make_point(phi, mean, cov, family)
    resid = grid.l1_distance(family_cell_averages(point, grid))
    return FitResult(mean, cov, min(resid, 2.0), family)


def sample_radial(point: FamilyPoint, r_max: float, n: int) -> DensityGrid:
    """Radial grid holding ``point`` at cell centers (``point`` must be isotropic and centered)."""
    d = point.dim
    a2 = point.cov[0, 0]
    if np.any(point.mean != 0) or not np.allclose(point.cov, a2 * np.eye(d), rtol=1e-12, atol=0):
        raise DomainError("radial sampling needs a centered isotropic member")
    edges = np.linspace(0.0, r_max, n + 1)
    r = 0.5 * (edges[:-1] + edges[1:])
    return DensityGrid("radial", d, (edges,), point.profile(r * r / a2))


def sample_cartesian(point: FamilyPoint, half_width: float, n: int) -> DensityGrid:
    if point.dim != 2:
        raise DomainError("cartesian sampling is two-dimensional")
    e = np.linspace(-half_width, half_width, n + 1)
    grid = DensityGrid("cartesian", 2, (e, e), np.zeros((n, n)))
    return grid.with_values(family_values(point, grid))
