"""Nonlinear drift-diffusion flow, its covariance ODE and family-stability diagnostics.

The flow is ``d rho/dt = div(rho grad(ln_phi(rho) + c_I |x|^2))`` where
``c_I`` is the normalization coefficient at the identity covariance, so the
standardized family member is stationary.  Restricted to the family, the
covariance obeys ``dV/dt = 4 (c(V) V^-1 - c_I I) V = 4 (c(V) I - c_I V)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from . import kernels
from .errors import (
    DegenerateError,
    DomainError,
    GeneratorError,
    NumericError,
    PhiExpError,
    SchemeError,
    StiffnessError,
)
from .family import FitResult, _constants, family_cell_averages, fit_family, make_point
from .grids import DensityGrid, sphere_area
from .phi_core import PhiSpec, deformed

__all__ = [
    "FlowConfig",
    "FlowTrajectory",
    "MomentTrajectory",
    "StabilityPoint",
    "identity_coefficient",
    "initial_density",
    "pde_evolve",
    "moment_ode_evolve",
    "stability_diagnostic",
    "trajectory_moments",
    "support_radius",
]

log = logging.getLogger(__name__)

MASS_TOL_INIT = 1e-6
BOUNDARY_FLUX_TOL = 1e-12
FLOOR_FACTOR = 1e-14


def identity_coefficient(phi: PhiSpec, d: int) -> float:
    """``c_phi(I_d)``, the coefficient of the confining potential."""
    return _constants(phi, d, 1.0, "N").c


@dataclass
class FlowConfig:
    """Parameters of one flow integration.

    ``potential_coefficient`` defaults to ``c_phi(I_d)``; ``drift=False``
    removes the potential (pure nonlinear diffusion, used for spreading
    checks).  ``density_floor`` defaults to ``1e-14`` times the initial peak.
    """

    phi: PhiSpec
    dim: int
    t_end: float
    output_times: Sequence[float] = ()
    cfl: float = 0.4
    potential_coefficient: float | None = None
    density_floor: float | None = None
    drift: bool = True
    backend: str | None = None
    check_interval: float = 0.1
    max_expansions: int = 4
    dt_min: float = 1e-13

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise DomainError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.t_end > 0:
            raise DomainError("t_end must be positive")
        if self.potential_coefficient is None and self.drift:
            self.potential_coefficient = identity_coefficient(self.phi, self.dim)
        if self.drift and not self.potential_coefficient > 0:
            raise DomainError("potential_coefficient must be positive")
        if self.density_floor is not None and self.density_floor < 0:
            raise DomainError("density_floor must be nonnegative")
        times = sorted(set(float(t) for t in self.output_times) | {0.0, float(self.t_end)})
        if times[0] < 0 or times[-1] > self.t_end:
            raise DomainError("output times must lie in [0, t_end]")
        self.output_times = tuple(times)


@dataclass
class FlowTrajectory:
    times: list
    grids: list
    masses: list
    steps: int
    halvings: int
    expansions: int
    backend: str
    config: FlowConfig

    def mass_drift(self) -> float:
        return max(abs(m - self.masses[0]) for m in self.masses)


@dataclass(frozen=True)
class MomentTrajectory:
    """Solution of the covariance ODE at the requested times."""

    times: np.ndarray
    covariances: np.ndarray  # (n_t, d, d)
    drifts: np.ndarray  # (n_t, d, d), A_t
    means: np.ndarray  # (n_t, d)
    c_identity: float


@dataclass(frozen=True)
class StabilityPoint:
    t: float
    l1_residual: float | None
    fitted_cov: np.ndarray | None
    note: str = ""


# --------------------------------------------------------------------------
# initial data


def initial_density(
    phi: PhiSpec,
    dim: int,
    cov,
    n_cells: int,
    geometry: str = "radial",
    family: str = "N",
    radii: float = 8.0,
    mean=None,
) -> DensityGrid:
    """Cell averages of a family member on a grid spanning ``radii`` Mahalanobis radii.

    Cell averages use 4-point Gauss-Legendre per cell (per axis), then the
    grid is rescaled to unit mass; the rescaling factor is within ``1e-6``
    of one at any sensible resolution.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    mean = np.zeros(dim) if mean is None else np.asarray(mean, dtype=float)
    point = make_point(phi, mean, cov, family)
    if geometry == "radial":
        a2 = cov[0, 0]
        if np.any(mean != 0) or not np.allclose(cov, a2 * np.eye(dim), rtol=1e-12, atol=0):
            raise DomainError("radial grids need centered isotropic data")
        r_max = radii * math.sqrt(a2)
        if math.isfinite(point.support_radius):
            r_max = max(r_max, 1.1 * point.support_radius * math.sqrt(a2))
        grid = DensityGrid("radial", dim, (np.linspace(0.0, r_max, n_cells + 1),), np.zeros(n_cells))
    elif geometry == "cartesian":
        if dim != 2:
            raise DomainError("cartesian grids are two-dimensional")
        sd = np.sqrt(np.diag(cov))
        reach = radii
        if math.isfinite(point.support_radius):
            reach = max(reach, 1.1 * point.support_radius)
        ex = np.linspace(mean[0] - reach * sd[0], mean[0] + reach * sd[0], n_cells + 1)
        ey = np.linspace(mean[1] - reach * sd[1], mean[1] + reach * sd[1], n_cells + 1)
        grid = DensityGrid("cartesian", 2, (ex, ey), np.zeros((n_cells, n_cells)))
    else:
        raise DomainError(f"unknown geometry {geometry!r}")
    grid = grid.with_values(family_cell_averages(point, grid))
    mass = grid.mass()
    if abs(mass - 1.0) > 1e-3:
        raise DomainError(f"grid captures mass {mass:.6g}; increase radii or resolution")
    return grid.with_values(grid.values / mass)


# --------------------------------------------------------------------------
# flow integration


def _boundary_flux_radial(rho, edges, dim, c_pot, floor, kp, backend):
    """Outward scheme flux across the last interior face (mass arriving at the wall)."""
    n = rho.size
    dr = edges[1] - edges[0]
    r = 0.5 * (edges[-3:-1] + edges[-2:])
    mu = backend.ln_phi(np.maximum(rho[-2:], floor), *kp) + c_pot * r * r
    u = -(mu[1] - mu[0]) / dr
    return max(u, 0.0) * rho[n - 2] * sphere_area(dim) * edges[n - 1] ** (dim - 1)


def _boundary_flux_cartesian(rho, ex, ey, c_pot, floor, kp, backend):
    hx, hy = ex[1] - ex[0], ey[1] - ey[0]
    xc = 0.5 * (ex[:-1] + ex[1:])
    yc = 0.5 * (ey[:-1] + ey[1:])
    X, Y = np.meshgrid(xc, yc)
    mu = backend.ln_phi(np.maximum(rho, floor), *kp) + c_pot * (X * X + Y * Y)
    # (upwind cell values, velocity toward the wall, face length)
    sides = [
        (rho[:, -2], -(mu[:, -1] - mu[:, -2]) / hx, hy),
        (rho[:, 1], (mu[:, 1] - mu[:, 0]) / hx, hy),
        (rho[-2, :], -(mu[-1, :] - mu[-2, :]) / hy, hx),
        (rho[1, :], (mu[1, :] - mu[0, :]) / hy, hx),
    ]
    return float(sum(np.sum(np.maximum(u, 0.0) * up) * face for up, u, face in sides))


def _expand(grid: DensityGrid) -> DensityGrid:
    if grid.geometry == "radial":
        e = grid.edges[0]
        n = e.size - 1
        extra = max(n // 2, 1)
        dr = e[1] - e[0]
        edges = np.concatenate([e, e[-1] + dr * np.arange(1, extra + 1)])
        return DensityGrid("radial", grid.dim, (edges,), np.concatenate([grid.values, np.zeros(extra)]))
    ex, ey = grid.edges
    px = max((ex.size - 1) // 4, 1)
    py = max((ey.size - 1) // 4, 1)
    hx, hy = ex[1] - ex[0], ey[1] - ey[0]
    ex2 = np.concatenate([ex[0] - hx * np.arange(px, 0, -1), ex, ex[-1] + hx * np.arange(1, px + 1)])
    ey2 = np.concatenate([ey[0] - hy * np.arange(py, 0, -1), ey, ey[-1] + hy * np.arange(1, py + 1)])
    vals = np.pad(grid.values, ((py, py), (px, px)))
    return DensityGrid("cartesian", 2, (ex2, ey2), vals)


def _raise_status(status, t):
    if status == kernels.STIFF:
        raise StiffnessError(f"time step collapsed below its floor at t={t:.6g}")
    if status == kernels.NEGATIVE:
        raise SchemeError(f"negative cell value persisted after step halving at t={t:.6g}")
    if status == kernels.MAX_STEPS:
        raise NumericError(f"step budget exhausted at t={t:.6g}")


def pde_evolve(init: DensityGrid, cfg: FlowConfig) -> FlowTrajectory:
    """Integrate the flow from ``init`` and return snapshots at ``cfg.output_times``.

    The scheme is conservative (no flux through the outer boundary), so the
    mass changes only by rounding.  The domain is enlarged between
    integration chunks whenever the outward flux reaching the outermost cells
    exceeds ``1e-12``.
    """
    phi = cfg.phi
    if not phi.vanishes_at_zero:
        raise GeneratorError(f"{phi.label}: the flow needs phi(0) = 0")
    if not phi.admissible(cfg.dim):
        raise GeneratorError(f"{phi.label} is not admissible in dimension {cfg.dim}")
    if init.dim != cfg.dim:
        raise DomainError("grid and config dimensions differ")
    if np.any(init.values < 0) or not np.all(np.isfinite(init.values)):
        raise DomainError("initial density must be finite and nonnegative")
    mass0 = init.mass()
    if abs(mass0 - 1.0) > MASS_TOL_INIT:
        raise DomainError(f"initial mass {mass0:.10g} is not within {MASS_TOL_INIT} of 1")

    backend = kernels.get_backend(cfg.backend)
    kp = kernels.pack_params(deformed(phi).kernel_params())
    c_pot = float(cfg.potential_coefficient) if cfg.drift else 0.0
    floor = cfg.density_floor if cfg.density_floor is not None else FLOOR_FACTOR * float(init.values.max())

    grid = init.with_values(init.values.copy())
    times, grids, masses = [0.0], [init.with_values(init.values.copy())], [mass0]
    steps = halvings = expansions = 0
    t = 0.0
    for t_out in cfg.output_times[1:]:
        while t < t_out:
            t_next = min(t_out, t + cfg.check_interval)
            rho = np.ascontiguousarray(grid.values)
            if grid.geometry == "radial":
                status, t_reached, n, h = backend.advance_radial(
                    rho, grid.edges[0], grid.dim, c_pot, floor, cfg.cfl, t, t_next, kp, cfg.dt_min
                )
            else:
                ex, ey = grid.edges
                xc = 0.5 * (ex[:-1] + ex[1:])
                yc = 0.5 * (ey[:-1] + ey[1:])
                status, t_reached, n, h = backend.advance_cartesian(
                    rho, xc, yc, ex[1] - ex[0], ey[1] - ey[0], c_pot, floor, cfg.cfl, t, t_next, kp, cfg.dt_min
                )
            grid.values = rho
            steps += int(n)
            halvings += int(h)
            _raise_status(status, t_reached)
            t = t_next
            if grid.geometry == "radial":
                flux = _boundary_flux_radial(rho, grid.edges[0], grid.dim, c_pot, floor, kp, backend)
            else:
                flux = _boundary_flux_cartesian(rho, *grid.edges, c_pot, floor, kp, backend)
            if flux > BOUNDARY_FLUX_TOL:
                if expansions >= cfg.max_expansions:
                    log.warning("boundary flux %.3g at t=%.4g but expansion budget is spent", flux, t)
                else:
                    grid = _expand(grid)
                    expansions += 1
                    log.info("expanded domain at t=%.4g (boundary flux %.3g)", t, flux)
        times.append(t_out)
        grids.append(grid.with_values(grid.values.copy()))
        masses.append(grid.mass())
    name = "compiled" if backend is kernels.compiled_backend else "python"
    return FlowTrajectory(times, grids, masses, steps, halvings, expansions, name, cfg)


def trajectory_moments(traj: FlowTrajectory) -> np.ndarray:
    """Empirical covariance matrix at each snapshot, shape ``(n_t, d, d)``."""
    return np.array([g.covariance() for g in traj.grids])


def support_radius(grid: DensityGrid, floor: float = 0.0) -> float:
    """Outer edge of the last radial cell holding more than ``floor``."""
    if grid.geometry != "radial":
        raise DomainError("support radius is defined for radial grids")
    occ = np.nonzero(grid.values > floor)[0]
    return float(grid.edges[0][occ[-1] + 1]) if occ.size else 0.0


# --------------------------------------------------------------------------
# covariance ODE


class _CoefficientTable:
    """``c(V)`` as a monotone interpolant in ``log det V``.

    ``c`` depends on ``V`` only through ``det V``, so one table serves every
    covariance, including the scalar multiples ``a^2 I``.  Nodes are integer
    multiples of ``step`` (so ``log det = 0`` is a node and the identity is a
    fixed point exactly) and are added on demand.
    """

    def __init__(self, phi: PhiSpec, d: int, step: float = 0.05):
        self.phi = phi
        self.d = d
        self.step = step
        self.values: dict[int, float] = {}
        self._interp = None
        self._range = (0, 0)

    def _node(self, k: int) -> float:
        if k not in self.values:
            self.values[k] = _constants(self.phi, self.d, math.exp(k * self.step), "N").c
        return self.values[k]

    def _ensure(self, logdet: float):
        k_lo = math.floor(logdet / self.step) - 2
        k_hi = math.ceil(logdet / self.step) + 2
        lo, hi = self._range
        if self._interp is not None and lo <= k_lo and k_hi <= hi:
            return
        lo = min(lo, k_lo, -2)
        hi = max(hi, k_hi, 2)
        # grow in generous chunks to limit rebuilds
        lo -= 8 if lo < self._range[0] else 0
        hi += 8 if hi > self._range[1] else 0
        ks = np.arange(lo, hi + 1)
        vals = np.array([self._node(int(k)) for k in ks])
        self._interp = PchipInterpolator(ks * self.step, vals, extrapolate=False)
        self._range = (lo, hi)

    def __call__(self, logdet: float) -> float:
        self._ensure(logdet)
        k = logdet / self.step
        if k == round(k):
            return self._node(int(round(k)))
        return float(self._interp(logdet))


def moment_ode_evolve(
    phi: PhiSpec,
    d: int,
    V0,
    t_end: float,
    output_times: Sequence[float] | None = None,
    v0=None,
    exact: bool = False,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> MomentTrajectory:
    """Integrate ``dV/dt = 4 A_t V_t`` with ``A_t = c(V_t) V_t^-1 - c_I I``.

    ``exact=True`` re-solves the normalization at every right-hand-side
    evaluation instead of interpolating the memoized table.  The mean obeys
    ``dv/dt = -2 c_I v``.
    """
    V0 = np.array(V0, dtype=float)
    if V0.shape != (d, d):
        raise DomainError(f"V0 must be {d}x{d}")
    if np.max(np.abs(V0 - V0.T)) > 1e-10 * max(1.0, np.max(np.abs(V0))):
        raise DomainError("V0 must be symmetric")
    V0 = 0.5 * (V0 + V0.T)
    if np.linalg.eigvalsh(V0).min() <= 0:
        raise DomainError("V0 must be positive definite")
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    c_I = identity_coefficient(phi, d)
    table = None if exact else _CoefficientTable(phi, d)
    current_t = [0.0]

    def coeff(V):
        sign, logdet = np.linalg.slogdet(V)
        if sign <= 0:
            raise DegenerateError(f"covariance lost positive definiteness at t={current_t[0]:.6g}")
        try:
            if table is None:
                return _constants(phi, d, math.exp(logdet), "N").c
            return table(logdet)
        except PhiExpError as exc:
            raise type(exc)(f"normalization failed at t={current_t[0]:.6g}: {exc}") from exc

    eye = np.eye(d)

    def rhs(t, y):
        current_t[0] = t
        V = y.reshape(d, d)
        V = 0.5 * (V + V.T)
        return (4.0 * (coeff(V) * eye - c_I * V)).ravel()

    times = np.array(sorted(set([0.0, float(t_end)] + [float(t) for t in (output_times or [])])))
    if times[0] < 0 or times[-1] > t_end:
        raise DomainError("output times must lie in [0, t_end]")
    sol = solve_ivp(rhs, (0.0, float(t_end)), V0.ravel(), method="RK45", t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericError(f"covariance ODE failed near t={current_t[0]:.6g}: {sol.message}")
    covs = np.array([0.5 * (Y.reshape(d, d) + Y.reshape(d, d).T) for Y in sol.y.T])
    drifts = []
    for V in covs:
        w, Q = np.linalg.eigh(V)
        if w.min() <= 0:
            raise DegenerateError("covariance lost positive definiteness along the trajectory")
        c = coeff(V)
        A = (Q * (c / w - c_I)) @ Q.T
        drifts.append(0.5 * (A + A.T))
    v0 = np.zeros(d) if v0 is None else np.asarray(v0, dtype=float)
    means = np.array([v0 * math.exp(-2.0 * c_I * t) for t in times])
    return MomentTrajectory(times, covs, np.array(drifts), means, c_I)


# --------------------------------------------------------------------------


def stability_diagnostic(traj: FlowTrajectory, phi: PhiSpec | None = None, family: str = "N") -> list:
    """Moment-matched family fit and its L1 residual at every snapshot.

    A fit that fails (degenerate covariance, unsolvable normalization) is
    recorded with ``l1_residual=None`` instead of aborting the series.
    """
    phi = phi or traj.config.phi
    out = []
    for t, grid in zip(traj.times, traj.grids):
        try:
            fit: FitResult = fit_family(grid, phi, family)
        except (PhiExpError, np.linalg.LinAlgError) as exc:
            out.append(StabilityPoint(float(t), None, None, note=str(exc)))
            continue
        out.append(StabilityPoint(float(t), fit.l1_residual, fit.fitted_cov))
    return out
