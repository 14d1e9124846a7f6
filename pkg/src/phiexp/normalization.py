"""Normalization constants of phi-exponential densities.

The radial profile of ``exp_phi(lam - c |x - v|_V^2)`` reduces every mass and
moment integral to

    f(p, lam) = integral_0^{exp_phi(lam)} (lam - ln_phi t)^p t / phi(t) dt
              = integral_0^{lam - l_phi} s^p exp_phi(lam - s) ds,

the second form after ``s = lam - ln_phi(t)``.  The pair ``(lam, c)`` making
the density a probability density with covariance ``V`` solves

    F(d/2, lam) = (d pi)^(-d/2) Gamma(d/2) / sqrt(det V),
    c = f(d/2, lam) / (d f((d-2)/2, lam)),

with ``F(p, lam) = f(p-1, lam)^(p+1) / f(p, lam)^p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import BracketError, DomainError, GeneratorError, InputError
from .phi_core import DeformedLogExp, PhiSpec, deformed
from .quadrature import exp_sinh, tanh_sinh

__all__ = ["NormalizationConstants", "f_integral", "big_F", "log_big_F", "solve_constants", "target_log_F"]

QUAD_TOL = 1e-12
SCAN_BUDGET = 200


@dataclass(frozen=True)
class NormalizationConstants:
    lam: float
    c: float
    dim: int
    det_V: float
    family: str  # "N" solves at V, "G" solves at the identity
    residual: float = 0.0
    multiple_crossings: bool = False
    bracket: tuple = ()

    @property
    def solved_det(self) -> float:
        """Determinant the pair was solved at."""
        return 1.0 if self.family == "G" else self.det_V


def _check_p_lam(lx: DeformedLogExp, p, lam):
    if not p > -1 or not p < lx.phi.p_phi():
        raise DomainError(f"p={p} outside (-1, p_phi={lx.phi.p_phi():.6g})")
    lo, hi = lx.bounds()
    if not (lo < lam < hi):
        raise DomainError(f"lambda={lam} outside (l_phi, L_phi) = ({lo}, {hi})")


def f_integral(lx: DeformedLogExp, p: float, lam: float, tol: float = QUAD_TOL) -> float:
    """``f_phi(p, lam)`` by double-exponential quadrature in ``s = lam - ln_phi t``.

    The range is split at ``eps = min(1, (lam - l_phi)/2)``: ``[0, eps]`` carries
    the ``s^p`` endpoint singularity, the remainder runs to ``lam - l_phi``
    (finite for compactly supported profiles) or to infinity.
    """
    p = float(p)
    lam = float(lam)
    _check_p_lam(lx, p, lam)
    lo = lx.lower_bound
    span = lam - lo
    eps = min(1.0, 0.5 * span)

    def integrand(s):
        with np.errstate(divide="ignore", over="ignore"):
            logv = p * np.log(s) + lx.exp_log(lam - s)
            return np.exp(logv)

    head, _ = tanh_sinh(integrand, 0.0, eps, tol=tol)
    if math.isfinite(span):
        tail, _ = tanh_sinh(integrand, eps, span, tol=tol)
    else:
        tail, _ = exp_sinh(integrand, eps, tol=tol)
    return head + tail


def log_big_F(lx: DeformedLogExp, p: float, lam: float) -> float:
    """``log F_phi(p, lam)``; ``p`` in ``(0, p_phi)``."""
    if not p > 0:
        raise DomainError(f"F_phi needs p > 0, got {p}")
    a = f_integral(lx, p - 1.0, lam)
    b = f_integral(lx, p, lam)
    if a <= 0 or b <= 0:
        return -math.inf
    return (p + 1.0) * math.log(a) - p * math.log(b)


def big_F(lx: DeformedLogExp, p: float, lam: float) -> float:
    """``F_phi(p, lam) = f(p-1, lam)^(p+1) / f(p, lam)^p`` evaluated in log space."""
    return math.exp(log_big_F(lx, p, lam))


def target_log_F(d: int, det_V: float) -> float:
    """log of ``(d pi)^(-d/2) Gamma(d/2) / sqrt(det V)``."""
    return -0.5 * d * math.log(d * math.pi) + float(gammaln(0.5 * d)) - 0.5 * math.log(det_V)


def _validate_cov(V, d):
    V = np.asarray(V, dtype=float)
    if V.shape != (d, d):
        raise InputError(f"covariance must be {d}x{d}, got shape {V.shape}")
    if not np.allclose(V, V.T, rtol=0, atol=1e-10 * max(1.0, np.abs(V).max())):
        raise InputError("covariance must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (V + V.T))
    if w.min() <= 0:
        raise InputError("covariance must be positive definite")
    return float(np.prod(w))


def _scan_points(lx: DeformedLogExp):
    """lambda values ``ln_phi(2^k)`` ordered outward from lambda = 0."""
    ks = np.arange(-100, 101)
    u = ks * math.log(2.0)
    lam = np.asarray(lx.ln_log(u), dtype=float)
    lo, hi = lx.bounds()
    ok = (lam > lo) & (lam < hi) & np.isfinite(lam)
    # keep strictly increasing distinct points (values saturate near finite bounds)
    lam = lam[ok]
    keep = np.concatenate([[True], np.diff(lam) > 1e-12 * np.maximum(1.0, np.abs(lam[1:]))])
    return lam[keep]


def solve_constants(
    spec: PhiSpec, d: int, V=None, family: str = "N", lx: DeformedLogExp | None = None, det_V: float | None = None
) -> NormalizationConstants:
    """Solve for ``(lambda, c)`` at covariance ``V`` (identity for family ``G``).

    The equation in lambda is bracketed by scanning ``lambda = ln_phi(2^k)``
    outward from 0 in both directions, then refined with Brent's method.  The
    scan does not assume a unique crossing: if more than one sign change is
    seen within the evaluated points, the lowest one is returned and flagged.
    """
    if d < 2:
        raise DomainError("dimension must be at least 2")
    if family not in ("N", "G"):
        raise DomainError(f"family must be 'N' or 'G', got {family!r}")
    if not spec.admissible(d):
        raise GeneratorError(
            f"{spec.label} is not admissible in dimension {d}: max exponent {spec.max_delta:.4g} >= {2 / (d + 2):.4g}"
        )
    if det_V is None:
        det_V = 1.0 if V is None else _validate_cov(V, d)
    lx = lx or deformed(spec)
    solve_det = 1.0 if family == "G" else det_V
    target = target_log_F(d, solve_det)
    p = 0.5 * d

    def resid(lam):
        return log_big_F(lx, p, lam) - target

    pts = _scan_points(lx)
    center = int(np.argmin(np.abs(pts)))
    evaluated = {}
    evals = 0

    def value(i):
        nonlocal evals
        if i not in evaluated:
            evals += 1
            evaluated[i] = resid(pts[i])
        return evaluated[i]

    value(center)
    lo_i, hi_i = center, center
    # walk outward until both a negative and a positive value are seen
    while evals < SCAN_BUDGET:
        vals = [evaluated[i] for i in sorted(evaluated)]
        if min(vals) < 0 < max(vals):
            break
        grew = False
        if hi_i + 1 < pts.size and max(vals) <= 0:
            hi_i += 1
            value(hi_i)
            grew = True
        if lo_i - 1 >= 0 and min(vals) >= 0:
            lo_i -= 1
            value(lo_i)
            grew = True
        if not grew:
            break
    # probe a few points past each end of the bracket for further sign changes
    for _ in range(3):
        if evals >= SCAN_BUDGET:
            break
        if hi_i + 1 < pts.size:
            hi_i += 1
            value(hi_i)
        if lo_i - 1 >= 0:
            lo_i -= 1
            value(lo_i)
    idx = sorted(evaluated)
    vals = [evaluated[i] for i in idx]
    crossings = [(idx[j], idx[j + 1]) for j in range(len(idx) - 1) if vals[j] < 0 <= vals[j + 1] or vals[j] > 0 >= vals[j + 1]]
    if not crossings:
        raise BracketError(
            f"no sign change for {spec.label}, d={d} over lambda in [{pts[idx[0]]:.6g}, {pts[idx[-1]]:.6g}] "
            f"after {evals} evaluations",
            scanned=(float(pts[idx[0]]), float(pts[idx[-1]])),
        )
    a_i, b_i = crossings[0]
    a, b = float(pts[a_i]), float(pts[b_i])
    if evaluated[b_i] == 0.0:
        lam = b
    else:
        lam = brentq(resid, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    f_hi = f_integral(lx, p, lam)
    f_lo = f_integral(lx, p - 1.0, lam)
    c = f_hi / (d * f_lo)
    res = abs(math.expm1(resid(lam)))
    return NormalizationConstants(
        lam=float(lam),
        c=float(c),
        dim=int(d),
        det_V=float(det_V),
        family=family,
        residual=float(res),
        multiple_crossings=len(crossings) > 1,
        bracket=(a, b),
    )
