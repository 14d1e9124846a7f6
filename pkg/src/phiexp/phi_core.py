"""Generators and the deformed logarithm/exponential pair.

A generator is an increasing, positive function on (0, inf).  It determines

    ln_phi(t) = integral_1^t ds / phi(s)

and its inverse ``exp_phi``, extended by 0 below ``l_phi`` and by +inf above
``L_phi``.  Power generators ``phi(s) = s**q`` have closed forms; every other
generator is tabulated in log coordinates ``u = log t`` on a uniform grid,
where ``d ln_phi / du = t / phi(t)`` is smooth, and interpolated with cubic
Hermite pieces that use this exact derivative.  Outside the grid the
derivative is extended as a pure exponential in ``u`` (a power law in ``t``),
so both tails and the bounds ``l_phi``, ``L_phi`` have closed forms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, GeneratorError, InconclusiveError, MetadataError

__all__ = [
    "PhiSpec",
    "DeformedLogExp",
    "OrdReport",
    "power",
    "perturbed_power",
    "table",
    "table_from_csv",
    "from_config",
    "scale_phi",
    "ord_bound",
    "validate_ord",
    "ln_phi",
    "exp_phi",
    "log_bounds",
    "deformed",
]

# Fit tolerance on declared exponents.
METADATA_TOL = 0.02


# --------------------------------------------------------------------------
# generator functions (value-hashable so tabulations can be cached)


@dataclass(frozen=True)
class _Power:
    q: float

    def __call__(self, s):
        return np.power(s, self.q)


@dataclass(frozen=True)
class _PerturbedPower:
    q: float
    eps: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.power(s, self.q) * np.power(1.0 + s, self.eps)


@dataclass(frozen=True)
class _Table:
    log_s: tuple
    log_phi: tuple

    def __call__(self, s):
        ls = np.log(np.asarray(s, dtype=float))
        xs = np.asarray(self.log_s)
        ys = np.asarray(self.log_phi)
        lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        out = np.interp(ls, xs, ys)
        out = np.where(ls < xs[0], ys[0] + lo_slope * (ls - xs[0]), out)
        out = np.where(ls > xs[-1], ys[-1] + hi_slope * (ls - xs[-1]), out)
        return np.exp(out)


@dataclass(frozen=True)
class PhiSpec:
    """An admissible generator with its growth exponents.

    ``delta_zero`` and ``delta_inf`` are the exponents governing ``phi`` near
    0 and near infinity (``phi(s) ~ s**(1 + delta)``).  ``power_q`` is set for
    the power family and enables the closed forms.  ``scale`` multiplies the
    base function, so ``scale_phi`` never re-tabulates.
    """

    label: str
    func: Callable
    delta_zero: float
    delta_inf: float
    power_q: float | None = None
    scale: float = 1.0
    config: dict = field(default_factory=dict, compare=False, hash=False)

    def __call__(self, s):
        try:
            return self.scale * self.func(s)
        except (ArithmeticError, ValueError, TypeError) as exc:
            raise GeneratorError(f"{self.label}: evaluation failed: {exc}") from exc

    @property
    def max_delta(self) -> float:
        return max(self.delta_zero, self.delta_inf)

    @property
    def vanishes_at_zero(self) -> bool:
        """Whether phi(0+) = 0, the hypothesis of the flow results."""
        return self.delta_zero > -1.0

    def admissible(self, d: int) -> bool:
        return self.max_delta < ord_bound(d)

    def p_phi(self) -> float:
        m = self.max_delta
        return 1.0 / m - 1.0 if m > 0 else math.inf


def power(q: float) -> PhiSpec:
    """``phi(s) = s**q``; ``delta_zero = delta_inf = q - 1``."""
    if not q > 0:
        raise GeneratorError(f"power generator needs q > 0, got {q}")
    q = float(q)
    return PhiSpec(
        label=f"power(q={q:g})",
        func=_Power(q),
        delta_zero=q - 1.0,
        delta_inf=q - 1.0,
        power_q=q,
        config={"kind": "power", "q": q},
    )


def perturbed_power(q: float, eps: float) -> PhiSpec:
    """``phi(s) = s**q * (1 + s)**eps``, a non-power generator."""
    if not q > 0 or not q + eps > 0:
        raise GeneratorError(f"perturbed_power needs q > 0 and q + eps > 0, got {q}, {eps}")
    q, eps = float(q), float(eps)
    return PhiSpec(
        label=f"perturbed_power(q={q:g},eps={eps:g})",
        func=_PerturbedPower(q, eps),
        delta_zero=q - 1.0,
        delta_inf=q - 1.0 + eps,
        config={"kind": "perturbed_power", "q": q, "eps": eps},
    )


def table(s, phi, label: str = "table") -> PhiSpec:
    """Generator interpolated log-log from samples, power-law beyond the ends.

    The declared exponents are the end slopes of the table minus one.
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if s.ndim != 1 or s.shape != phi.shape or s.size < 2:
        raise GeneratorError("table needs two equal-length columns with at least 2 rows")
    if np.any(s <= 0) or np.any(phi <= 0) or not np.all(np.isfinite(phi)):
        raise GeneratorError("table entries must be positive and finite")
    if np.any(np.diff(s) <= 0) or np.any(np.diff(phi) <= 0):
        raise GeneratorError("table columns must be strictly increasing")
    ls, lp = np.log(s), np.log(phi)
    lo = (lp[1] - lp[0]) / (ls[1] - ls[0])
    hi = (lp[-1] - lp[-2]) / (ls[-1] - ls[-2])
    return PhiSpec(
        label=label,
        func=_Table(tuple(ls.tolist()), tuple(lp.tolist())),
        delta_zero=float(lo - 1.0),
        delta_inf=float(hi - 1.0),
        config={"kind": "table"},
    )


def table_from_csv(path) -> PhiSpec:
    """Read a two-column ``s,phi`` CSV (an optional header row is skipped)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise GeneratorError(f"{path}: non-numeric row {row!r}") from None
    if not rows:
        raise GeneratorError(f"{path}: empty table")
    s, phi = zip(*rows)
    spec = table(s, phi, label=f"table({Path(path).name})")
    return replace(spec, config={"kind": "table", "table_path": str(path)})


def from_config(block: dict, base_dir=None) -> PhiSpec:
    """Build a generator from ``{kind, q, eps, table_path, scale}``."""
    kind = block.get("kind")
    if kind == "power":
        spec = power(block["q"])
    elif kind == "perturbed_power":
        spec = perturbed_power(block["q"], block["eps"])
    elif kind == "table":
        path = Path(block["table_path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        spec = table_from_csv(path)
    else:
        raise GeneratorError(f"unknown generator kind {kind!r}")
    scale = float(block.get("scale", 1.0))
    return scale_phi(spec, scale) if scale != 1.0 else spec


def scale_phi(spec: PhiSpec, alpha: float) -> PhiSpec:
    """The generator ``s -> alpha * phi(s)`` with the same exponents."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if alpha == 1.0:
        return spec
    return replace(
        spec,
        label=f"{alpha:g}*{spec.label}",
        scale=spec.scale * alpha,
        config={**spec.config, "scale": spec.scale * alpha},
    )


def ord_bound(d: int) -> float:
    """Exponent bound ``2/(d+2)`` giving finite second moments in dimension d."""
    return 2.0 / (d + 2.0)


# --------------------------------------------------------------------------
# tabulation in log coordinates

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class _Tabulation:
    u0: float
    du: float
    g: np.ndarray  # ln_phi at the nodes (base generator, scale 1)
    h: np.ndarray  # t / phi(t) at the nodes
    kappa_lo: float
    kappa_hi: float

    @property
    def u1(self) -> float:
        return self.u0 + self.du * (self.g.size - 1)


SMOOTH_STEP = 0.01
TABLE_STEP = 0.001


@lru_cache(maxsize=64)
def _tabulate(func, half_width: float, du: float) -> _Tabulation:
    n_half = int(round(half_width / du))
    u = du * np.arange(-n_half, n_half + 1)

    def h_of(w):
        t = np.exp(w)
        with np.errstate(all="raise"):
            try:
                val = t / func(t)
            except FloatingPointError as exc:
                raise GeneratorError(f"generator evaluation failed: {exc}") from exc
        if not np.all(np.isfinite(val)) or np.any(val <= 0):
            raise GeneratorError("generator must be finite and positive on the working interval")
        return val

    h = h_of(u)
    # panel integrals by 8-point Gauss-Legendre
    mid = 0.5 * (u[:-1] + u[1:])
    nodes = mid[:, None] + 0.5 * du * _GL_X[None, :]
    panels = 0.5 * du * (h_of(nodes) * _GL_W[None, :]).sum(axis=1)
    g = np.concatenate([[0.0], np.cumsum(panels)])
    g -= g[n_half]
    g[n_half] = 0.0
    if np.any(np.diff(g) <= 0):
        raise GeneratorError("ln_phi is not strictly increasing on the working interval")
    kappa_lo = (math.log(h[1]) - math.log(h[0])) / du
    kappa_hi = (math.log(h[-1]) - math.log(h[-2])) / du
    if abs(kappa_lo) < 1e-9:
        kappa_lo = 0.0
    if abs(kappa_hi) < 1e-9:
        kappa_hi = 0.0
    g.setflags(write=False)
    h.setflags(write=False)
    return _Tabulation(float(u[0]), du, g, h, kappa_lo, kappa_hi)


def _tail_value(g0, h0, kappa, du_off):
    """ln_phi beyond a grid end where t/phi(t) = h0 * exp(kappa * du_off)."""
    if kappa == 0.0:
        return g0 + h0 * du_off
    return g0 + h0 * np.expm1(kappa * du_off) / kappa


def _tail_inverse(g0, h0, kappa, dtau):
    """Offset in u solving ``_tail_value(...) = g0 + dtau``; nan if unreachable."""
    if kappa == 0.0:
        return dtau / h0
    arg = kappa * dtau / h0
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(arg > -1.0, np.log1p(np.maximum(arg, -1.0)) / kappa, np.nan)


# --------------------------------------------------------------------------


class DeformedLogExp:
    """Numerical ``ln_phi`` / ``exp_phi`` pair for one generator.

    Immutable after construction.  Array arguments are evaluated elementwise.
    """

    def __init__(self, phi: PhiSpec, half_width: float = 40.0, step: float | None = None):
        self.phi = phi
        if step is None:
            # table generators have slope kinks at their nodes; a Hermite piece
            # straddling one has a derivative error of order step * (slope jump)
            step = TABLE_STEP if isinstance(phi.func, _Table) else SMOOTH_STEP
        self.alpha = phi.scale
        q = phi.power_q
        self.closed_form = q is not None
        if self.closed_form:
            self._tab = None
            if q < 1:
                lo, hi = -1.0 / (1.0 - q), math.inf
            elif q > 1:
                lo, hi = -math.inf, 1.0 / (q - 1.0)
            else:
                lo, hi = -math.inf, math.inf
        else:
            _check_monotone(phi)
            tab = _tabulate(phi.func, float(half_width), float(step))
            self._tab = tab
            lo = float(tab.g[0] - tab.h[0] / tab.kappa_lo) if tab.kappa_lo > 0 else -math.inf
            hi = float(tab.g[-1] - tab.h[-1] / tab.kappa_hi) if tab.kappa_hi < 0 else math.inf
        self._base_bounds = (lo, hi)
        self.lower_bound = lo / self.alpha
        self.upper_bound = hi / self.alpha

    def __repr__(self):
        return f"DeformedLogExp({self.phi.label}, l={self.lower_bound:.6g}, L={self.upper_bound:.6g})"

    # -- base (unscaled) evaluations in log coordinates --------------------

    def _ln_base_log(self, u):
        u = np.asarray(u, dtype=float)
        q = self.phi.power_q
        if self.closed_form:
            if q == 1.0:
                return u.copy()
            return np.expm1((1.0 - q) * u) / (1.0 - q)
        tab = self._tab
        g, h, du = tab.g, tab.h, tab.du
        x = (u - tab.u0) / du
        k = np.clip(np.floor(x).astype(np.int64), 0, g.size - 2)
        s = x - k
        s2, s3 = s * s, s * s * s
        val = (
            (2 * s3 - 3 * s2 + 1) * g[k]
            + (s3 - 2 * s2 + s) * du * h[k]
            + (-2 * s3 + 3 * s2) * g[k + 1]
            + (s3 - s2) * du * h[k + 1]
        )
        if np.any(u < tab.u0):
            val = np.where(u < tab.u0, _tail_value(g[0], h[0], tab.kappa_lo, u - tab.u0), val)
        if np.any(u > tab.u1):
            val = np.where(u > tab.u1, _tail_value(g[-1], h[-1], tab.kappa_hi, u - tab.u1), val)
        return val

    def _exp_base_log(self, tau):
        """log exp_phi(tau) for the base generator; -inf / +inf outside (l, L)."""
        tau = np.asarray(tau, dtype=float)
        lo, hi = self._base_bounds
        q = self.phi.power_q
        if self.closed_form:
            if q == 1.0:
                out = tau.copy()
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    out = np.log1p((1.0 - q) * tau) / (1.0 - q)
        else:
            out = self._invert_tab(tau)
        out = np.where(tau <= lo, -np.inf, out)
        out = np.where(tau >= hi, np.inf, out)
        return out

    def _invert_tab(self, tau):
        tab = self._tab
        g, h, du = tab.g, tab.h, tab.du
        out = np.empty_like(tau)
        left = tau < g[0]
        right = tau > g[-1]
        mid = ~(left | right)
        if np.any(left):
            out[left] = tab.u0 + _tail_inverse(g[0], h[0], tab.kappa_lo, tau[left] - g[0])
        if np.any(right):
            out[right] = tab.u1 + _tail_inverse(g[-1], h[-1], tab.kappa_hi, tau[right] - g[-1])
        if np.any(mid):
            out[mid] = self._newton(tau[mid])
        return out

    def _newton(self, tau, max_iter: int = 60):
        """Safeguarded Newton on each Hermite piece; bisection when a step leaves the bracket."""
        tab = self._tab
        g, h, du = tab.g, tab.h, tab.du
        k = np.clip(np.searchsorted(g, tau, side="right") - 1, 0, g.size - 2)
        g0, g1 = g[k], g[k + 1]
        m0, m1 = du * h[k], du * h[k + 1]
        lo = np.zeros_like(tau)
        hi = np.ones_like(tau)
        s = np.clip((tau - g0) / (g1 - g0), 0.0, 1.0)
        for _ in range(max_iter):
            s2, s3 = s * s, s * s * s
            f = (
                (2 * s3 - 3 * s2 + 1) * g0
                + (s3 - 2 * s2 + s) * m0
                + (-2 * s3 + 3 * s2) * g1
                + (s3 - s2) * m1
                - tau
            )
            fp = (6 * s2 - 6 * s) * g0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * g1 + (3 * s2 - 2 * s) * m1
            lo = np.where(f < 0, s, lo)
            hi = np.where(f > 0, s, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = f / fp
            new = s - step
            bad = ~np.isfinite(new) | (new <= lo) | (new >= hi)
            # an exact root (e.g. tau on a node) must not be replaced by the midpoint
            new = np.where(f == 0, s, np.where(bad, 0.5 * (lo + hi), new))
            done = np.abs(new - s) <= 1e-15
            s = new
            if np.all(done):
                return tab.u0 + du * (k + s)
        if np.max(hi - lo) > 1e-12:
            from .errors import NumericError

            raise NumericError("exp_phi inversion did not converge", estimate=float(np.max(hi - lo)))
        return tab.u0 + du * (k + s)

    # -- public evaluations -------------------------------------------------

    def ln_log(self, u):
        """``ln_phi(exp(u))``, usable where ``exp(u)`` under/overflows."""
        return _scalarize(self._ln_base_log(u) / self.alpha)

    def ln(self, t):
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise DomainError("ln_phi needs finite arguments")
        if np.any(t <= 0):
            raise DomainError("ln_phi is defined for t > 0")
        return _scalarize(self._ln_base_log(np.log(t)) / self.alpha)

    def exp_log(self, tau):
        """``log exp_phi(tau)``; -inf below ``l_phi`` and +inf above ``L_phi``."""
        tau = np.asarray(tau, dtype=float)
        return _scalarize(self._exp_base_log(self.alpha * tau))

    def exp(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(np.isnan(tau)):
            raise DomainError("exp_phi argument is nan")
        with np.errstate(over="ignore"):
            return _scalarize(np.exp(self._exp_base_log(self.alpha * tau)))

    def phi_of_exp(self, tau):
        """``phi(exp_phi(tau))``, the derivative of ``exp_phi``."""
        t = np.asarray(self.exp(tau), dtype=float)
        out = np.zeros_like(t)
        pos = (t > 0) & np.isfinite(t)
        out[pos] = self.phi(t[pos])
        out[np.isinf(t)] = np.inf
        return _scalarize(out)

    def t_over_phi_log(self, u):
        """``t / phi(t)`` at ``t = exp(u)`` from the tabulated derivative."""
        u = np.asarray(u, dtype=float)
        if self.closed_form:
            return _scalarize(np.exp((1.0 - self.phi.power_q) * u) / self.alpha)
        tab = self._tab
        x = np.clip((u - tab.u0) / tab.du, 0.0, tab.g.size - 1.0)
        val = np.exp(np.interp(x, np.arange(tab.g.size), np.log(tab.h)))
        val = np.where(u < tab.u0, tab.h[0] * np.exp(tab.kappa_lo * (u - tab.u0)), val)
        val = np.where(u > tab.u1, tab.h[-1] * np.exp(tab.kappa_hi * (u - tab.u1)), val)
        return _scalarize(val / self.alpha)

    def bounds(self):
        return self.lower_bound, self.upper_bound

    def kernel_params(self) -> dict:
        """Flat description consumed by the compiled flow kernels."""
        if self.closed_form:
            return {"mode": 0, "q": float(self.phi.power_q), "alpha": float(self.alpha)}
        tab = self._tab
        return {
            "mode": 1,
            "alpha": float(self.alpha),
            "u0": tab.u0,
            "du": tab.du,
            "g": np.ascontiguousarray(tab.g, dtype=float),
            "h": np.ascontiguousarray(tab.h, dtype=float),
            "kappa_lo": tab.kappa_lo,
            "kappa_hi": tab.kappa_hi,
        }


def _scalarize(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def _check_monotone(phi: PhiSpec):
    s = np.logspace(-6, 6, 241)
    vals = np.asarray(phi(s), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise GeneratorError(f"{phi.label}: generator must be positive and finite")
    if np.any(np.diff(vals) <= 0):
        raise GeneratorError(f"{phi.label}: generator must be strictly increasing")


@lru_cache(maxsize=128)
def deformed(phi: PhiSpec) -> DeformedLogExp:
    """Cached ``DeformedLogExp`` for a generator."""
    return DeformedLogExp(phi)


def ln_phi(lx: DeformedLogExp, t):
    return lx.ln(t)


def exp_phi(lx: DeformedLogExp, tau):
    return lx.exp(tau)


def log_bounds(lx: DeformedLogExp):
    """``(l_phi, L_phi)``.

    For tabulated generators the finiteness of each bound follows from the
    fitted tail exponent; when it contradicts the declared metadata the
    classification is reported as inconclusive with the bracket it implies.
    """
    if lx.closed_form:
        return lx.bounds()
    tab = lx._tab
    a = lx.alpha
    finite_lo = np.isfinite(lx.lower_bound)
    if finite_lo != (lx.phi.delta_zero < 0):
        raise InconclusiveError(
            f"{lx.phi.label}: lower tail exponent {-tab.kappa_lo:.4g} disagrees with "
            f"declared delta_zero={lx.phi.delta_zero:.4g}",
            lower=lx.lower_bound if finite_lo else -math.inf,
            upper=tab.g[0] / a,
        )
    finite_hi = np.isfinite(lx.upper_bound)
    if finite_hi != (lx.phi.delta_inf > 0):
        raise InconclusiveError(
            f"{lx.phi.label}: upper tail exponent {-tab.kappa_hi:.4g} disagrees with "
            f"declared delta_inf={lx.phi.delta_inf:.4g}",
            lower=tab.g[-1] / a,
            upper=lx.upper_bound if finite_hi else math.inf,
        )
    return lx.bounds()


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OrdReport:
    delta_zero_est: float
    delta_inf_est: float
    delta_prime_est: float
    ord_bound: float
    admissible: bool
    p_phi: float

    @property
    def exponent_inequality_holds(self) -> bool:
        return self.delta_prime_est <= max(self.delta_zero_est, 0.0) + METADATA_TOL


def _slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


def validate_ord(spec: PhiSpec, a: float) -> OrdReport:
    """Fit growth exponents, check them against the declared ones, test ``Ord(a)``.

    Exponents of ``phi`` come from least-squares log-log slopes over
    ``[1e-6, 1e-3]`` and ``[1e3, 1e6]``.  The exponent of ``ln_phi`` at 0 is
    fitted from ``log|ln_phi(t)|`` deep in the lower tail, where slowly varying
    (logarithmic) factors contribute only ``O(1/|log t|)``.
    """
    lo = np.logspace(-6, -3, 31)
    hi = np.logspace(3, 6, 31)
    d0 = _slope(np.log(lo), np.log(spec(lo))) - 1.0
    dinf = _slope(np.log(hi), np.log(spec(hi))) - 1.0
    for name, fitted, declared in (("delta_zero", d0, spec.delta_zero), ("delta_inf", dinf, spec.delta_inf)):
        if abs(fitted - declared) > METADATA_TOL:
            raise MetadataError(f"{spec.label}: declared {name}={declared:.4g} but fitted {fitted:.4g}")
    lx = deformed(spec)
    u = np.linspace(-700.0, -700.0 + 3 * math.log(10.0), 31)
    ln_vals = np.abs(np.asarray(lx.ln_log(u)))
    dprime = -_slope(u, np.log(ln_vals))
    return OrdReport(
        delta_zero_est=d0,
        delta_inf_est=dinf,
        delta_prime_est=dprime,
        ord_bound=float(a),
        admissible=spec.max_delta < a,
        p_phi=spec.p_phi(),
    )
