"""Double-exponential quadrature rules.

``tanh_sinh`` integrates over a finite interval and tolerates integrable
algebraic singularities at either end; ``exp_sinh`` integrates over a
half-line and tolerates algebraic decay.  Both refine by halving the step and
reuse every previously computed node.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError

# Nodes reach ~1e-300 of the interval length from either end.
_TS_YMAX = 6.1
_ES_YMAX = 6.7


def _refine(nodes_weights, f, h0, tol, min_level, max_level):
    """Trapezoid sums over y with step h0 / 2**k until successive sums agree."""
    ys = np.arange(-math.floor(nodes_weights.ymax / h0), math.floor(nodes_weights.ymax / h0) + 1) * h0
    total = _sum(nodes_weights, f, ys)
    estimate = h0 * total
    err = math.inf
    for level in range(1, max_level + 1):
        h = h0 / 2**level
        n = math.floor(nodes_weights.ymax / h)
        odd = np.arange(-n, n + 1)
        odd = odd[odd % 2 != 0] * h
        total += _sum(nodes_weights, f, odd)
        new = h * total
        err = abs(new - estimate)
        estimate = new
        if level >= min_level and err <= tol * abs(estimate):
            return estimate, err
        if level >= min_level and estimate == 0.0:
            return estimate, err
    raise NumericError(
        f"double-exponential quadrature did not converge (relative change {err / max(abs(estimate), 1e-300):.3g})",
        estimate=err,
    )


def _sum(rule, f, ys):
    x, w = rule.map(ys)
    keep = w > 0
    if not np.any(keep):
        return 0.0
    vals = np.asarray(f(x[keep]), dtype=float)
    terms = w[keep] * vals
    if not np.all(np.isfinite(terms)):
        raise NumericError("non-finite integrand value in quadrature")
    return float(np.sum(terms))


class _TanhSinh:
    ymax = _TS_YMAX

    def __init__(self, a, b):
        self.a, self.b = float(a), float(b)

    def map(self, y):
        span = self.b - self.a
        u = 0.5 * math.pi * np.sinh(y)
        with np.errstate(over="ignore"):
            left = span / (1.0 + np.exp(-2.0 * u))
            right = span / (1.0 + np.exp(2.0 * u))
            w = span * 0.5 * math.pi * np.cosh(y) / (2.0 * np.cosh(u) ** 2)
        x = np.where(u < 0, self.a + left, self.b - right)
        w = np.where(np.isfinite(w), w, 0.0)
        # drop nodes that rounded onto an endpoint
        w = np.where((x <= self.a) | (x >= self.b), 0.0, w)
        return x, w


class _ExpSinh:
    ymax = _ES_YMAX

    def __init__(self, a):
        self.a = float(a)

    def map(self, y):
        with np.errstate(over="ignore"):
            e = np.exp(0.5 * math.pi * np.sinh(y))
            w = 0.5 * math.pi * np.cosh(y) * e
        x = self.a + e
        w = np.where(np.isfinite(w) & np.isfinite(x) & (x > self.a), w, 0.0)
        return x, w


def tanh_sinh(f, a, b, tol=1e-13, min_level=3, max_level=11):
    """``(integral_a^b f, error estimate)`` for a vectorized ``f``."""
    if not b > a:
        if b == a:
            return 0.0, 0.0
        raise ValueError("tanh_sinh needs a < b")
    return _refine(_TanhSinh(a, b), f, 0.5, tol, min_level, max_level)


def exp_sinh(f, a, tol=1e-13, min_level=3, max_level=11):
    """``(integral_a^inf f, error estimate)`` for a vectorized ``f``."""
    return _refine(_ExpSinh(a), f, 0.5, tol, min_level, max_level)
