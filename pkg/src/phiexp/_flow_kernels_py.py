"""Pure numpy flow kernels (reference implementation and fallback).

Finite-volume discretization of ``d rho/dt = div(rho grad(ln_phi(rho) + c|x|^2))``
with cell-centered potentials, face velocities ``-grad mu`` and upwinded
minmod-limited face densities; SSP-RK2 (Heun) time stepping.  The compiled
module ``_flow_kernels`` implements the same functions with the same
signatures.

Generator parameters arrive flattened as
``(mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi)``; ``mode == 0`` is the
power closed form, ``mode == 1`` the tabulated Hermite representation.
"""

from __future__ import annotations

import numpy as np

OK, STIFF, NEGATIVE, MAX_STEPS = 0, 1, 2, 3
MAX_HALVINGS = 30


def ln_phi(x, mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi):
    u = np.log(x)
    if mode == 0:
        if q == 1.0:
            return u / alpha
        return np.expm1((1.0 - q) * u) / ((1.0 - q) * alpha)
    n = g.size
    s = (u - u0) / du
    k = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
    s = s - k
    s2 = s * s
    s3 = s2 * s
    val = (
        (2 * s3 - 3 * s2 + 1) * g[k]
        + (s3 - 2 * s2 + s) * du * h[k]
        + (-2 * s3 + 3 * s2) * g[k + 1]
        + (s3 - s2) * du * h[k + 1]
    )
    u1 = u0 + du * (n - 1)
    lo = u < u0
    if np.any(lo):
        off = u[lo] - u0
        val[lo] = g[0] + (h[0] * off if kappa_lo == 0.0 else h[0] * np.expm1(kappa_lo * off) / kappa_lo)
    hi = u > u1
    if np.any(hi):
        off = u[hi] - u1
        val[hi] = g[-1] + (h[-1] * off if kappa_hi == 0.0 else h[-1] * np.expm1(kappa_hi * off) / kappa_hi)
    return val / alpha


def diffusivity(x, mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi):
    """``x / phi(x)``."""
    u = np.log(x)
    if mode == 0:
        return np.exp((1.0 - q) * u) / alpha
    n = g.size
    s = np.clip((u - u0) / du, 0.0, n - 1.0)
    k = np.minimum(np.floor(s).astype(np.int64), n - 2)
    w = s - k
    lh = np.log(h)
    val = np.exp((1.0 - w) * lh[k] + w * lh[k + 1])
    u1 = u0 + du * (n - 1)
    val = np.where(u < u0, h[0] * np.exp(kappa_lo * (u - u0)), val)
    val = np.where(u > u1, h[-1] * np.exp(kappa_hi * (u - u1)), val)
    return val / alpha


def _minmod(a, b):
    return np.where(a * b > 0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


# --------------------------------------------------------------------------
# radial geometry


def radial_geometry(edges, dim):
    r_c = 0.5 * (edges[:-1] + edges[1:])
    area = edges ** (dim - 1)
    vol = (edges[1:] ** dim - edges[:-1] ** dim) / dim
    return r_c, area, vol


def rhs_radial(rho, edges, dim, c_pot, floor, kp, out=None):
    """Time derivative of the cell averages and the interior face velocities."""
    r_c, area, vol = radial_geometry(edges, dim)
    dr = edges[1] - edges[0]
    mu = ln_phi(np.maximum(rho, floor), *kp) + c_pot * r_c * r_c
    u = -(mu[1:] - mu[:-1]) / dr
    diff = rho[1:] - rho[:-1]
    slope = np.zeros_like(rho)
    slope[1:-1] = _minmod(diff[1:], diff[:-1])
    east = rho + 0.5 * slope
    west = rho - 0.5 * slope
    flux = np.zeros(rho.size + 1)
    flux[1:-1] = area[1:-1] * (np.maximum(u, 0.0) * east[:-1] + np.minimum(u, 0.0) * west[1:])
    res = -(flux[1:] - flux[:-1]) / vol
    if out is not None:
        out[:] = res
        return out, u
    return res, u


def _dt_radial(rho, u, edges, dim, floor, cfl, kp):
    r_c, area, vol = radial_geometry(edges, dim)
    dr = edges[1] - edges[0]
    u_full = np.zeros(rho.size + 1)
    u_full[1:-1] = u
    outflow = area[1:] * np.maximum(u_full[1:], 0.0) + area[:-1] * np.maximum(-u_full[:-1], 0.0)
    with np.errstate(divide="ignore"):
        dt_pos = np.min(np.where(outflow > 0, vol / (2.0 * outflow), np.inf))
    occupied = rho > floor
    D = np.where(occupied, diffusivity(np.where(occupied, rho, 1.0), *kp), 0.0)
    Dloc = D.copy()
    Dloc[1:] = np.maximum(Dloc[1:], D[:-1])
    Dloc[:-1] = np.maximum(Dloc[:-1], D[1:])
    with np.errstate(divide="ignore"):
        dt_diff = np.min(np.where(Dloc > 0, dr * vol / ((area[:-1] + area[1:]) * Dloc), np.inf))
    return cfl * min(dt_pos, dt_diff)


def advance_radial(rho, edges, dim, c_pot, floor, cfl, t0, t1, kp, dt_min=1e-13, max_steps=10**9):
    """Advance ``rho`` in place from ``t0`` to ``t1``.

    Returns ``(status, t, steps, halvings)``.
    """
    t = t0
    steps = 0
    halvings = 0
    while t < t1:
        if steps >= max_steps:
            return MAX_STEPS, t, steps, halvings
        L0, u = rhs_radial(rho, edges, dim, c_pot, floor, kp)
        dt = min(_dt_radial(rho, u, edges, dim, floor, cfl, kp), t1 - t)
        for _ in range(MAX_HALVINGS):
            if dt < dt_min and t + dt < t1:
                return STIFF, t, steps, halvings
            rho1 = rho + dt * L0
            if np.all(rho1 >= 0):
                L1, _ = rhs_radial(rho1, edges, dim, c_pot, floor, kp)
                rho2 = 0.5 * rho + 0.5 * (rho1 + dt * L1)
                if np.all(rho2 >= 0):
                    break
            dt *= 0.5
            halvings += 1
        else:
            return NEGATIVE, t, steps, halvings
        rho[:] = rho2
        t = t1 if dt == t1 - t else t + dt
        steps += 1
    return OK, t, steps, halvings


# --------------------------------------------------------------------------
# two-dimensional Cartesian geometry (values indexed [iy, ix])


def rhs_cartesian(rho, x_c, y_c, hx, hy, c_pot, floor, kp):
    mu = ln_phi(np.maximum(rho, floor), *kp) + c_pot * (x_c[None, :] ** 2 + y_c[:, None] ** 2)
    res = np.zeros_like(rho)
    ux = -(mu[:, 1:] - mu[:, :-1]) / hx
    dx = rho[:, 1:] - rho[:, :-1]
    sx = np.zeros_like(rho)
    sx[:, 1:-1] = _minmod(dx[:, 1:], dx[:, :-1])
    fx = np.maximum(ux, 0.0) * (rho + 0.5 * sx)[:, :-1] + np.minimum(ux, 0.0) * (rho - 0.5 * sx)[:, 1:]
    res[:, :-1] -= fx / hx
    res[:, 1:] += fx / hx
    uy = -(mu[1:, :] - mu[:-1, :]) / hy
    dy = rho[1:, :] - rho[:-1, :]
    sy = np.zeros_like(rho)
    sy[1:-1, :] = _minmod(dy[1:, :], dy[:-1, :])
    fy = np.maximum(uy, 0.0) * (rho + 0.5 * sy)[:-1, :] + np.minimum(uy, 0.0) * (rho - 0.5 * sy)[1:, :]
    res[:-1, :] -= fy / hy
    res[1:, :] += fy / hy
    return res, ux, uy


def _dt_cartesian(rho, ux, uy, hx, hy, floor, cfl, kp):
    out = np.zeros_like(rho)
    out[:, :-1] += np.maximum(ux, 0.0) / hx
    out[:, 1:] += np.maximum(-ux, 0.0) / hx
    out[:-1, :] += np.maximum(uy, 0.0) / hy
    out[1:, :] += np.maximum(-uy, 0.0) / hy
    omax = out.max()
    dt_pos = 1.0 / (2.0 * omax) if omax > 0 else np.inf
    occupied = rho > floor
    D = np.where(occupied, diffusivity(np.where(occupied, rho, 1.0), *kp), 0.0)
    Dmax = D.max()
    dt_diff = 1.0 / (2.0 * Dmax * (1.0 / hx**2 + 1.0 / hy**2)) if Dmax > 0 else np.inf
    return cfl * min(dt_pos, dt_diff)


def advance_cartesian(rho, x_c, y_c, hx, hy, c_pot, floor, cfl, t0, t1, kp, dt_min=1e-13, max_steps=10**9):
    t = t0
    steps = 0
    halvings = 0
    while t < t1:
        if steps >= max_steps:
            return MAX_STEPS, t, steps, halvings
        L0, ux, uy = rhs_cartesian(rho, x_c, y_c, hx, hy, c_pot, floor, kp)
        dt = min(_dt_cartesian(rho, ux, uy, hx, hy, floor, cfl, kp), t1 - t)
        for _ in range(MAX_HALVINGS):
            if dt < dt_min and t + dt < t1:
                return STIFF, t, steps, halvings
            rho1 = rho + dt * L0
            if np.all(rho1 >= 0):
                L1, _, _ = rhs_cartesian(rho1, x_c, y_c, hx, hy, c_pot, floor, kp)
                rho2 = 0.5 * rho + 0.5 * (rho1 + dt * L1)
                if np.all(rho2 >= 0):
                    break
            dt *= 0.5
            halvings += 1
        else:
            return NEGATIVE, t, steps, halvings
        rho[:] = rho2
        t = t1 if dt == t1 - t else t + dt
        steps += 1
    return OK, t, steps, halvings
