# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled flow kernels.

Same functions, signatures and return conventions as ``_flow_kernels_py``;
the time loop runs without touching Python objects.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, expm1, floor as cfloor, fabs, INFINITY

cnp.import_array()

OK, STIFF, NEGATIVE, MAX_STEPS = 0, 1, 2, 3
DEF MAX_HALVINGS = 30


cdef struct Gen:
    int mode
    double q
    double alpha
    double u0
    double du
    int n
    const double* g
    const double* h
    double kappa_lo
    double kappa_hi


cdef Gen _gen(tuple kp, const double[::1] g, const double[::1] h):
    cdef Gen G
    G.mode = kp[0]
    G.q = kp[1]
    G.alpha = kp[2]
    G.u0 = kp[3]
    G.du = kp[4]
    G.n = g.shape[0]
    G.g = &g[0]
    G.h = &h[0]
    G.kappa_lo = kp[7]
    G.kappa_hi = kp[8]
    return G


cdef inline double _ln(double x, Gen* G) nogil:
    cdef double u = log(x), s, s2, s3, off, u1
    cdef int k
    if G.mode == 0:
        if G.q == 1.0:
            return u / G.alpha
        return expm1((1.0 - G.q) * u) / ((1.0 - G.q) * G.alpha)
    u1 = G.u0 + G.du * (G.n - 1)
    if u < G.u0:
        off = u - G.u0
        if G.kappa_lo == 0.0:
            return (G.g[0] + G.h[0] * off) / G.alpha
        return (G.g[0] + G.h[0] * expm1(G.kappa_lo * off) / G.kappa_lo) / G.alpha
    if u > u1:
        off = u - u1
        if G.kappa_hi == 0.0:
            return (G.g[G.n - 1] + G.h[G.n - 1] * off) / G.alpha
        return (G.g[G.n - 1] + G.h[G.n - 1] * expm1(G.kappa_hi * off) / G.kappa_hi) / G.alpha
    s = (u - G.u0) / G.du
    k = <int>cfloor(s)
    if k < 0:
        k = 0
    elif k > G.n - 2:
        k = G.n - 2
    s = s - k
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * G.g[k] + (s3 - 2 * s2 + s) * G.du * G.h[k]
            + (-2 * s3 + 3 * s2) * G.g[k + 1] + (s3 - s2) * G.du * G.h[k + 1]) / G.alpha


cdef inline double _diff(double x, Gen* G) nogil:
    cdef double u = log(x), s, w, u1
    cdef int k
    if G.mode == 0:
        return exp((1.0 - G.q) * u) / G.alpha
    u1 = G.u0 + G.du * (G.n - 1)
    if u < G.u0:
        return G.h[0] * exp(G.kappa_lo * (u - G.u0)) / G.alpha
    if u > u1:
        return G.h[G.n - 1] * exp(G.kappa_hi * (u - u1)) / G.alpha
    s = (u - G.u0) / G.du
    k = <int>cfloor(s)
    if k > G.n - 2:
        k = G.n - 2
    w = s - k
    return exp((1.0 - w) * log(G.h[k]) + w * log(G.h[k + 1])) / G.alpha


cdef inline double _minmod(double a, double b) nogil:
    if a * b <= 0:
        return 0.0
    return a if fabs(a) < fabs(b) else b


def _tables(kp):
    g = np.ascontiguousarray(kp[5], dtype=float)
    h = np.ascontiguousarray(kp[6], dtype=float)
    if g.size < 2:
        g = np.zeros(2)
        h = np.ones(2)
    return g, h


def ln_phi(x, mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi):
    kp = (mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi)
    gt, ht = _tables(kp)
    cdef Gen G = _gen(kp, gt, ht)
    xa = np.ascontiguousarray(x, dtype=float)
    out = np.empty_like(xa)
    cdef double[::1] xv = xa.reshape(-1), ov = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _ln(xv[i], &G)
    return out


def diffusivity(x, mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi):
    kp = (mode, q, alpha, u0, du, g, h, kappa_lo, kappa_hi)
    gt, ht = _tables(kp)
    cdef Gen G = _gen(kp, gt, ht)
    xa = np.ascontiguousarray(x, dtype=float)
    out = np.empty_like(xa)
    cdef double[::1] xv = xa.reshape(-1), ov = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _diff(xv[i], &G)
    return out


# --------------------------------------------------------------------------
# radial geometry


def radial_geometry(edges, dim):
    e = np.asarray(edges, dtype=float)
    r_c = 0.5 * (e[:-1] + e[1:])
    area = e ** (dim - 1)
    vol = (e[1:] ** dim - e[:-1] ** dim) / dim
    return r_c, area, vol


cdef void _rhs_radial(const double[::1] rho, const double[::1] r_c, const double[::1] area,
                      const double[::1] vol, double dr, double c_pot, double floor_,
                      Gen* G, double[::1] mu, double[::1] u, double[::1] flux,
                      double[::1] out) nogil:
    cdef Py_ssize_t n = rho.shape[0], i
    cdef double sl, east, west, x
    for i in range(n):
        x = rho[i] if rho[i] > floor_ else floor_
        mu[i] = _ln(x, G) + c_pot * r_c[i] * r_c[i]
    for i in range(n - 1):
        u[i] = -(mu[i + 1] - mu[i]) / dr
    flux[0] = 0.0
    flux[n] = 0.0
    for i in range(1, n):
        # face between cells i-1 and i
        if u[i - 1] > 0:
            if i - 1 >= 1:
                sl = _minmod(rho[i] - rho[i - 1], rho[i - 1] - rho[i - 2])
            else:
                sl = 0.0
            east = rho[i - 1] + 0.5 * sl
            flux[i] = area[i] * u[i - 1] * east
        else:
            if i <= n - 2:
                sl = _minmod(rho[i + 1] - rho[i], rho[i] - rho[i - 1])
            else:
                sl = 0.0
            west = rho[i] - 0.5 * sl
            flux[i] = area[i] * u[i - 1] * west
    for i in range(n):
        out[i] = -(flux[i + 1] - flux[i]) / vol[i]


cdef double _dt_radial(const double[::1] rho, const double[::1] u, const double[::1] area,
                       const double[::1] vol, double dr, double floor_, double cfl, Gen* G,
                       double[::1] D) nogil:
    cdef Py_ssize_t n = rho.shape[0], i
    cdef double dt = INFINITY, outflow, ul, ur, Dl, cand
    for i in range(n):
        D[i] = _diff(rho[i], G) if rho[i] > floor_ else 0.0
    for i in range(n):
        ul = u[i - 1] if i > 0 else 0.0
        ur = u[i] if i < n - 1 else 0.0
        outflow = 0.0
        if ur > 0:
            outflow += area[i + 1] * ur
        if ul < 0:
            outflow -= area[i] * ul
        if outflow > 0:
            cand = vol[i] / (2.0 * outflow)
            if cand < dt:
                dt = cand
        Dl = D[i]
        if i > 0 and D[i - 1] > Dl:
            Dl = D[i - 1]
        if i < n - 1 and D[i + 1] > Dl:
            Dl = D[i + 1]
        if Dl > 0:
            cand = dr * vol[i] / ((area[i] + area[i + 1]) * Dl)
            if cand < dt:
                dt = cand
    return cfl * dt


def rhs_radial(rho, edges, dim, c_pot, floor, kp, out=None):
    """Time derivative of the cell averages and the interior face velocities."""
    r_c, area, vol = radial_geometry(edges, dim)
    e = np.asarray(edges, dtype=float)
    gt, ht = _tables(kp)
    cdef Gen G = _gen(tuple(kp), gt, ht)
    rho_a = np.ascontiguousarray(rho, dtype=float)
    n = rho_a.size
    mu = np.empty(n)
    u = np.empty(n - 1)
    flux = np.empty(n + 1)
    res = np.empty(n) if out is None else out
    _rhs_radial(rho_a, r_c, area, vol, e[1] - e[0], c_pot, floor, &G, mu, u, flux, res)
    return res, u


def advance_radial(double[::1] rho, edges, int dim, double c_pot, double floor, double cfl,
                   double t0, double t1, kp, double dt_min=1e-13, long max_steps=10**9):
    """Advance ``rho`` in place from ``t0`` to ``t1``.

    Returns ``(status, t, steps, halvings)``.
    """
    r_c_a, area_a, vol_a = radial_geometry(edges, dim)
    e = np.asarray(edges, dtype=float)
    gt, ht = _tables(kp)
    cdef Gen G = _gen(tuple(kp), gt, ht)
    cdef Py_ssize_t n = rho.shape[0], i
    cdef double[::1] r_c = r_c_a, area = area_a, vol = vol_a
    cdef double[::1] mu = np.empty(n), u = np.empty(max(n - 1, 1)), flux = np.empty(n + 1)
    cdef double[::1] L0 = np.empty(n), L1 = np.empty(n), rho1 = np.empty(n), rho2 = np.empty(n)
    cdef double[::1] D = np.empty(n)
    cdef double dr = e[1] - e[0], t = t0, dt
    cdef long steps = 0, halvings = 0
    cdef int tries, ok
    with nogil:
        while t < t1:
            if steps >= max_steps:
                with gil:
                    return MAX_STEPS, t, steps, halvings
            _rhs_radial(rho, r_c, area, vol, dr, c_pot, floor, &G, mu, u, flux, L0)
            dt = _dt_radial(rho, u, area, vol, dr, floor, cfl, &G, D)
            if t1 - t < dt:
                dt = t1 - t
            ok = 0
            for tries in range(MAX_HALVINGS):
                if dt < dt_min and t + dt < t1:
                    with gil:
                        return STIFF, t, steps, halvings
                ok = 1
                for i in range(n):
                    rho1[i] = rho[i] + dt * L0[i]
                    if rho1[i] < 0:
                        ok = 0
                if ok:
                    _rhs_radial(rho1, r_c, area, vol, dr, c_pot, floor, &G, mu, u, flux, L1)
                    for i in range(n):
                        rho2[i] = 0.5 * rho[i] + 0.5 * (rho1[i] + dt * L1[i])
                        if rho2[i] < 0:
                            ok = 0
                if ok:
                    break
                dt *= 0.5
                halvings += 1
            if not ok:
                with gil:
                    return NEGATIVE, t, steps, halvings
            for i in range(n):
                rho[i] = rho2[i]
            if dt == t1 - t:
                t = t1
            else:
                t = t + dt
            steps += 1
    return OK, t, steps, halvings


# --------------------------------------------------------------------------
# two-dimensional Cartesian geometry (values indexed [iy, ix])


cdef void _rhs_cart(const double[:, ::1] rho, const double[::1] xc, const double[::1] yc,
                    double hx, double hy, double c_pot, double floor_, Gen* G,
                    double[:, ::1] mu, double[:, ::1] ux, double[:, ::1] uy,
                    double[:, ::1] out) nogil:
    cdef Py_ssize_t ny = rho.shape[0], nx = rho.shape[1], i, j
    cdef double x, sl, f
    for j in range(ny):
        for i in range(nx):
            x = rho[j, i] if rho[j, i] > floor_ else floor_
            mu[j, i] = _ln(x, G) + c_pot * (xc[i] * xc[i] + yc[j] * yc[j])
            out[j, i] = 0.0
    for j in range(ny):
        for i in range(nx - 1):
            ux[j, i] = -(mu[j, i + 1] - mu[j, i]) / hx
            if ux[j, i] > 0:
                sl = _minmod(rho[j, i + 1] - rho[j, i], rho[j, i] - rho[j, i - 1]) if i >= 1 else 0.0
                f = ux[j, i] * (rho[j, i] + 0.5 * sl)
            else:
                sl = _minmod(rho[j, i + 2] - rho[j, i + 1], rho[j, i + 1] - rho[j, i]) if i + 1 <= nx - 2 else 0.0
                f = ux[j, i] * (rho[j, i + 1] - 0.5 * sl)
            out[j, i] -= f / hx
            out[j, i + 1] += f / hx
    for j in range(ny - 1):
        for i in range(nx):
            uy[j, i] = -(mu[j + 1, i] - mu[j, i]) / hy
            if uy[j, i] > 0:
                sl = _minmod(rho[j + 1, i] - rho[j, i], rho[j, i] - rho[j - 1, i]) if j >= 1 else 0.0
                f = uy[j, i] * (rho[j, i] + 0.5 * sl)
            else:
                sl = _minmod(rho[j + 2, i] - rho[j + 1, i], rho[j + 1, i] - rho[j, i]) if j + 1 <= ny - 2 else 0.0
                f = uy[j, i] * (rho[j + 1, i] - 0.5 * sl)
            out[j, i] -= f / hy
            out[j + 1, i] += f / hy


cdef double _dt_cart(const double[:, ::1] rho, const double[:, ::1] ux, const double[:, ::1] uy,
                     double hx, double hy, double floor_, double cfl, Gen* G) nogil:
    cdef Py_ssize_t ny = rho.shape[0], nx = rho.shape[1], i, j
    cdef double omax = 0.0, Dmax = 0.0, o, Dv, dt = INFINITY
    for j in range(ny):
        for i in range(nx):
            o = 0.0
            if i < nx - 1 and ux[j, i] > 0:
                o += ux[j, i] / hx
            if i > 0 and ux[j, i - 1] < 0:
                o -= ux[j, i - 1] / hx
            if j < ny - 1 and uy[j, i] > 0:
                o += uy[j, i] / hy
            if j > 0 and uy[j - 1, i] < 0:
                o -= uy[j - 1, i] / hy
            if o > omax:
                omax = o
            if rho[j, i] > floor_:
                Dv = _diff(rho[j, i], G)
                if Dv > Dmax:
                    Dmax = Dv
    if omax > 0:
        dt = 1.0 / (2.0 * omax)
    if Dmax > 0 and 1.0 / (2.0 * Dmax * (1.0 / (hx * hx) + 1.0 / (hy * hy))) < dt:
        dt = 1.0 / (2.0 * Dmax * (1.0 / (hx * hx) + 1.0 / (hy * hy)))
    return cfl * dt


def rhs_cartesian(rho, x_c, y_c, hx, hy, c_pot, floor, kp):
    gt, ht = _tables(kp)
    cdef Gen G = _gen(tuple(kp), gt, ht)
    r = np.ascontiguousarray(rho, dtype=float)
    ny, nx = r.shape
    mu = np.empty((ny, nx))
    ux = np.zeros((ny, max(nx - 1, 1)))
    uy = np.zeros((max(ny - 1, 1), nx))
    out = np.empty((ny, nx))
    _rhs_cart(r, np.ascontiguousarray(x_c, dtype=float), np.ascontiguousarray(y_c, dtype=float),
              hx, hy, c_pot, floor, &G, mu, ux, uy, out)
    return out, ux[:, : nx - 1], uy[: ny - 1, :]


def advance_cartesian(double[:, ::1] rho, x_c, y_c, double hx, double hy, double c_pot, double floor,
                      double cfl, double t0, double t1, kp, double dt_min=1e-13, long max_steps=10**9):
    gt, ht = _tables(kp)
    cdef Gen G = _gen(tuple(kp), gt, ht)
    cdef Py_ssize_t ny = rho.shape[0], nx = rho.shape[1], i, j
    cdef double[::1] xc = np.ascontiguousarray(x_c, dtype=float), yc = np.ascontiguousarray(y_c, dtype=float)
    cdef double[:, ::1] mu = np.empty((ny, nx)), ux = np.zeros((ny, nx)), uy = np.zeros((ny, nx))
    cdef double[:, ::1] L0 = np.empty((ny, nx)), L1 = np.empty((ny, nx))
    cdef double[:, ::1] rho1 = np.empty((ny, nx)), rho2 = np.empty((ny, nx))
    cdef double t = t0, dt
    cdef long steps = 0, halvings = 0
    cdef int tries, ok
    with nogil:
        while t < t1:
            if steps >= max_steps:
                with gil:
                    return MAX_STEPS, t, steps, halvings
            _rhs_cart(rho, xc, yc, hx, hy, c_pot, floor, &G, mu, ux, uy, L0)
            dt = _dt_cart(rho, ux, uy, hx, hy, floor, cfl, &G)
            if t1 - t < dt:
                dt = t1 - t
            ok = 0
            for tries in range(MAX_HALVINGS):
                if dt < dt_min and t + dt < t1:
                    with gil:
                        return STIFF, t, steps, halvings
                ok = 1
                for j in range(ny):
                    for i in range(nx):
                        rho1[j, i] = rho[j, i] + dt * L0[j, i]
                        if rho1[j, i] < 0:
                            ok = 0
                if ok:
                    _rhs_cart(rho1, xc, yc, hx, hy, c_pot, floor, &G, mu, ux, uy, L1)
                    for j in range(ny):
                        for i in range(nx):
                            rho2[j, i] = 0.5 * rho[j, i] + 0.5 * (rho1[j, i] + dt * L1[j, i])
                            if rho2[j, i] < 0:
                                ok = 0
                if ok:
                    break
                dt *= 0.5
                halvings += 1
            if not ok:
                with gil:
                    return NEGATIVE, t, steps, halvings
            for j in range(ny):
                for i in range(nx):
                    rho[j, i] = rho2[j, i]
            if dt == t1 - t:
                t = t1
            else:
                t = t + dt
            steps += 1
    return OK, t, steps, halvings
