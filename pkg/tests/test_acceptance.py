"""Acceptance criteria, one test per criterion at its stated tolerance.

Every test records a PASS/FAIL line that the terminal summary prints under
"acceptance criteria".  Run ``python3 tests/test_acceptance.py`` to execute
only this file.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import gamma

import conftest
from conftest import GENERATOR_NAMES, generator, logexp
from phiexp import (
    coincidence_gap,
    deformed,
    exp_phi,
    f_integral,
    ln_phi,
    make_point,
    perturbed_power,
    power,
    pushforward_check,
    scale_phi,
    solve_constants,
    validate_ord,
    verify_moments,
)
from phiexp.evolution import (
    FlowConfig,
    initial_density,
    moment_ode_evolve,
    pde_evolve,
    stability_diagnostic,
    trajectory_moments,
)
from phiexp.transport import GaussianParams, geodesic_point, optimal_matrix, w2_distance

LN2PI = math.log(2 * math.pi)
FLOW_TIMES = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)

# regression baselines frozen from the first run
PERTURBED_MAX_GAP = 0.01828526935349313  # criterion 4, attained at a = 0.5
POWER1_MAX_RESIDUAL = 3.5904e-05  # criterion 8, q = 1 run at 1024 cells
PERTURBED_MAX_RESIDUAL = 5.5639e-04  # criterion 8, perturbed run at 1024 cells


def record(number, title, ok, detail):
    conftest.ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"
    return ok


# -- cached flow runs shared by criteria 8 and 9 -------------------------------------------


_RUNS = {}


def flow_run(phi, cells, cov=4.0):
    key = (phi.label, cells, cov)
    if key not in _RUNS:
        init = initial_density(phi, 2, cov * np.eye(2), cells)
        t0 = time.perf_counter()
        traj = pde_evolve(init, FlowConfig(phi, 2, 2.0, output_times=FLOW_TIMES))
        _RUNS[key] = (traj, time.perf_counter() - t0)
    return _RUNS[key]


def max_residual(traj):
    pts = stability_diagnostic(traj)
    assert all(p.l1_residual is not None for p in pts), [p.note for p in pts]
    k = int(np.argmax([p.l1_residual for p in pts]))
    return pts[k].l1_residual, pts[k].t


# -- criteria ---------------------------------------------------------------------------


def test_criterion_01_gaussian_normalization():
    rows = []
    ok = True
    for d in (2, 3):
        t0 = time.perf_counter()
        nc = solve_constants(power(1.0), d)
        dt = time.perf_counter() - t0
        lam_err = abs(nc.lam + 0.5 * d * LN2PI)
        c_err = abs(nc.c - 0.5)
        ok &= lam_err <= 1e-8 and c_err <= 1e-8 and dt < 1.0
        rows.append(f"d={d} |dlam|={lam_err:.1e} |dc|={c_err:.1e} {dt:.2f}s")
    assert record(1, "Gaussian normalization", ok, "; ".join(rows))


def test_criterion_02_gamma_integral():
    lx = deformed(power(1.0))
    worst = 0.0
    for p in (-0.5, 0.0, 0.5, 1.0, 1.5):
        for lam in (-1.0, 0.0, 1.0):
            exact = math.exp(lam) * gamma(p + 1)
            worst = max(worst, abs(f_integral(lx, p, lam) / exact - 1))
    assert record(2, "Gamma-integral oracle", worst <= 1e-8, f"max rel err {worst:.1e} (tol 1e-8)")


def test_criterion_03_moment_contract():
    t0 = time.perf_counter()
    worst = 0.0
    for q in (0.8, 1.0, 1.2, 1.4):
        rep = verify_moments(make_point(power(q), [1.0, -2.0], np.diag([1.0, 4.0])), 1e-6)
        worst = max(worst, rep.mass_dev, rep.mean_dev, rep.cov_dev)
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 10.0
    assert record(3, "moment contract", ok, f"max deviation {worst:.1e} (tol 1e-6), {dt:.1f}s")


def test_criterion_04_coincidence_dichotomy():
    a_vals = (0.5, 2.0, 4.0)
    power_gap = max(coincidence_gap(power(1.2), power(1.2), 2, a) for a in a_vals)
    pert = perturbed_power(1.0, 0.2)
    pert_gap = max(coincidence_gap(pert, pert, 2, a) for a in a_vals)
    frozen = abs(pert_gap / PERTURBED_MAX_GAP - 1) < 1e-6
    ok = power_gap < 1e-6 and pert_gap > 1e-4 and frozen
    detail = f"power(1.2) {power_gap:.1e} (<1e-6); perturbed {pert_gap:.6f} (>1e-4, frozen {PERTURBED_MAX_GAP:.6f})"
    assert record(4, "coincidence dichotomy", ok, detail)


def test_criterion_05_transport_closed_forms():
    I = np.eye(2)
    p, q = GaussianParams([0, 0], I), GaussianParams([0, 0], 4 * I)
    e1 = abs(w2_distance(p, q) - math.sqrt(2))
    V = np.array([[2.0, 0.3], [0.3, 1.0]])
    v, u = np.array([1.0, -2.0]), np.array([4.0, 2.0])
    e2 = abs(w2_distance(GaussianParams(v, V), GaussianParams(u, V)) - np.linalg.norm(v - u))
    src = make_point(power(1.2), [0, 0], I, "G")
    dst = make_point(power(1.2), [0, 0], 4 * I, "G")
    push = pushforward_check(src, dst, optimal_matrix(I, 4 * I))
    total = w2_distance(p, q)
    e4 = max(abs(w2_distance(p, geodesic_point(p, q, t)) - t * total) for t in (0.25, 0.5, 0.75))
    ok = e1 <= 1e-12 and e2 <= 1e-12 and push < 1e-8 and e4 <= 1e-10
    detail = f"|W2-sqrt2|={e1:.1e}; |W2-|v-u||={e2:.1e}; pushforward {push:.1e}; geodesic speed {e4:.1e}"
    assert record(5, "transport closed forms", ok, detail)


def test_criterion_06_scaling_suite():
    worst = 0.0
    for spec in (power(0.8), power(1.2), perturbed_power(1.0, 0.2)):
        lx = deformed(spec)
        for alpha in (0.5, 3.0):
            sa = scale_phi(spec, alpha)
            lxa = deformed(sa)
            for t in (0.01, 0.5, 2.0, 100.0):
                worst = max(worst, abs(alpha * ln_phi(lxa, t) / ln_phi(lx, t) - 1))
            for p in (0.0, 1.0):
                for lam in (-0.2, 0.0, 0.1):
                    want = alpha ** (-(p + 1)) * f_integral(lx, p, alpha * lam)
                    worst = max(worst, abs(f_integral(lxa, p, lam) / want - 1))
            base = solve_constants(spec, 2, np.diag([1.0, 4.0]))
            scaled = solve_constants(sa, 2, np.diag([1.0, 4.0]))
            worst = max(worst, abs(scaled.lam * alpha / base.lam - 1), abs(scaled.c * alpha / base.c - 1))
    assert record(6, "scaling suite", worst <= 1e-8, f"max rel err {worst:.1e} (tol 1e-8)")


@pytest.mark.slow
def test_criterion_07_gaussian_flow():
    phi = power(1.0)
    init = initial_density(phi, 2, 4 * np.eye(2), 2048)
    t0 = time.perf_counter()
    traj = pde_evolve(init, FlowConfig(phi, 2, 2.0, output_times=(0.5, 1.0, 2.0)))
    dt = time.perf_counter() - t0
    covs = trajectory_moments(traj)
    worst = 0.0
    for t, C in zip(traj.times, covs):
        if t in (0.5, 1.0, 2.0):
            want = 1 + 3 * math.exp(-2 * t)
            worst = max(worst, abs(C[0, 0] / want - 1), abs(C[1, 1] / want - 1))
    drift = traj.mass_drift()
    ok = worst < 1e-2 and drift < 1e-8 and dt < 120.0
    detail = f"max rel moment err {worst:.1e} (<1e-2); mass drift {drift:.1e}; {dt:.1f}s at 2048 cells"
    assert record(7, "Gaussian flow oracle", ok, detail)


@pytest.mark.slow
def test_criterion_08_stability_dichotomy():
    q12, _ = flow_run(power(1.2), 512)
    res12, _ = max_residual(q12)
    base, _ = max_residual(flow_run(power(1.0), 1024)[0])
    pert, t_pert = max_residual(flow_run(perturbed_power(1.0, 0.2), 1024)[0])
    frozen = abs(base / POWER1_MAX_RESIDUAL - 1) < 1e-3 and abs(pert / PERTURBED_MAX_RESIDUAL - 1) < 1e-3
    ok = res12 < 5e-3 and pert > 5 * base and frozen
    detail = (
        f"power(1.2) max residual {res12:.2e} (<5e-3); perturbed {pert:.3e} at t={t_pert} "
        f"vs power(1) baseline {base:.3e}, ratio {pert / base:.1f} (>5)"
    )
    assert record(8, "stability dichotomy", ok, detail)


@pytest.mark.slow
def test_criterion_09_ode_pde_consistency():
    worst = {}
    for q, cells in ((0.8, 512), (1.2, 512)):
        phi = power(q)
        traj, _ = flow_run(phi, cells)
        ode = moment_ode_evolve(phi, 2, 4 * np.eye(2), 2.0, output_times=traj.times[1:])
        pde = trajectory_moments(traj)
        worst[q] = max(np.max(np.abs(P - O)) / np.max(np.abs(O)) for P, O in zip(pde, ode.covariances))
    ok = max(worst.values()) < 2e-2
    detail = "; ".join(f"power({q}) max rel dev {w:.1e}" for q, w in worst.items()) + " (tol 2e-2)"
    assert record(9, "ODE/PDE consistency", ok, detail)


def test_criterion_10_phi_core_properties():
    fails = []
    for name in GENERATOR_NAMES:
        lx, phi = logexp(name), generator(name)
        t = np.logspace(-6, 6, 121)
        rt = np.max(np.abs(exp_phi(lx, ln_phi(lx, t)) - t) / t)
        y = ln_phi(lx, t)
        slopes = np.diff(y) / np.diff(t)
        concave = bool(np.all(np.diff(y) > 0) and np.all(slopes[1:] <= slopes[:-1] * (1 + 1e-9)))
        deriv = 0.0
        for s in np.logspace(-3, 3, 13):
            tau = ln_phi(lx, s)
            h = 1e-5 * s / phi(s)
            fd = (exp_phi(lx, tau + h) - exp_phi(lx, tau - h)) / (2 * h)
            deriv = max(deriv, abs(fd / phi(exp_phi(lx, tau)) - 1))
        rep = validate_ord(phi, 0.5)
        ineq = rep.delta_prime_est <= max(rep.delta_zero_est, 0.0) + 0.02
        if not (rt < 1e-10 and concave and deriv < 1e-6 and ineq):
            fails.append(f"{name}: rt {rt:.1e} concave {concave} deriv {deriv:.1e} exponent inequality {ineq}")
    detail = f"{len(GENERATOR_NAMES)} generators" + ("" if not fails else "; " + "; ".join(fails))
    assert record(10, "phi_core property suites", not fails, detail)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
