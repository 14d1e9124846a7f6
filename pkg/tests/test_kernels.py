import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import generator
from phiexp import deformed, power, scale_phi
from phiexp import kernels
from phiexp.grids import sphere_area

needs_compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="extension not built")

KERNEL_GENERATORS = ["power(0.8)", "power(1)", "power(1.2)", "perturbed(1,0.2)", "table"]


def kp_for(name, alpha=1.0):
    spec = generator(name)
    if alpha != 1.0:
        spec = scale_phi(spec, alpha)
    return kernels.pack_params(deformed(spec).kernel_params())


def backends():
    out = [kernels.python_backend]
    if kernels.compiled_backend is not None:
        out.append(kernels.compiled_backend)
    return out


def profile_radial(n=200, r_max=6.0, q_support=False):
    edges = np.linspace(0.0, r_max, n + 1)
    r = 0.5 * (edges[:-1] + edges[1:])
    rho = np.exp(-0.5 * r * r) / (2 * np.pi)
    if q_support:
        rho = np.where(r < 3.0, rho, 0.0)
    return edges, rho


@pytest.mark.parametrize("alpha", [1.0, 3.0])
@pytest.mark.parametrize("name", KERNEL_GENERATORS)
@pytest.mark.parametrize("be", backends(), ids=lambda b: b.__name__.split(".")[-1])
def test_kernel_ln_matches_logexp(be, name, alpha):
    spec = generator(name) if alpha == 1.0 else scale_phi(generator(name), alpha)
    lx = deformed(spec)
    x = np.logspace(-14, 6, 301)
    assert np.max(np.abs(be.ln_phi(x, *kp_for(name, alpha)) - lx.ln(x)) / np.maximum(1.0, np.abs(lx.ln(x)))) < 1e-12


@pytest.mark.parametrize("name", KERNEL_GENERATORS)
@pytest.mark.parametrize("be", backends(), ids=lambda b: b.__name__.split(".")[-1])
def test_kernel_diffusivity(be, name):
    spec = generator(name)
    x = np.logspace(-14, 6, 301)
    exact = x / spec(x)
    got = be.diffusivity(x, *kp_for(name))
    # power closed form is exact; tabulated generators interpolate log(t/phi) linearly
    tol = 1e-13 if spec.power_q is not None else 1e-4
    assert np.max(np.abs(got / exact - 1.0)) < tol


@needs_compiled
@pytest.mark.parametrize("name", KERNEL_GENERATORS)
@pytest.mark.parametrize("compact", [False, True])
def test_rhs_radial_parity(name, compact):
    edges, rho = profile_radial(q_support=compact)
    kp = kp_for(name)
    floor = 1e-14 * rho.max()
    a, ua = kernels.python_backend.rhs_radial(rho, edges, 2, 0.4, floor, kp)
    b, ub = kernels.compiled_backend.rhs_radial(rho, edges, 2, 0.4, floor, kp)
    scale = np.max(np.abs(a))
    # libm pow and numpy power differ in the last ulp; the flux sum amplifies that slightly
    assert np.max(np.abs(a - b)) <= 1e-11 * scale
    assert np.max(np.abs(np.asarray(ua) - np.asarray(ub))) <= 1e-11 * np.max(np.abs(ua))


@needs_compiled
@pytest.mark.parametrize("name", ["power(0.8)", "power(1)", "perturbed(1,0.2)"])
def test_rhs_cartesian_parity(name):
    n = 40
    xs = np.linspace(-4, 4, n + 1)
    xc = 0.5 * (xs[:-1] + xs[1:])
    X, Y = np.meshgrid(xc, xc)
    rho = np.exp(-0.5 * (X**2 / 1.5 + Y**2 / 0.7))
    rho /= rho.sum() * (xs[1] - xs[0]) ** 2
    kp = kp_for(name)
    h = xs[1] - xs[0]
    a = kernels.python_backend.rhs_cartesian(rho, xc, xc, h, h, 0.5, 1e-14, kp)
    b = kernels.compiled_backend.rhs_cartesian(rho, xc, xc, h, h, 0.5, 1e-14, kp)
    for x, y in zip(a, b):
        assert np.max(np.abs(np.asarray(x) - np.asarray(y))) <= 1e-12 * max(1.0, np.max(np.abs(x)))


@needs_compiled
@pytest.mark.parametrize("name", ["power(0.8)", "power(1.2)", "table"])
def test_advance_radial_parity(name):
    edges, rho = profile_radial(n=100, r_max=8.0)
    kp = kp_for(name)
    a, b = rho.copy(), rho.copy()
    ra = kernels.python_backend.advance_radial(a, edges, 2, 0.5, 1e-16, 0.4, 0.0, 0.05, kp)
    rb = kernels.compiled_backend.advance_radial(b, edges, 2, 0.5, 1e-16, 0.4, 0.0, 0.05, kp)
    assert ra[0] == rb[0] == kernels.OK
    assert ra[2] == rb[2]
    assert ra[1] == rb[1] == 0.05
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(a)


@needs_compiled
def test_advance_cartesian_parity():
    n = 32
    xs = np.linspace(-4, 4, n + 1)
    xc = 0.5 * (xs[:-1] + xs[1:])
    X, Y = np.meshgrid(xc, xc)
    rho = np.exp(-0.5 * (X**2 + Y**2 / 2.0))
    rho /= rho.sum() * (xs[1] - xs[0]) ** 2
    kp = kp_for("power(1)")
    h = xs[1] - xs[0]
    a, b = rho.copy(), rho.copy()
    ra = kernels.python_backend.advance_cartesian(a, xc, xc, h, h, 0.5, 1e-16, 0.4, 0.0, 0.05, kp)
    rb = kernels.compiled_backend.advance_cartesian(b, xc, xc, h, h, 0.5, 1e-16, 0.4, 0.0, 0.05, kp)
    assert ra[0] == rb[0] == kernels.OK
    assert ra[2] == rb[2]
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(a)


@pytest.mark.parametrize("be", backends(), ids=lambda b: b.__name__.split(".")[-1])
def test_rhs_conserves_mass(be):
    edges, rho = profile_radial(q_support=True)
    res, _ = be.rhs_radial(rho, edges, 3, 0.7, 1e-16, kp_for("power(0.8)"))
    vol = (edges[1:] ** 3 - edges[:-1] ** 3) / 3
    assert abs(np.sum(np.asarray(res) * vol)) < 1e-13 * np.sum(np.abs(np.asarray(res) * vol))


@pytest.mark.parametrize("be", backends(), ids=lambda b: b.__name__.split(".")[-1])
def test_gaussian_is_stationary_for_matching_potential(be):
    # ln rho + |x|^2 / 2 is constant for the standard Gaussian, so only discretization error remains
    edges, rho = profile_radial(n=400, r_max=10.0)
    res, _ = be.rhs_radial(rho, edges, 2, 0.5, 1e-300, kp_for("power(1)"))
    assert np.max(np.abs(res)) < 1e-12


@pytest.mark.parametrize("be", backends(), ids=lambda b: b.__name__.split(".")[-1])
def test_advance_status_codes(be):
    edges, rho = profile_radial(n=50)
    kp = kp_for("power(1)")
    status, t, steps, _ = be.advance_radial(rho.copy(), edges, 2, 0.5, 1e-16, 0.4, 0.0, 1.0, kp, 1e-13, 3)
    assert status == kernels.MAX_STEPS and steps == 3 and t < 1.0
    status, *_ = be.advance_radial(rho.copy(), edges, 2, 0.5, 1e-16, 0.4, 0.0, 1.0, kp, 1.0)
    assert status == kernels.STIFF


def test_negative_status_after_halving_budget(monkeypatch):
    be = kernels.python_backend
    monkeypatch.setattr(be, "MAX_HALVINGS", 0)
    edges, rho = profile_radial(n=50)
    status, *_ = be.advance_radial(rho, edges, 2, 0.5, 1e-16, 0.4, 0.0, 0.1, kp_for("power(1)"))
    assert status == kernels.NEGATIVE


def test_backend_selection():
    assert kernels.get_backend("python") is kernels.python_backend
    assert kernels.get_backend(None) is kernels.backend
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    env = dict(os.environ, PHIEXP_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from phiexp import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@needs_compiled
def test_compiled_is_default():
    assert kernels.BACKEND == "compiled"
    assert kernels.get_backend("compiled") is kernels.compiled_backend


def test_radial_geometry_matches_grid_volumes():
    edges = np.linspace(0.0, 3.0, 31)
    _, area, vol = kernels.python_backend.radial_geometry(edges, 3)
    assert np.allclose(vol * sphere_area(3), 4 / 3 * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3))
    assert area[0] == 0.0
