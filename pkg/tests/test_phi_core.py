import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import GENERATOR_NAMES, generator, logexp
from phiexp import (
    DomainError,
    GeneratorError,
    InconclusiveError,
    MetadataError,
    PhiSpec,
    deformed,
    exp_phi,
    from_config,
    ln_phi,
    log_bounds,
    perturbed_power,
    power,
    scale_phi,
    table,
    table_from_csv,
    validate_ord,
)

log_t = st.floats(min_value=math.log(1e-6), max_value=math.log(1e6))


def quad_ln(phi, t, breaks=()):
    """Independent oracle: adaptive quadrature of 1/phi from 1 to t in log coordinates.

    ``breaks`` are log-abscissae where phi has kinks (table nodes).
    """
    a, b = sorted((0.0, math.log(t)))
    pts = [a, *[x for x in breaks if a < x < b], b]
    total = sum(
        quad(lambda u: math.exp(u) / phi(math.exp(u)), lo, hi, epsabs=0, epsrel=1e-13)[0]
        for lo, hi in zip(pts[:-1], pts[1:])
    )
    return total if t >= 1 else -total


def kinks(name):
    return generator(name).func.log_s if name == "table" else ()


# -- examples ---------------------------------------------------------------


def test_ln_identity_generator():
    lx = deformed(power(1.0))
    assert ln_phi(lx, math.e) == pytest.approx(1.0, abs=1e-15)
    assert ln_phi(lx, 1.0) == 0.0


def test_ln_sqrt_generator_matches_quadrature():
    lx = deformed(power(0.5))
    oracle = quad_ln(power(0.5), 4.0)
    assert oracle == pytest.approx(2.0, rel=1e-12)
    assert ln_phi(lx, 4.0) == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
@pytest.mark.parametrize("t", [1e-3, 0.2, 1.0, 3.0, 250.0])
def test_ln_matches_quadrature_oracle(name, t):
    lx = logexp(name)
    assert ln_phi(lx, t) == pytest.approx(quad_ln(generator(name), t, kinks(name)), rel=1e-9, abs=1e-12)


def test_ln_one_is_exactly_zero():
    for name in GENERATOR_NAMES:
        assert ln_phi(logexp(name), 1.0) == 0.0


def test_exp_examples():
    assert exp_phi(deformed(power(1.0)), 1.0) == pytest.approx(math.e, rel=1e-15)
    assert exp_phi(deformed(power(2.0)), 1.0) == math.inf
    assert exp_phi(deformed(power(0.5)), -2.0) == 0.0
    assert exp_phi(deformed(power(0.5)), -5.0) == 0.0


def test_log_bounds_examples():
    assert log_bounds(deformed(power(1.0))) == (-math.inf, math.inf)
    assert log_bounds(deformed(power(0.5))) == (-2.0, math.inf)
    lo, hi = log_bounds(deformed(power(2.0)))
    assert lo == -math.inf and hi == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_log_bounds_signs(name):
    lo, hi = log_bounds(logexp(name))
    assert lo < 0 < hi


def test_perturbed_upper_bound_matches_quadrature():
    # L = ln_phi(inf); in log coordinates the integrand decays like exp(-0.2 u),
    # so the remainder beyond u = 500 is below 1e-40
    phi = perturbed_power(1.0, 0.2)
    f = lambda u: math.exp(u) / phi(math.exp(u))
    pieces = [(0, 30), (30, 100), (100, 300), (300, 500)]
    oracle = sum(quad(f, a, b, epsabs=0, epsrel=1e-13)[0] for a, b in pieces)
    _, hi = log_bounds(deformed(phi))
    assert hi == pytest.approx(oracle, rel=1e-10)


def test_log_bounds_inconclusive_when_tail_contradicts_metadata():
    base = perturbed_power(1.0, 0.2)
    # the fitted upper tail is convergent, the declared exponent says divergent
    lying = PhiSpec(label="lying", func=base.func, delta_zero=0.0, delta_inf=0.0)
    with pytest.raises(InconclusiveError) as info:
        log_bounds(deformed(lying))
    assert info.value.lower < info.value.upper


def test_scale_examples():
    two = deformed(scale_phi(power(1.0), 2.0))
    assert ln_phi(two, math.e) == pytest.approx(0.5, rel=1e-15)
    spec = power(0.8)
    assert scale_phi(spec, 1.0) is spec
    lo, _ = log_bounds(deformed(scale_phi(power(0.5), 3.0)))
    assert lo == pytest.approx(-2.0 / 3.0, rel=1e-15)


def test_scale_rejects_nonpositive():
    with pytest.raises(DomainError):
        scale_phi(power(1.0), 0.0)


def test_validate_ord_power_q12():
    rep = validate_ord(power(1.2), 0.5)
    assert rep.delta_zero_est == pytest.approx(0.2, abs=1e-9)
    assert rep.delta_inf_est == pytest.approx(0.2, abs=1e-9)
    assert rep.admissible
    assert rep.p_phi == pytest.approx(4.0, rel=1e-12)


def test_validate_ord_identity():
    rep = validate_ord(power(1.0), 0.5)
    assert rep.delta_zero_est == pytest.approx(0.0, abs=1e-12)
    assert rep.p_phi == math.inf
    for d in (1, 2, 3, 10):
        assert power(1.0).admissible(d)


def test_validate_ord_perturbed():
    rep = validate_ord(perturbed_power(1.0, 0.2), 0.5)
    assert rep.delta_zero_est == pytest.approx(0.0, abs=0.02)
    assert rep.delta_inf_est == pytest.approx(0.2, abs=0.02)
    assert rep.admissible
    assert perturbed_power(1.0, 0.2).admissible(2)


def test_validate_ord_inadmissible():
    rep = validate_ord(power(1.6), 0.5)
    assert not rep.admissible
    assert not power(1.6).admissible(2)


def test_validate_ord_metadata_mismatch():
    base = power(1.2)
    wrong = PhiSpec(label="wrong", func=base.func, delta_zero=0.0, delta_inf=0.2)
    with pytest.raises(MetadataError):
        validate_ord(wrong, 0.5)


def test_ln_rejects_bad_arguments():
    lx = deformed(power(1.2))
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(DomainError):
            ln_phi(lx, bad)
    with pytest.raises(DomainError):
        exp_phi(lx, math.nan)


def test_generator_construction_errors(tmp_path):
    with pytest.raises(GeneratorError):
        power(0.0)
    with pytest.raises(GeneratorError):
        perturbed_power(0.5, -0.6)
    with pytest.raises(GeneratorError):
        table([1.0, 2.0], [2.0, 1.0])
    with pytest.raises(GeneratorError):
        table([1.0], [1.0])
    bad = tmp_path / "bad.csv"
    bad.write_text("s,phi\n1,1\nx,y\n")
    with pytest.raises(GeneratorError):
        table_from_csv(bad)
    with pytest.raises(GeneratorError):
        from_config({"kind": "spline"})


def test_generator_evaluation_failure_is_reported():
    def broken(s):
        raise ValueError("boom")

    spec = PhiSpec(label="broken", func=broken, delta_zero=0.0, delta_inf=0.0)
    with pytest.raises(GeneratorError):
        spec(1.0)


def test_from_config_round_trip(table_path):
    spec = from_config({"kind": "table", "table_path": table_path.name}, base_dir=table_path.parent)
    assert spec.delta_zero == pytest.approx(0.05, abs=1e-6)
    assert spec.delta_inf == pytest.approx(0.15, abs=1e-6)
    scaled = from_config({"kind": "power", "q": 1.2, "scale": 3.0})
    assert scaled(2.0) == pytest.approx(3.0 * 2.0**1.2, rel=1e-15)


def test_table_metadata_from_end_slopes(table_path):
    rep = validate_ord(table_from_csv(table_path), 0.5)
    assert rep.delta_zero_est == pytest.approx(0.05, abs=1e-3)
    assert rep.delta_inf_est == pytest.approx(0.15, abs=1e-3)
    assert rep.admissible


# -- properties -------------------------------------------------------------


@pytest.mark.parametrize("name", GENERATOR_NAMES)
@given(u=log_t)
def test_round_trip(name, u):
    lx = logexp(name)
    t = math.exp(u)
    back = exp_phi(lx, ln_phi(lx, t))
    assert abs(back - t) / t < 1e-10


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_round_trip_grid(name):
    lx = logexp(name)
    t = np.logspace(-6, 6, 241)
    back = exp_phi(lx, ln_phi(lx, t))
    assert np.max(np.abs(back - t) / t) < 1e-10


@pytest.mark.parametrize("name", GENERATOR_NAMES)
@given(u=st.floats(min_value=math.log(1e-3), max_value=math.log(1e3)))
def test_derivative_identity(name, u):
    lx = logexp(name)
    phi = generator(name)
    t = math.exp(u)
    tau = ln_phi(lx, t)
    h = 1e-5 * t / phi(t)
    fd = (exp_phi(lx, tau + h) - exp_phi(lx, tau - h)) / (2 * h)
    expected = phi(exp_phi(lx, tau))
    assert fd == pytest.approx(expected, rel=1e-6)


def test_derivative_identity_at_table_nodes():
    # the generator has slope kinks at its nodes, which random sampling rarely hits
    lx, phi = logexp("table"), generator("table")
    for s in np.exp(phi.func.log_s[40:121:4]):
        tau = ln_phi(lx, s)
        h = 1e-5 * s / phi(s)
        fd = (exp_phi(lx, tau + h) - exp_phi(lx, tau - h)) / (2 * h)
        assert fd == pytest.approx(phi(exp_phi(lx, tau)), rel=1e-6)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
@given(
    u1=log_t,
    g1=st.floats(min_value=1e-3, max_value=5.0),
    g2=st.floats(min_value=1e-3, max_value=5.0),
)
def test_concavity(name, u1, g1, g2):
    lx = logexp(name)
    t1, t2, t3 = math.exp(u1), math.exp(u1 + g1), math.exp(u1 + g1 + g2)
    y1, y2, y3 = ln_phi(lx, t1), ln_phi(lx, t2), ln_phi(lx, t3)
    left = (y2 - y1) / (t2 - t1)
    right = (y3 - y2) / (t3 - t2)
    assert y1 < y2 < y3
    assert left >= right * (1 - 1e-9)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
@given(u=log_t, alpha=st.floats(min_value=0.1, max_value=10.0))
def test_scaling_ln(name, u, alpha):
    lx = logexp(name)
    lxa = deformed(scale_phi(generator(name), alpha))
    t = math.exp(u)
    base = ln_phi(lx, t)
    assert ln_phi(lxa, t) * alpha == pytest.approx(base, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
@given(u=log_t, alpha=st.floats(min_value=0.1, max_value=10.0))
def test_scaling_exp(name, u, alpha):
    lx = logexp(name)
    lxa = deformed(scale_phi(generator(name), alpha))
    tau = ln_phi(lx, math.exp(u)) / alpha
    assert exp_phi(lxa, tau) == pytest.approx(exp_phi(lx, alpha * tau), rel=1e-10)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_prime_exponent_inequality(name):
    rep = validate_ord(generator(name), 0.5)
    assert rep.delta_prime_est <= max(rep.delta_zero_est, 0.0) + 0.02
    assert rep.exponent_inequality_holds


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_p_phi_formula(name):
    spec = generator(name)
    m = spec.max_delta
    expected = 1.0 / m - 1.0 if m > 0 else math.inf
    assert spec.p_phi() == expected


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_exp_saturates_outside_bounds(name):
    lx = logexp(name)
    lo, hi = log_bounds(lx)
    if math.isfinite(lo):
        assert exp_phi(lx, lo) == 0.0
        assert exp_phi(lx, lo - 1.0) == 0.0
    if math.isfinite(hi):
        assert exp_phi(lx, hi) == math.inf
    assert exp_phi(lx, 0.0) == pytest.approx(1.0, rel=1e-12)
