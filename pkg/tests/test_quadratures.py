import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levyasym.catalog import S5, identity_models
from levyasym.exprlang import DomainError, parse
from levyasym.levy import LevyMeasure
from levyasym.model import ModelSpec
from levyasym.quadratures import (UnreachableError, a_tilde, adaptive_simpson,
                                  big_A, big_A_many, inner_infimum, integral_fn, inverse_query,
                                  relative_identity_residual, solve_mu)


def _model(g="1", sigma="1", c="0", phi="1", theta="1", **kw):
    nu = LevyMeasure("uniform", cutoff=1.0, low=-1.0, high=1.0, mass=1.0)
    return ModelSpec(g, sigma, c, phi, theta, "u", nu, **kw)


# ---------------------------------------------------------------------------
# integral_fn

@pytest.mark.parametrize("integrand,lower,x,expected", [
    ("1", 0.0, 5.0, 5.0),
    ("1/x^0.5", 1.0, 4.0, 2.0),
    ("x", 0.0, 2.0, 2.0),            # Theta(2) with theta(t) = sqrt(t)
    ("exp(-x)", 0.0, 30.0, 1 - math.exp(-30.0)),
    ("1/(1+x^2)", 0.0, 1e6, math.atan(1e6)),
    ("x^2", 0.0, -3.0, -9.0),
])
def test_integral_closed_forms(integrand, lower, x, expected):
    f = integral_fn(parse(integrand), lower, tol=1e-9)
    assert f.query(x) == pytest.approx(expected, abs=1e-9)


def test_integral_matches_generic_quadrature():
    f = integral_fn(parse("1/x^0.5"), 1.0)
    direct = adaptive_simpson(lambda s: s**-0.5, 1.0, 4.0, 1e-11)
    assert abs(f.query(4.0) - direct) <= 1e-9


def test_divergent_integrand_raises_domain_error():
    # 1/sigma with sigma(r) = r vanishing at 0
    f = integral_fn(parse("1/x"), 1.0)
    with pytest.raises(DomainError):
        f.query(-1.0)


def test_frozen_function_does_not_grow_cache():
    f = integral_fn(parse("1"), 0.0)
    f.query(8.0)
    n = len(f.knots)
    f.freeze()
    assert f.query(1024.0) == pytest.approx(1024.0)
    assert len(f.knots) == n


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1e4), min_size=2, max_size=20))
def test_queries_are_monotone_and_cache_consistent(xs):
    f = integral_fn(parse("(1+x^2)^-0.25"), 0.0)
    xs = sorted(xs)
    vals = [f.query(x) for x in xs]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    again = f.values(np.array(xs))
    assert np.max(np.abs(again - vals)) <= 2e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.5, max_value=1e3))
def test_halving_tolerance_moves_value_by_less_than_previous_tol(x):
    e = parse("1/(1+x)^0.5")
    exact = 2 * (math.sqrt(1 + x) - 1)
    prev = None
    for tol in (1e-5, 5e-6, 2.5e-6, 1.25e-6):
        v = integral_fn(e, 0.0, tol=tol).query(x)
        assert abs(v - exact) <= tol
        if prev is not None:
            assert abs(v - prev[0]) <= prev[1] + tol
        prev = (v, tol)


# ---------------------------------------------------------------------------
# inverse_query

def test_inverse_identity():
    assert inverse_query(integral_fn(parse("1"), 0.0), 7.0) == pytest.approx(7.0, rel=1e-12)


def test_inverse_of_sqrt_integral():
    f = integral_fn(parse("1/x^0.5"), 1.0)
    assert inverse_query(f, 2.0) == pytest.approx(4.0, rel=1e-9)


def test_inverse_unreachable_reports_bound():
    f = integral_fn(parse("1/x^2"), 1.0)
    with pytest.raises(UnreachableError) as exc:
        inverse_query(f, 2.0)
    assert exc.value.sup_estimate == pytest.approx(1.0, abs=1e-3)
    assert exc.value.probes


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e5))
def test_inverse_after_query_is_identity(x):
    f = integral_fn(parse("(1+x^2)^-0.25"), 0.0)
    y = f.query(x)
    assert inverse_query(f, y) == pytest.approx(x, rel=1e-7, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.01, max_value=100), st.floats(min_value=0.01, max_value=100))
def test_inverse_is_monotone(y1, y2):
    f = integral_fn(parse("1/x^0.5"), 1.0)
    lo, hi = sorted((y1, y2))
    assert inverse_query(f, lo) <= inverse_query(f, hi)


# ---------------------------------------------------------------------------
# solve_mu

def test_mu_constant_rate():
    grid = np.linspace(0.5, 20, 40)
    sol = solve_mu(_model(x0=0.0), grid)
    assert sol.ok
    assert np.allclose(sol.mu, grid, rtol=1e-12, atol=1e-12)


def test_mu_square_root_drift():
    grid = np.linspace(0.25, 100, 50)
    sol = solve_mu(_model(g="(1+x)^0.5", b=0.0, x0=0.0), grid)
    assert np.allclose(sol.mu, (grid / 2 + 1) ** 2 - 1, rtol=1e-10)


def test_mu_exponential_growth():
    grid = np.linspace(0.1, 10, 20)
    sol = solve_mu(_model(g="x", b=1.0, x0=1.0), grid)
    assert np.allclose(sol.mu, np.exp(grid), rtol=1e-9)


def test_mu_power_law_asymptotics():
    # g = A x^alpha with A = 2, alpha = 1/2:  mu ~ ((1 - alpha) A t)^(1/(1 - alpha)) = t^2
    grid = 2.0 ** np.arange(4, 20)
    sol = solve_mu(_model(g="2*x^0.5", b=1.0, x0=1.0), grid)
    ratio = sol.mu / grid**2
    assert abs(ratio[-1] - 1) < 1e-5
    assert np.all(np.diff(np.abs(ratio - 1)) <= 0)


def test_mu_blow_up_is_reported():
    # mu' = 1 + mu^2, mu(0) = 0  ->  tan(t), blows up at pi/2
    sol = solve_mu(_model(g="1+x^2", b=-1e300, x0=0.0), np.linspace(0.1, 3.0, 30))
    assert not sol.ok
    assert sol.blowup_time == pytest.approx(math.pi / 2, abs=1e-4)
    assert len(sol.mu) == np.sum(np.linspace(0.1, 3.0, 30) < math.pi / 2)
    assert np.allclose(sol.mu, np.tan(sol.t), rtol=1e-8)


def test_mu_start_below_b_raises():
    with pytest.raises(DomainError):
        solve_mu(_model(g="x", b=1.0, x0=0.5), [1.0])


@pytest.mark.parametrize("model", identity_models(), ids=lambda m: m.name)
def test_phi_equals_G_of_mu(model):
    grid = 2.0 ** np.arange(-4, 14)
    sol = solve_mu(model, grid)
    assert sol.ok
    phi = model.Phi.values(grid)
    gm = model.G.values(sol.mu)
    assert relative_identity_residual(phi, gm, model.G.query(model.x0)) <= 1e-8


def test_identity_residual_definition():
    assert relative_identity_residual([1.0, 3.0], [1.5, 3.5], 0.5) == 0.0
    assert relative_identity_residual([1.0], [2.0]) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# a_tilde and big_A

@pytest.mark.parametrize("t,x", [(0.0, 0.0), (3.0, 2.0), (100.0, -5.0)])
def test_a_tilde_constant_coefficients(t, x):
    assert a_tilde(_model(), t, x) == pytest.approx(1.0)


@pytest.mark.parametrize("t", [0.0, 1.0, 8.0])
def test_a_tilde_time_varying_theta(t):
    m = _model(theta="sqrt(1+t)")
    assert a_tilde(m, t, 0.0) == pytest.approx((1 + t) ** -0.5, rel=1e-12)


def test_a_tilde_sigma_derivative_term():
    assert a_tilde(_model(sigma="1+x"), 2.0, 0.0) == pytest.approx(0.5)


def test_a_tilde_full_formula_by_hand():
    m = _model(g="2+x", sigma="1+x", phi="1+t", theta="sqrt(1+t)")
    t, x = 3.0, 1.5
    th, dth = math.sqrt(1 + t), 0.5 / math.sqrt(1 + t)
    bx = math.log(1 + x)
    expected = -dth / th**2 * bx + (2 + x) * (1 + t) / ((1 + x) * th) - 0.5 * th
    assert a_tilde(m, t, x) == pytest.approx(expected, rel=1e-9)


def test_a_tilde_domain_errors():
    with pytest.raises(DomainError):
        a_tilde(_model(theta="t"), 0.0, 1.0)
    with pytest.raises(DomainError):
        a_tilde(_model(sigma="x"), 1.0, -1.0)


def test_big_A_constant():
    assert big_A(_model(), 5.0, (0.0, 10.0)) == pytest.approx(5.0, rel=1e-9)


def test_big_A_time_varying():
    m = _model(theta="sqrt(1+t)")
    # a_tilde = -B(x)/(2(1+t)^1.5) + (1+t)^-0.5; the infimum over [0, 1] sits at x = 1
    t = 6.0
    inner = lambda r: -1.0 / (2 * (1 + r) ** 1.5) + (1 + r) ** -0.5  # noqa: E731
    expected = adaptive_simpson(inner, 0.0, t, 1e-12)
    assert big_A(m, t, (0.0, 1.0)) == pytest.approx(expected, abs=1e-6)


def test_big_A_independent_of_x():
    # theta = sigma = 1 leaves a_tilde = phi(r)
    m = _model(phi="(1+t)^-0.5")
    assert big_A(m, 8.0, (0.0, 5.0)) == pytest.approx(2 * (3 - 1), abs=1e-6)


def test_big_A_infimum_at_right_endpoint():
    # a_tilde = 1 - x, infimum over [0, 10] is -9 at x = 10
    m = _model(g="1-x", b=-1e300)
    assert big_A(m, 2.0, (0.0, 10.0)) == pytest.approx(-18.0, abs=1e-6)
    inf = inner_infimum(m, np.array([1.0]), (0.0, 10.0))
    assert bool(inf.at_boundary[0])


def test_big_A_minus_infinity():
    # sigma'(0) and g/sigma diverge at the window edge
    m = _model(sigma="x^0.5")
    inf = inner_infimum(m, np.array([0.5, 1.0]), (0.0, 1.0))
    assert np.all(inf.value == -np.inf)
    assert big_A(m, 1.0, (0.0, 1.0)) == -np.inf


def test_big_A_refinement_is_monotone():
    m = S5()
    ts = [4.0, 16.0]
    coarse = big_A_many(m, ts, (0.0, 64.0), tol=1e-4)
    fine = big_A_many(m, ts, (0.0, 64.0), tol=1e-7)
    assert np.all(np.abs(fine - coarse) <= 1e-4 * 9 * 2)
    wide = big_A_many(m, ts, (0.0, 128.0), tol=1e-7)
    assert np.all(wide <= fine + 1e-9)  # inf over a larger window cannot increase
