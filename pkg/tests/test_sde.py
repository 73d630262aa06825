import math

import numpy as np
import pytest

from levyasym.catalog import M1, S5, deterministic, pure_jump
from levyasym.levy import LevyMeasure
from levyasym.model import ModelSpec
from levyasym.quadratures import a_tilde, solve_mu
from levyasym.sde import (dynkin_check, ito_ledger, remainder_values, section5_ledger,
                          simulate)


def _model(g="1", sigma="1", c="0", phi="1", theta="1", nu=None, **kw):
    nu = nu or LevyMeasure("uniform", cutoff=1.0, low=-1.0, high=1.0, mass=1.0)
    return ModelSpec(g, sigma, c, phi, theta, "u", nu, **kw)


# ---------------------------------------------------------------------------
# simulate

def test_simulation_is_deterministic():
    m = M1(horizon=32.0)
    a = simulate(m, 2.0**-5, (3, 11))
    b = simulate(m, 2.0**-5, (3, 11))
    for name in ("t", "x", "dW", "event_index", "marks", "x_minus"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.x[0] == m.x0
    assert a.status == "ok" and not a.flagged


def test_paths_differ_across_indices():
    m = M1(horizon=8.0)
    assert simulate(m, 2.0**-4, (3, 1)).x[-1] != simulate(m, 2.0**-4, (3, 2)).x[-1]


def test_grid_contains_events():
    p = simulate(M1(horizon=16.0), 2.0**-3, (0, 0))
    assert p.events
    assert np.all(np.diff(p.t) > 0)
    coarse = np.setdiff1d(np.arange(p.t.size), p.event_index)
    assert np.allclose(p.t[coarse], np.arange(coarse.size) * 2.0**-3)
    # post-jump state is the left limit plus the jump
    for k, i in enumerate(p.event_index):
        assert p.x[i] == pytest.approx(p.x_minus[k] + 0.5 * p.marks[k], abs=1e-14)


def test_pure_jump_compensated_walk():
    nu = LevyMeasure("atoms", cutoff=2.0, atoms=((1.0, 2.0),))
    m = _model(g="0", sigma="0", c="1", nu=nu, x0=3.0, b=-1e300, horizon=8.0)
    for p in range(5):
        path = simulate(m, 2.0**-4, (1, p))
        n = path.event_index.size
        assert path.x[-1] == pytest.approx(3.0 + n - 2.0 * 8.0, abs=1e-12)


def test_deterministic_degeneration_is_first_order():
    m = deterministic(horizon=16.0)
    mu = solve_mu(m, [16.0]).mu[0]
    errs = [abs(simulate(m, h, (0, 0)).x[-1] - mu) for h in (2.0**-3, 2.0**-4, 2.0**-5)]
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 1.8 < r1 < 2.2 and 1.8 < r2 < 2.2
    # global error bound C * step with C from the halving sequence
    assert errs[2] <= 2 * (errs[1] - errs[2]) * 1.1


def test_below_b_is_flagged():
    m = _model(g="1", sigma="3", x0=0.5, b=0.0, horizon=64.0)
    path = simulate(m, 2.0**-4, (0, 0))
    assert path.status == "below_b"
    assert path.flag_index > 0 and path.x[path.flag_index] < 0.0
    led = ito_ledger(path, m, [1.0, 64.0])
    assert led.truncated_at is not None
    assert np.isnan(led.G[-1])


def test_blow_up_is_flagged():
    m = _model(g="1+x^2", sigma="0", x0=0.0, b=-1e300, horizon=4.0)
    path = simulate(m, 2.0**-6, (0, 0))
    assert path.status == "blowup"
    assert path.t[path.flag_index] > 1.0  # tan blows up at pi/2


def test_strong_order_one_half():
    m = _model(g="1", sigma="0.5*(1+x^2)^0.5", x0=0.0, b=-1e300, horizon=1.0)
    steps = [2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6]
    res = 2.0**-7
    rms = []
    for h in steps:
        d = [simulate(m, h, (5, p), resolution=res).x[-1]
             - simulate(m, h / 2, (5, p), resolution=res).x[-1] for p in range(300)]
        rms.append(math.sqrt(np.mean(np.square(d))))
    slope = np.polyfit(np.log2(steps), np.log2(rms), 1)[0]
    assert 0.35 <= slope <= 0.65


# ---------------------------------------------------------------------------
# Ito ledger

def test_no_jumps_gives_zero_jump_terms():
    m = M1(c="0", horizon=16.0)
    led = ito_ledger(simulate(m, 2.0**-5, (0, 0)), m, [1.0, 4.0, 16.0])
    assert np.all(led.J[:, 2] == 0.0) and np.all(led.J[:, 3] == 0.0)


def test_deterministic_ledger_collapses_to_chain_rule():
    m = deterministic(horizon=16.0)
    cks = [1.0, 4.0, 16.0]
    led = ito_ledger(simulate(m, 2.0**-8, (0, 0)), m, cks)
    assert np.allclose(led.J[:, 0], cks, rtol=1e-14)
    assert np.all(led.J[:, 1:] == 0.0)
    assert np.allclose(led.G - led.G0, cks, rtol=1e-3)


def test_linear_G_telescopes_jump_terms():
    nu = LevyMeasure("uniform", cutoff=1.0, low=-0.5, high=1.0, mass=1.5)
    m = _model(g="1", sigma="0.3", c="0.5", nu=nu, x0=50.0, b=0.0, horizon=16.0)
    path = simulate(m, 2.0**-5, (2, 0))
    led = ito_ledger(path, m, [16.0])
    k1 = m.kappa[0]
    raw = np.sum(0.5 * path.marks) - k1 * 0.5 * 16.0
    assert led.J[0, 2] == pytest.approx(0.0, abs=1e-12)
    assert led.J[0, 3] == pytest.approx(raw, rel=1e-12, abs=1e-12)


def test_table_matches_direct_remainder():
    m = M1(horizon=64.0)
    path = simulate(m, 2.0**-5, (4, 0))
    a = ito_ledger(path, m, [8.0, 64.0])
    b = ito_ledger(path, m, [8.0, 64.0], use_table=False)
    assert np.allclose(a.J[:, 2], b.J[:, 2], rtol=1e-7, atol=1e-12)
    assert np.array_equal(a.J[:, :2], b.J[:, :2])
    assert np.allclose(a.J[:, 3], b.J[:, 3], rtol=1e-7, atol=1e-12)


def test_remainder_vanishes_for_linear_G():
    m = _model(g="1", c="0.5", x0=0.0, b=0.0)
    assert np.allclose(remainder_values(m, np.array([0.0, 1.0, 5.0])), 0.0, atol=1e-15)


def test_residual_shrinks_at_first_order():
    m = M1(horizon=16.0)
    steps = [2.0**-6, 2.0**-7, 2.0**-8]
    errs = np.zeros(len(steps))
    for p in range(4):
        for i, h in enumerate(steps):
            path = simulate(m, h, (7, p), resolution=2.0**-8)
            errs[i] += np.max(np.abs(ito_ledger(path, m, [4.0, 8.0, 16.0]).residual))
    slope = np.polyfit(np.log2(steps), np.log2(errs), 1)[0]
    assert slope >= 0.9


def test_martingale_terms_have_zero_mean():
    m = M1(horizon=16.0)
    j = np.array([ito_ledger(simulate(m, 2.0**-5, (13, p)), m, [16.0]).J[0]
                  for p in range(400)])
    for col in (1, 3):
        v = j[:, col]
        assert abs(v.mean()) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


# ---------------------------------------------------------------------------
# decomposition of B(X)/theta

def test_section5_collapse():
    m = _model(g="1", sigma="1", c="0", x0=0.0, b=-1e300, horizon=8.0)
    path = simulate(m, 2.0**-5, (0, 0))
    cks = [1.0, 2.0, 8.0]
    led = section5_ledger(path, m, cks)
    idx = path.index_of(cks)
    assert np.allclose(led.f, path.x[idx], atol=1e-9)
    assert np.allclose(led.f, path.W[idx] + np.array(cks), atol=1e-9)
    assert np.allclose(led.J[:, 0], cks, rtol=1e-12)
    assert np.all(led.J[:, 1:] == 0.0)


def test_section5_drift_term_matches_a_tilde():
    m = _model(g="1", sigma="1", c="0", theta="sqrt(1+t)", x0=0.0, b=-1e300, horizon=8.0)
    path = simulate(m, 2.0**-6, (1, 0))
    led = section5_ledger(path, m, [8.0])
    t, x = path.t[:-1], path.x[:-1]
    ref = float(np.sum(a_tilde(m, t, x) * np.diff(path.t)))
    assert led.J[0, 0] == pytest.approx(ref, rel=1e-8)


def test_section5_residual_shrinks_and_sign_is_negative():
    m = S5(horizon=16.0)
    res = []
    for h in (2.0**-6, 2.0**-7):
        path = simulate(m, h, (3, 0), resolution=2.0**-7)
        res.append(section5_ledger(path, m, [4.0, 16.0]).residual)
    assert np.all(np.abs(res[1]) < np.abs(res[0]) / 1.8)
    # Richardson-extrapolated residual vanishes; the opposite sign of the
    # sigma' correction would leave -sum sigma'(X) theta dt behind
    extrapolated = 2 * res[1] - res[0]
    t, x = path.t[:-1], path.x[:-1]
    shift = float(np.sum(m.vector("dsigma")(x) * m.vector("theta")(t) * np.diff(path.t)))
    assert abs(extrapolated[-1]) < 0.1 * abs(shift)


# ---------------------------------------------------------------------------
# Dynkin formula

def test_dynkin_deterministic_sides_agree_up_to_euler_bias():
    m = deterministic(horizon=8.0)
    gaps = []
    for h in (2.0**-5, 2.0**-6):
        r = dynkin_check(m, 8.0, 100, seed=0, step=h)
        assert r.rhs == pytest.approx(m.G.query(1.0) + 8.0, rel=1e-12)
        gaps.append(abs(r.lhs - r.rhs))
    assert 1.8 < gaps[0] / gaps[1] < 2.2


def test_dynkin_pure_jump():
    r = dynkin_check(pure_jump(horizon=16.0), 16.0, 400, seed=3)
    assert r.z <= 3
    assert r.rhs == pytest.approx(1.0 + 16.0, rel=1e-12)


def test_dynkin_needs_enough_paths():
    with pytest.raises(ValueError):
        dynkin_check(M1(), 1.0, 99, seed=0)
