import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levyasym.catalog import fixtures
from levyasym.exprlang import parse
from levyasym.hypotheses import (FAILS, HOLDS, INCONCLUSIVE, ConditionReport, ProbeConfig,
                                 check_all, check_growth_to_infinity, check_III, check_IV,
                                 check_lipschitz, check_T52, check_V, check_VI, check_VII,
                                 check_VIII, combine, format_report_table, lil_scale,
                                 lln_series_check, reports_from_csv, reports_to_csv, rv_index,
                                 viii_integral)
from levyasym.levy import LevyMeasure
from levyasym.model import ModelSpec
from levyasym.quadratures import adaptive_simpson


def _model(g="1", sigma="1", c="0", phi="1", theta="1", **kw):
    return ModelSpec(g, sigma, c, phi, theta, "u", LevyMeasure("uniform"), **kw)


# ---------------------------------------------------------------------------
# Lipschitz

def test_lipschitz_linear():
    r = check_lipschitz(parse("2*x"), -10, 10)
    assert r.verdict == HOLDS and r.value("L_f") == pytest.approx(2.0)


def test_lipschitz_square_is_inconclusive():
    r = check_lipschitz(parse("x^2"), -10, 10)
    assert r.verdict == INCONCLUSIVE
    assert r.value("L_f") == pytest.approx(20.0)


def test_lipschitz_hyperbola():
    r = check_lipschitz(parse("sqrt(1+x^2)"), -10, 10)
    assert r.verdict == HOLDS and r.value("L_f") <= 1.0


def test_lipschitz_domain_failure():
    assert check_lipschitz(parse("x^0.5"), -1, 1).verdict == FAILS


# ---------------------------------------------------------------------------
# II and III

def test_growth_linear():
    assert check_growth_to_infinity(_model().G).verdict == HOLDS


def test_growth_bounded_integral_fails():
    r = check_growth_to_infinity(_model(g="x^2", b=1.0).G)
    assert r.verdict == FAILS
    assert r.value("sup_estimate") == pytest.approx(1.0, abs=1e-6)


def test_growth_logarithmic_holds():
    r = check_growth_to_infinity(_model(g="x", b=1.0).G)
    assert r.verdict == HOLDS
    assert r.value("value_at_last_probe") == pytest.approx(math.log(1 + 2.0**40), rel=1e-9)


@pytest.mark.parametrize("phi,verdict", [("1+t", HOLDS), ("1", FAILS), ("ln(e+t)", HOLDS)])
def test_condition_III(phi, verdict):
    r = check_III(_model(phi=phi))
    assert r.verdict == verdict
    if verdict == HOLDS:
        assert r.value("ratio_last") < 0.1 * r.value("ratio_first")


# ---------------------------------------------------------------------------
# IV

def test_IV_geometric_series():
    r = check_IV(_model())
    assert r.verdict == HOLDS
    # terms 2^{1-k} for k >= 1 and Theta(2)/Phi(1)^2 = 2 at k = 0
    assert r.value("partial_sum") == pytest.approx(4.0, abs=1e-9)
    assert r.value("ratio_max") == pytest.approx(0.5)


def test_IV_logarithmic_phi_fails():
    assert check_IV(_model(phi="1/(1+t)")).verdict == FAILS


def test_IV_power_laws():
    r = check_IV(_model(phi="t", theta="t"))
    assert r.verdict == HOLDS
    assert r.value("rv_index_Phi") == pytest.approx(2.0, abs=1e-6)
    assert r.value("rv_index_Theta") == pytest.approx(3.0, abs=1e-6)


# ---------------------------------------------------------------------------
# V, VI, VII

def test_V_proportional_noise():
    r = check_V(_model(g="(1+x^2)^0.25", sigma="0.1*(1+x^2)^0.25"))
    assert r.verdict == HOLDS
    assert r.value("sup_sigma_over_g") == pytest.approx(0.1, rel=1e-12)


def test_V_linear_noise_fails():
    assert check_V(_model(g="1", sigma="x")).verdict == FAILS


def test_VI_sublinear_drift():
    r = check_VI(_model(g="(1+x^2)^0.25"))
    assert r.verdict == HOLDS
    assert r.value("k_g") == pytest.approx(1.0)
    assert r.value("abs_dg_last") < 0.01 * r.value("abs_dg_ref")


def test_VI_superlinear_drift_fails():
    assert check_VI(_model(g="1+x^2")).verdict == FAILS


def test_VII_growing_theta_fails():
    assert check_VII(_model(theta="t")).verdict == FAILS


def test_VII_balanced_holds():
    assert check_VII(_model(phi="1+t", theta="sqrt(1+t)")).verdict == HOLDS


# ---------------------------------------------------------------------------
# VIII

def test_VIII_unit_drift_is_log_c():
    m = _model(b=0.0)
    r = check_VIII(m)
    assert r.verdict == HOLDS
    for c in (0.5, 2.0, 10.0):
        assert r.value(f"min_c={c:g}") == pytest.approx(abs(math.log(c)), rel=1e-9)
        assert viii_integral(m, 64.0, c) == pytest.approx(abs(math.log(c)), rel=1e-9)


def test_VIII_square_root_drift_tends_to_half_log_c():
    m = _model(g="(1+x)^0.5")
    r = check_VIII(m)
    assert r.verdict == HOLDS
    assert r.value("last_c=10") == pytest.approx(math.log(10) / 2, rel=1e-5)


def test_VIII_matches_direct_quadrature():
    m = _model(g="(1+x)^0.5")
    G = m.G
    t, c = 2.0**10, 2.0
    direct = adaptive_simpson(lambda u: 1.0 / (np.sqrt(1 + u) * G.values(u)), t, c * t, 1e-12)
    assert viii_integral(m, t, c) == pytest.approx(direct, rel=1e-8)


def test_VIII_log_drift_fails():
    f6 = {f.name: f for f in fixtures()}["F6"]
    assert check_VIII(f6.model).verdict == FAILS


# ---------------------------------------------------------------------------
# regular variation

def test_rv_index_exact_on_powers():
    for p in (0.5, 1.0, 2.0, 3.25):
        r = rv_index(parse(f"x^{p}"))
        assert abs(r.alpha - p) <= 1e-14 and r.iqr <= 1e-14


def test_rv_index_absorbs_slow_factor():
    near = rv_index(parse("x*ln(1+x)"))
    far = rv_index(parse("x*ln(1+x)"), x0=2.0**40)
    assert abs(near.alpha - 1) < 0.1
    assert abs(far.alpha - 1) < abs(near.alpha - 1)


@pytest.mark.parametrize("phi,alpha", [("1", 0.0), ("t^0.5", 0.5), ("t", 1.0), ("t^2", 2.0),
                                       ("t*ln(1+t)", 1.0), ("t^0.5*ln(1+t)", 0.5)])
def test_karamata_index_of_Phi(phi, alpha):
    # the log factor contributes about 1/ln t per doubling, so probe far out
    r = rv_index(_model(phi=phi).Phi, x0=2.0**20, doublings=30)
    assert abs(r.alpha - (alpha + 1)) <= 0.05


def test_rv_index_inconclusive_on_oscillation():
    assert rv_index(lambda x: x * (2 + np.sin(np.log(x)))).verdict == INCONCLUSIVE


# ---------------------------------------------------------------------------
# T52 and L51

def test_T52_trivial_cases():
    i, ii, iii, iv = check_T52(_model())
    assert iv.verdict == HOLDS and iv.value("sup_dsigma_over_sigma2") == 0.0
    assert ii.verdict == HOLDS and ii.value("integral_max") == 0.0
    assert iii.verdict == HOLDS and iii.value("partial_sum") == 0.0
    assert i.verdict == HOLDS
    assert i.value("A_last") == pytest.approx(2.0**13, rel=1e-9)
    assert i.value("ratio_last") == pytest.approx(
        2.0**13 / math.sqrt(2 * 2.0**13 * math.log(math.log(2.0**13))), rel=1e-9)


def test_lil_scale_guard():
    assert lil_scale(16.0) == pytest.approx(math.sqrt(32 * math.log(math.log(16.0))))
    with pytest.raises(ValueError):
        lil_scale(2.0)


def test_lln_series_wiener_fails():
    assert lln_series_check([2.0 ** (k + 1) for k in range(30)]).verdict == FAILS


def test_lln_series_negative_q_holds():
    m = [2.0 ** (k + 1) * 2.0 ** (-0.5 * k) for k in range(30)]
    assert lln_series_check(m).verdict == HOLDS


def test_lln_series_zero_moments_hold():
    assert lln_series_check([0.0] * 30).verdict == HOLDS


# ---------------------------------------------------------------------------
# catalog soundness and refinement

def test_combine():
    assert combine([HOLDS, HOLDS]) == HOLDS
    assert combine([HOLDS, INCONCLUSIVE]) == INCONCLUSIVE
    assert combine([INCONCLUSIVE, FAILS, HOLDS]) == FAILS


@pytest.mark.parametrize("fx", fixtures(), ids=lambda f: f.name)
def test_fixture_truth_tables(fx):
    for r in check_all(fx.model):
        want = fx.truth[r.cid]
        if r.verdict == INCONCLUSIVE:
            assert r.cid in fx.may_be_inconclusive, (r.cid, r.note)
        else:
            assert r.verdict == want, (r.cid, r.verdict, r.evidence)


@pytest.mark.parametrize("name", ["F3", "F4", "F6", "F7", "F9"])
def test_refinement_never_flips_decisive_verdicts(name):
    m = {f.name: f.model for f in fixtures()}[name]
    coarse = check_all(m, ProbeConfig(x_doublings=30, t_doublings=30, k_max=30))
    fine = check_all(m, ProbeConfig(x_doublings=40, t_doublings=40, k_max=40))
    for a, b in zip(coarse, fine):
        assert {a.verdict, b.verdict} != {HOLDS, FAILS}, a.cid


# ---------------------------------------------------------------------------
# serialisation

_label = st.text(alphabet="abcdefghij_=.0123456789", min_size=1, max_size=10).filter(
    lambda s: not s.startswith("=") and "=" not in s)


# probe and note strings are printable text produced by the checkers
_free_text = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FFF), max_size=20)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["I.i", "II", "T52.iii"]),
                          st.sampled_from([HOLDS, FAILS, INCONCLUSIVE]),
                          st.lists(st.tuples(_label, st.floats(allow_nan=False)), max_size=4),
                          _free_text, _free_text), max_size=5))
def test_csv_round_trip(rows):
    reports = [ConditionReport(c, v, list(ev), p, n) for c, v, ev, p, n in rows]
    back = reports_from_csv(reports_to_csv(reports))
    assert back == reports


def test_report_table_lists_every_condition():
    reports = check_all(_model(g="(1+x^2)^0.25", phi="1+t"))
    table = format_report_table(reports)
    for r in reports:
        assert r.cid in table
