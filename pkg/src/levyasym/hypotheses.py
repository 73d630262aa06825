"""Numerical checkers for the growth and regularity hypotheses on a model.

Each checker returns a :class:`ConditionReport` whose verdict is one of
``holds``, ``fails`` or ``inconclusive``.  Limits cannot be proven from
finite probes, so decisive verdicts require a trend over the last
``TREND`` dyadic probes plus a magnitude threshold; anything in between is
reported as inconclusive.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exprlang import DomainError, Expr, ExprError, bind, compile_vector, differentiate
from .levy import compensator_constants, rng_stream
from .model import ModelSpec
from .quadratures import (MonotoneFn, QuadratureError, adaptive_simpson, big_A_many,
                          solve_mu)

HOLDS, FAILS, INCONCLUSIVE = "holds", "fails", "inconclusive"
TREND = 5
CONDITION_IDS = ("I.i", "I.ii", "I.iii", "II", "III", "IV", "V", "VI", "VII", "VIII",
                 "T52.i", "T52.ii", "T52.iii", "T52.iv", "L51")


@dataclass
class ConditionReport:
    cid: str
    verdict: str
    evidence: list[tuple[str, float]] = field(default_factory=list)
    probe: str = ""
    note: str = ""

    def value(self, label: str) -> float:
        for k, v in self.evidence:
            if k == label:
                return v
        raise KeyError(label)


@dataclass
class ProbeConfig:
    """Probe ranges; ``None`` bounds default to ``[b, b + 2^20]``."""

    x_lo: float | None = None
    x_hi: float | None = None
    x_doublings: int = 40
    t_doublings: int = 40
    samples: int = 2000
    viii_c: tuple[float, ...] = (0.5, 2.0, 10.0)
    window_lo: float | None = None
    window_hi: float | None = None
    k_max: int = 40
    t52_doublings: int = 13
    seed: int = 0

    def x_range(self, model: ModelSpec) -> tuple[float, float]:
        lo = model.b if self.x_lo is None else self.x_lo
        hi = model.b + 2.0**20 if self.x_hi is None else self.x_hi
        return float(lo), float(hi)

    def window(self, model: ModelSpec) -> tuple[float, float]:
        lo, hi = self.x_range(model)
        return (lo if self.window_lo is None else self.window_lo,
                hi if self.window_hi is None else self.window_hi)


def combine(verdicts) -> str:
    verdicts = list(verdicts)
    if FAILS in verdicts:
        return FAILS
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    return HOLDS


def _safe(f, x):
    with np.errstate(all="ignore"):
        try:
            v = np.asarray(f(np.asarray(x, float)), float)
        except (ExprError, ArithmeticError, ValueError):
            return np.full(np.shape(x), np.nan)
    return np.broadcast_to(v, np.shape(x)).astype(float)


def _dyadic_x(lo: float, doublings: int) -> np.ndarray:
    return lo + 2.0 ** np.arange(doublings + 1)


def _dense(lo: float, hi: float, n: int = 4097) -> np.ndarray:
    # uniform plus geometric spacing so both ends are resolved
    geo = lo + np.geomspace(1e-6, hi - lo, n // 2) if hi > lo else np.array([lo])
    return np.unique(np.concatenate([np.linspace(lo, hi, n), geo]))


def _fmt_range(lo, hi) -> str:
    return f"[{lo:.17g}, {hi:.17g}]"


# ---------------------------------------------------------------------------
# Trend helpers

def _bounded(values: np.ndarray):
    """Verdict for ``sup |v| < inf`` from a dyadic sequence.

    Holds when the tail adds nothing beyond the running maximum; fails
    when the tail keeps increasing and at least doubles over the window.
    """
    v = np.abs(values)
    if not np.all(np.isfinite(v)):
        return FAILS, "non-finite value on probe"
    tail, head = v[-TREND:], v[:-TREND]
    if np.max(tail) <= (1 + 1e-3) * max(np.max(head) if head.size else 0.0, 1e-300) or np.all(
            np.diff(tail) <= 1e-12 * np.maximum(tail[:-1], 1e-300)):
        return HOLDS, ""
    if np.all(np.diff(tail) > 0) and tail[-1] >= 2.0 * tail[0]:
        return FAILS, "unbounded growth at the probe boundary"
    return INCONCLUSIVE, "tail neither settled nor clearly growing"


def _series(terms: np.ndarray):
    """Ratio test on the last ``TREND`` terms of a non-negative series."""
    terms = np.asarray(terms, float)
    ev: list[tuple[str, float]] = []
    if not np.all(np.isfinite(terms)):
        return FAILS, [("n_terms", float(terms.size))], "non-finite term"
    if np.all(terms == 0):
        return HOLDS, [("partial_sum", 0.0)], "all terms zero"
    partial = float(np.sum(terms))
    tail = terms[-(TREND + 1):]
    if np.any(tail <= 0):
        if np.all(tail == 0):
            return HOLDS, [("partial_sum", partial)], "tail terms vanish"
        return INCONCLUSIVE, [("partial_sum", partial)], "sign change in tail"
    r = tail[1:] / tail[:-1]
    ev = [("partial_sum", partial), ("last_term", float(tail[-1])),
          ("ratio_max", float(np.max(r))), ("ratio_min", float(np.min(r)))]
    if np.max(r) <= 0.95:
        rs = float(np.max(r))
        ev.append(("tail_bound", float(tail[-1] * rs / (1 - rs))))
        return HOLDS, ev, "geometric tail"
    gmean = math.exp(float(np.mean(np.log(r))))
    ev.append(("ratio_geomean", gmean))
    if np.min(r) >= 0.9 and gmean >= 0.97:
        return FAILS, ev, "terms do not decay"
    return INCONCLUSIVE, ev, ""


# ---------------------------------------------------------------------------
# Karamata index

@dataclass
class RVIndex:
    alpha: float
    iqr: float
    log_ratios: np.ndarray

    @property
    def verdict(self) -> str:
        return HOLDS if np.isfinite(self.alpha) and self.iqr <= 0.2 else INCONCLUSIVE


def rv_index(f, x0: float = 1.0, doublings: int = 40) -> RVIndex:
    """Median of ``log2(f(2^{j+1} x0) / f(2^j x0))`` over ``j`` with its IQR."""
    xs = x0 * 2.0 ** np.arange(doublings + 1)
    if isinstance(f, MonotoneFn):
        vals = f.values(xs)
    elif isinstance(f, (Expr, str)):
        vals = _safe(compile_vector(bind(f, "x"), "x"), xs)
    else:
        try:
            vals = np.asarray(f(xs), float)
        except Exception:
            vals = np.array([float(f(x)) for x in xs])
    with np.errstate(all="ignore"):
        lr = np.log2(vals[1:] / vals[:-1])
    if not np.all(np.isfinite(lr)):
        return RVIndex(float("nan"), float("inf"), lr)
    q1, med, q3 = np.percentile(lr, [25, 50, 75])
    return RVIndex(float(med), float(q3 - q1), lr)


# ---------------------------------------------------------------------------
# Condition I

def check_lipschitz(f: Expr, lo: float, hi: float, samples: int = 2000, seed: int = 0,
                    cid: str = "I.i", label: str = "f") -> ConditionReport:
    """Empirical Lipschitz constant on ``[lo, hi]``.

    Random pairs give the secant estimate; the symbolic derivative on a dense
    grid gives the tangent estimate.  Derivative growth over the last
    doublings toward ``hi`` makes the verdict inconclusive.
    """
    f = bind(f, "x")
    fv = compile_vector(f, "x")
    dfv = compile_vector(differentiate(f, "x"), "x")
    rng = rng_stream(seed, 0, "probe")
    x = lo + (hi - lo) * rng.random(samples)
    y = lo + (hi - lo) * rng.random(samples)
    keep = x != y
    fx, fy = _safe(fv, x[keep]), _safe(fv, y[keep])
    sec = np.abs(fx - fy) / np.abs(x[keep] - y[keep])
    grid = _dense(lo, hi)
    der = np.abs(_safe(dfv, grid))
    ev = []
    probe = _fmt_range(lo, hi)
    if not (np.all(np.isfinite(sec)) and np.all(np.isfinite(der))):
        bad = grid[~np.isfinite(der)]
        ev.append((f"{label}_nonfinite_at", float(bad[0]) if bad.size else float("nan")))
        return ConditionReport(cid, FAILS, ev, probe, f"{label}: unbounded slope or domain error")
    L = float(max(np.max(sec) if sec.size else 0.0, np.max(der)))
    ev.append((f"L_{label}", L))
    ratio = _slope_growth(dfv, lo, hi)
    ev.append((f"{label}_slope_growth", ratio))
    if ratio > 1.1:
        return ConditionReport(cid, INCONCLUSIVE, ev, probe,
                               f"{label}: derivative grows toward the probe boundary")
    return ConditionReport(cid, HOLDS, ev, probe)


def _slope_growth(dfv, lo: float, hi: float) -> float:
    """Growth of ``|f'|`` over ``TREND`` doublings toward either boundary.

    Distances are measured from the point of ``[lo, hi]`` nearest 0; the rate
    of the last doubling is extrapolated.
    """
    anchor = min(max(0.0, lo), hi)
    worst = 0.0
    for edge in (lo, hi):
        if edge == anchor:
            continue
        inner, outer = np.abs(_safe(dfv, np.array([0.5 * (anchor + edge), edge])))
        if inner > 0:
            r = (outer / inner) ** TREND
        else:
            r = 1.0 if outer <= 1e-12 else float("inf")
        worst = max(worst, float(r))
    return worst


def check_I(model: ModelSpec, probe: ProbeConfig | None = None) -> list[ConditionReport]:
    probe = probe or ProbeConfig()
    lo, hi = probe.x_range(model)
    parts = [check_lipschitz(model.expr(n), lo, hi, probe.samples, probe.seed, "I.i", n)
             for n in ("g", "sigma", "c")]
    v = combine(p.verdict for p in parts)
    notes = "; ".join(p.note for p in parts if p.note)
    r1 = ConditionReport("I.i", v, [e for p in parts for e in p.evidence], parts[0].probe, notes)
    return [r1, check_I_ii(model), check_I_iii(model, probe)]


def check_I_ii(model: ModelSpec, levels: int = 40) -> ConditionReport:
    """``int gamma^2 dnu < inf`` by excising ``|u| < K 2^-j`` and watching the increments."""
    nu = model.measure
    if nu.family == "atoms":
        try:
            k2 = compensator_constants(nu, model.gamma)[1]
        except (ExprError, ArithmeticError) as exc:
            return ConditionReport("I.ii", FAILS, [], "atoms", str(exc))
        v = HOLDS if math.isfinite(k2) else FAILS
        return ConditionReport("I.ii", v, [("kappa2", k2)], "atoms")
    gf = compile_vector(model.gamma, "u")
    dens = nu.density_fn()
    lo, hi = nu.support
    K = nu.cutoff

    def piece(a, b):
        if b <= a:
            return 0.0
        return adaptive_simpson(lambda u: gf(u) ** 2 * dens(u), a, b, 1e-12)

    eps = K * 2.0 ** -np.arange(levels + 1)
    incs = []
    try:
        # shells shrinking toward u = 0
        for j in range(levels):
            e1, e0 = eps[j + 1], eps[j]
            inc = piece(max(lo, e1), min(hi, e0)) + piece(max(lo, -e0), min(hi, -e1))
            incs.append(inc)
    except (QuadratureError, DomainError) as exc:
        return ConditionReport("I.ii", FAILS, [], f"u in ({lo:.17g}, {hi:.17g})", str(exc))
    incs = np.asarray(incs)
    verdict, ev, note = _series(incs)
    if verdict == HOLDS:
        try:
            ev.insert(0, ("kappa2", model.kappa[1]))
        except (QuadratureError, DomainError):
            ev.insert(0, ("kappa2", float(np.sum(incs))))
    return ConditionReport("I.ii", verdict, ev, f"shells K*2^-j, j<={levels}", note)


def check_I_iii(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    probe = probe or ProbeConfig()
    lo, hi = probe.x_range(model)
    return _bounded_report("I.iii", model.vector("c"), lo, hi, probe.x_doublings, "c")


def _bounded_report(cid, fn, lo, hi, doublings, label, dyadic_base=None) -> ConditionReport:
    grid = _dense(lo, hi)
    dy = _dyadic_x(lo if dyadic_base is None else dyadic_base, doublings)
    gv, dv = _safe(fn, grid), _safe(fn, dy)
    verdict, note = _bounded(dv)
    if not np.all(np.isfinite(gv)):
        verdict, note = FAILS, "non-finite value on probe grid"
    sup = float(np.nanmax(np.abs(np.concatenate([gv, dv])))) if gv.size else float("nan")
    ev = [(f"sup_{label}", sup), (f"{label}_at_last_probe", float(abs(dv[-1])))]
    return ConditionReport(cid, verdict, ev,
                           f"{_fmt_range(lo, hi)} + dyadic to {dy[-1]:.17g}", note)


# ---------------------------------------------------------------------------
# II - IV

def check_growth_to_infinity(f: MonotoneFn, doublings: int = 40, start: float | None = None,
                             cid: str = "II") -> ConditionReport:
    """``f(x) -> inf`` probed at ``x = start + 2^j``.

    Increments whose ratios stay below 0.9 over the tail signal a bounded
    integral; ratios of at least 0.97 mean the increments are not
    collapsing geometrically.
    """
    base = f.lower if start is None else start
    xs = _dyadic_x(base, doublings)
    try:
        vals = f.values(xs)
    except (QuadratureError, DomainError) as exc:
        return ConditionReport(cid, FAILS, [], f"x = {base:.17g} + 2^j", str(exc))
    inc = np.diff(np.concatenate([[f.query(base)], vals]))
    ev = [("value_at_last_probe", float(vals[-1]))]
    probe = f"x = {base:.17g} + 2^j, j<={doublings}"
    if not np.all(np.isfinite(inc)) or np.any(inc <= 0):
        return ConditionReport(cid, FAILS, ev, probe, "non-positive increment")
    r = inc[-TREND:] / inc[-TREND - 1:-1]
    ev += [("increment_ratio_min", float(np.min(r))), ("increment_ratio_max", float(np.max(r)))]
    if np.all(r < 0.9):
        tail = float(inc[-1] * np.max(r) / (1 - np.max(r)))
        ev.append(("sup_estimate", float(vals[-1]) + tail))
        return ConditionReport(cid, FAILS, ev, probe, "summable increments")
    if np.all(r >= 0.97):
        return ConditionReport(cid, HOLDS, ev, probe)
    return ConditionReport(cid, INCONCLUSIVE, ev, probe)


def check_II(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    probe = probe or ProbeConfig()
    return check_growth_to_infinity(model.G, probe.x_doublings)


def check_III(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    """``t / Phi(t) -> 0`` on dyadic ``t``."""
    probe = probe or ProbeConfig()
    ts = 2.0 ** np.arange(probe.t_doublings + 1)
    try:
        ratio = ts / model.Phi.values(ts)
    except (QuadratureError, DomainError) as exc:
        return ConditionReport("III", FAILS, [], "", str(exc))
    ev = [("ratio_first", float(ratio[0])), ("ratio_last", float(ratio[-1]))]
    probe_s = f"t = 2^k, k<={probe.t_doublings}"
    if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
        return ConditionReport("III", FAILS, ev, probe_s, "Phi not positive")
    dec = np.diff(ratio[-3:])
    if np.all(dec < 0) and ratio[-1] < 0.1 * ratio[0]:
        return ConditionReport("III", HOLDS, ev, probe_s)
    tail = ratio[-TREND:]
    if ratio[-1] >= 0.5 * ratio[0] and not np.all(np.diff(tail) < -1e-9 * tail[:-1]):
        return ConditionReport("III", FAILS, ev, probe_s, "t/Phi bounded away from 0")
    return ConditionReport("III", INCONCLUSIVE, ev, probe_s)


def check_IV(model: ModelSpec, k_max: int = 40) -> ConditionReport:
    """Series ``sum Theta(2^{k+1}) / Phi(2^k)^2`` by the ratio test, plus index evidence."""
    ks = np.arange(k_max + 1)
    try:
        terms = model.Theta.values(2.0 ** (ks + 1)) / model.Phi.values(2.0**ks) ** 2
    except (QuadratureError, DomainError) as exc:
        return ConditionReport("IV", FAILS, [], "", str(exc))
    verdict, ev, note = _series(terms)
    a = rv_index(model.Phi, 1.0, k_max)
    b = rv_index(model.Theta, 1.0, k_max)
    ev += [("rv_index_Phi", a.alpha), ("rv_index_Theta", b.alpha)]
    if a.verdict == HOLDS and b.verdict == HOLDS:
        ev.append(("index_margin", 2 * a.alpha - b.alpha))
    return ConditionReport("IV", verdict, ev, f"k<={k_max}", note)


# ---------------------------------------------------------------------------
# V - VIII

def check_V(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    probe = probe or ProbeConfig()
    lo, hi = probe.x_range(model)
    g, s = model.vector("g"), model.vector("sigma")
    return _bounded_report("V", lambda x: s(x) / g(x), lo, hi, probe.x_doublings, "sigma_over_g")


def check_VI(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    """``inf g > 0`` and ``g'(x) -> 0``."""
    probe = probe or ProbeConfig()
    lo, hi = probe.x_range(model)
    gv = _safe(model.vector("g"), _dense(lo, hi))
    dy = _dyadic_x(lo, probe.x_doublings)
    gd = _safe(model.vector("g"), dy)
    dg = np.abs(_safe(model.vector("dg"), dy))
    probe_s = f"{_fmt_range(lo, hi)} + dyadic to {dy[-1]:.17g}"
    allv = np.concatenate([gv, gd])
    if not (np.all(np.isfinite(allv)) and np.all(np.isfinite(dg))):
        return ConditionReport("VI", FAILS, [], probe_s, "non-finite g or g'")
    kg = float(np.min(allv))
    ev = [("k_g", kg), ("abs_dg_last", float(dg[-1]))]
    if kg <= 0:
        return ConditionReport("VI", FAILS, ev, probe_s, "g not bounded away from 0")
    tail_g = gd[-TREND:]
    if np.all(np.diff(tail_g) < 0) and tail_g[-1] <= 0.5 * tail_g[0]:
        return ConditionReport("VI", FAILS, ev, probe_s, "g decays toward 0")
    tail = dg[-TREND:]
    if np.all(tail <= 1e-12):
        return ConditionReport("VI", HOLDS, ev, probe_s)
    ref = float(np.max(dg[:-TREND])) if dg.size > TREND else float(dg[0])
    ev.append(("abs_dg_ref", ref))
    nonincreasing = np.all(np.diff(tail) <= 1e-12 * np.maximum(tail[:-1], 1e-300))
    if nonincreasing and tail[-1] < 0.01 * ref:
        return ConditionReport("VI", HOLDS, ev, probe_s)
    if not nonincreasing and tail[-1] >= 0.5 * tail[0]:
        return ConditionReport("VI", FAILS, ev, probe_s, "g' does not tend to 0")
    return ConditionReport("VI", INCONCLUSIVE, ev, probe_s)


def check_VII(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    probe = probe or ProbeConfig()
    th, ph = model.vector("theta"), model.vector("phi")
    ts = 2.0 ** np.arange(probe.t_doublings + 1)
    vals = _safe(lambda t: th(t) ** 2 / ph(t), ts)
    verdict, note = _bounded(vals)
    ev = [("max_theta2_over_phi", float(np.nanmax(np.abs(vals)))),
          ("theta2_over_phi_last", float(vals[-1]))]
    return ConditionReport("VII", verdict, ev, f"t = 2^k, k<={probe.t_doublings}", note)


def viii_integral(model: ModelSpec, t: float, c: float) -> float:
    """``|int_t^{ct} du / (g(u) G(u))|`` via ``d ln G = du / (g G)``."""
    Gt = model.G.query(t)
    gv = model.vector("g")
    d = adaptive_simpson(lambda s: 1.0 / gv(s), t, c * t, 1e-12 * max(1.0, abs(Gt)))
    return abs(math.log1p(d / Gt))


def check_VIII(model: ModelSpec, probe: ProbeConfig | None = None) -> ConditionReport:
    """``liminf int_t^{ct} du / (g G) > 0`` for each probed ``c``."""
    probe = probe or ProbeConfig()
    t0 = max(1.0, 4.0 * abs(model.b) + 1.0)
    ts = t0 * 2.0 ** np.arange(probe.t_doublings + 1)
    verdicts, ev, notes = [], [], []
    for c in probe.viii_c:
        try:
            s = np.array([viii_integral(model, t, c) for t in ts])
        except (QuadratureError, DomainError, ZeroDivisionError) as exc:
            verdicts.append(FAILS)
            notes.append(f"c={c:g}: {exc}")
            continue
        ev += [(f"min_c={c:g}", float(np.min(s))), (f"last_c={c:g}", float(s[-1]))]
        tail = s[-TREND:]
        half = s[len(s) // 2]
        if not np.all(np.isfinite(s)):
            verdicts.append(FAILS)
        elif np.all(np.diff(tail) < 0) and s[-1] / half < 0.6:
            verdicts.append(FAILS)
            notes.append(f"c={c:g}: integral decays")
        elif s[-1] > 0 and np.max(np.abs(tail - s[-1])) <= 0.05 * s[-1]:
            verdicts.append(HOLDS)
        else:
            verdicts.append(INCONCLUSIVE)
    return ConditionReport("VIII", combine(verdicts), ev,
                           f"t = {t0:.17g} * 2^k, k<={probe.t_doublings}", "; ".join(notes))


def check_all(model: ModelSpec, probe: ProbeConfig | None = None) -> list[ConditionReport]:
    """Reports for I.i, I.ii, I.iii and II through VIII."""
    probe = probe or ProbeConfig()
    out = check_I(model, probe)
    out += [check_II(model, probe), check_III(model, probe), check_IV(model, probe.k_max),
            check_V(model, probe), check_VI(model, probe), check_VII(model, probe),
            check_VIII(model, probe)]
    return out


# ---------------------------------------------------------------------------
# Growth-to-infinity conditions for B(X)/theta

def check_T52(model: ModelSpec, probe: ProbeConfig | None = None) -> list[ConditionReport]:
    probe = probe or ProbeConfig()
    return [_t52_i(model, probe), _t52_ii(model, probe), _t52_iii(model, probe),
            _t52_iv(model, probe)]


def lil_scale(t):
    """``sqrt(2 t ln ln t)``; defined for ``t >= 16`` only."""
    t = np.asarray(t, float)
    if np.any(t < 16):
        raise ValueError("ln ln t normalisation starts at t >= 16")
    return np.sqrt(2.0 * t * np.log(np.log(t)))


def _t52_i(model, probe) -> ConditionReport:
    window = probe.window(model)
    ts = 2.0 ** np.arange(4, probe.t52_doublings + 1)
    probe_s = f"x window {_fmt_range(*window)}, t = 2^k, 4<=k<={probe.t52_doublings}"
    try:
        A = big_A_many(model, ts, window)
    except (QuadratureError, DomainError) as exc:
        return ConditionReport("T52.i", FAILS, [], probe_s, str(exc))
    ratio = A / lil_scale(ts)
    ev = [("A_last", float(A[-1])), ("ratio_last", float(ratio[-1]))]
    if np.any(np.isneginf(A)):
        return ConditionReport("T52.i", FAILS, ev, probe_s, "inner infimum is -inf")
    tail = ratio[-TREND:]
    if np.all(tail > 1) and np.all(np.diff(tail) >= 0):
        return ConditionReport("T52.i", HOLDS, ev, probe_s)
    if np.all(tail < 1) and np.all(np.diff(tail) <= 0):
        return ConditionReport("T52.i", FAILS, ev, probe_s, "ratio stays below 1")
    return ConditionReport("T52.i", INCONCLUSIVE, ev, probe_s)


def _b_increment(model, x, d):
    sv = model.vector("sigma")
    gl, gw = np.polynomial.legendre.leggauss(8)
    gl, gw = 0.5 * (gl + 1), 0.5 * gw
    s = np.zeros(np.broadcast(x, d).shape)
    for a, w in zip(gl, gw):
        s = s + w / sv(x + d * a)
    return d * s


def _t52_ii(model, probe) -> ConditionReport:
    un, uw = model.measure.nodes()
    xs = 2.0 ** np.arange(probe.x_doublings // 2 + 1)
    probe_s = f"x = 2^j, j<={xs.size - 1}"
    if uw.size == 0:
        return ConditionReport("T52.ii", HOLDS, [("integral_max", 0.0)], probe_s, "no jumps")
    try:
        with np.errstate(all="raise"):
            th_u = model.vector("theta")(un)
            d = model.vector("c")(xs)[:, None] * model.vector("gamma")(un)[None, :]
            inc = _b_increment(model, xs[:, None], d)
            vals = np.sum(uw * inc**2 / th_u**2, axis=1)
    except (FloatingPointError, ExprError) as exc:
        return ConditionReport("T52.ii", FAILS, [], probe_s, str(exc))
    if np.all(vals == 0):
        return ConditionReport("T52.ii", HOLDS, [("integral_max", 0.0)], probe_s)
    if np.any(vals <= 0):
        return ConditionReport("T52.ii", INCONCLUSIVE, [], probe_s, "integral vanishes at some x")
    j = np.log2(xs[-10:])
    q, c0 = np.polyfit(j, np.log2(vals[-10:]), 1)
    K = float(np.max(vals / xs**q))
    ev = [("q_hat", float(q)), ("K_hat", K)]
    if q < -0.1:
        return ConditionReport("T52.ii", HOLDS, ev, probe_s)
    if q >= -0.01:
        return ConditionReport("T52.ii", FAILS, ev, probe_s, "no negative power decay")
    return ConditionReport("T52.ii", INCONCLUSIVE, ev, probe_s)


def _t52_iii(model, probe) -> ConditionReport:
    """Surrogate along the deterministic path ``mu``: ``int c(mu)^2 dr * int gamma^2/theta(u) dnu``."""
    un, uw = model.measure.nodes()
    kmax = probe.t52_doublings
    probe_s = f"along mu, blocks [2^k, 2^(k+1)], k<{kmax}"
    if uw.size == 0:
        return ConditionReport("T52.iii", HOLDS, [("integral", 0.0)], probe_s, "no jumps")
    try:
        with np.errstate(all="raise"):
            kth = float(np.sum(uw * model.vector("gamma")(un) ** 2 / model.vector("theta")(un)))
    except (FloatingPointError, ExprError) as exc:
        return ConditionReport("T52.iii", FAILS, [], probe_s, str(exc))
    edges = np.concatenate([[0.0], 2.0 ** np.arange(kmax + 1)])
    n = 64
    grid = np.unique(np.concatenate([np.linspace(a, b, n + 1) for a, b in zip(edges[:-1],
                                                                               edges[1:])]))
    sol = solve_mu(model, grid)
    cv = model.vector("c")
    blocks = []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (sol.t >= a) & (sol.t <= b)
        if np.count_nonzero(sel) < n + 1:
            break
        vals = _safe(cv, sol.mu[sel]) ** 2
        h = (b - a) / n
        blocks.append(h / 3 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum() + 2 * vals[2:-1:2].sum()))
    blocks = np.abs(kth) * np.asarray(blocks)
    if blocks.size < TREND + 2:
        return ConditionReport("T52.iii", INCONCLUSIVE, [("blocks", float(blocks.size))], probe_s,
                               f"mu left the probe range ({sol.reason})")
    verdict, ev, note = _series(blocks)
    ev.insert(0, ("kappa_theta", kth))
    return ConditionReport("T52.iii", verdict, ev, probe_s, note)


def _t52_iv(model, probe) -> ConditionReport:
    lo, hi = probe.x_range(model)
    s, ds = model.vector("sigma"), model.vector("dsigma")
    return _bounded_report("T52.iv", lambda x: ds(x) / s(x) ** 2, lo, hi, probe.x_doublings,
                           "dsigma_over_sigma2")


def lln_series_check(second_moments) -> ConditionReport:
    """Ratio test on ``sum E[M^2(2^{k+1})] / 2^{k+1}``; ``second_moments[k]`` is ``E M^2(2^{k+1})``."""
    m = np.asarray(second_moments, float)
    terms = m / 2.0 ** (np.arange(m.size) + 1)
    verdict, ev, note = _series(terms)
    return ConditionReport("L51", verdict, ev, f"k<{m.size}", note)


# ---------------------------------------------------------------------------
# Serialisation

def format_report_table(reports) -> str:
    rows = [("condition", "verdict", "evidence", "probe")]
    for r in reports:
        ev = ", ".join(f"{k}={v:.6g}" for k, v in r.evidence)
        if r.note:
            ev = f"{ev} ({r.note})" if ev else r.note
        rows.append((r.cid, r.verdict, ev, r.probe))
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    return "\n".join(f"{a:<{w0}}  {b:<{w1}}  {c}  {d}".rstrip() for a, b, c, d in rows) + "\n"


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "verdict", "evidence", "probe", "note"])
    for r in reports:
        w.writerow([r.cid, r.verdict, ";".join(f"{k}={v:.17g}" for k, v in r.evidence),
                    r.probe, r.note])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[ConditionReport]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        ev = []
        for item in filter(None, row["evidence"].split(";")):
            k, v = item.rsplit("=", 1)
            ev.append((k, float(v)))
        out.append(ConditionReport(row["condition"], row["verdict"], ev, row["probe"], row["note"]))
    return out
