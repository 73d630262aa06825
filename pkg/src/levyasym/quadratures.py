"""Deterministic calculus for the model: integral functions, their inverses,
the comparison ODE and the drift functional used by the unboundedness test.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exprlang import DomainError, Expr, compile_vector

_EPS = np.finfo(float).eps


class QuadratureError(DomainError):
    """Adaptive quadrature failed to converge (divergent or singular integrand)."""


class UnreachableError(ValueError):
    """Requested value lies outside the range of a bounded monotone function."""

    def __init__(self, y: float, sup_estimate: float, probes: list[tuple[float, float]]):
        self.y = y
        self.sup_estimate = sup_estimate
        self.probes = probes
        super().__init__(f"value {y!r} unreachable; function appears bounded by {sup_estimate!r}")


class BlowUpError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Adaptive Simpson, vectorised over all live subintervals

def adaptive_simpson_many(f, a, b, tol, max_level=60, max_intervals=4_000_000):
    """Integrate ``f`` over each ``[a[i], b[i]]``.

    ``f`` must accept and return numpy arrays.  The absolute tolerance ``tol``
    is shared out over the intervals in proportion to their length.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    out = np.zeros(a.shape)
    total = float(np.sum(np.abs(b - a)))
    if a.size == 0 or total == 0.0:
        return out
    owner = np.arange(a.size)
    lo, hi = a.copy(), b.copy()
    mid = 0.5 * (lo + hi)
    fl, fm, fh = _call(f, lo), _call(f, mid), _call(f, hi)
    whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh)
    itol = tol * np.abs(hi - lo) / total
    for _ in range(max_level):
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = _call(f, lm), _call(f, rm)
        left = (mid - lo) / 6.0 * (fl + 4.0 * flm + fm)
        right = (hi - mid) / 6.0 * (fm + 4.0 * frm + fh)
        diff = left + right - whole
        scale = np.abs(left) + np.abs(right)
        ok = np.abs(diff) <= 15.0 * np.maximum(itol, 64.0 * _EPS * scale)
        # degenerate widths cannot be split further
        ok |= np.abs(hi - lo) <= 16.0 * _EPS * np.maximum(np.abs(lo), np.abs(hi))
        if np.any(ok):
            np.add.at(out, owner[ok], (left + right + diff / 15.0)[ok])
        nk = ~ok
        if not np.any(nk):
            return out
        lo, mid_, hi = lo[nk], mid[nk], hi[nk]
        owner = np.concatenate([owner[nk], owner[nk]])
        fl_, flm_, fm_, frm_, fh_ = fl[nk], flm[nk], fm[nk], frm[nk], fh[nk]
        half = itol[nk] / 2.0
        lo, hi = np.concatenate([lo, mid_]), np.concatenate([mid_, hi])
        mid = np.concatenate([0.5 * (lo[: mid_.size] + mid_), 0.5 * (mid_ + hi[mid_.size:])])
        fl = np.concatenate([fl_, fm_])
        fm = np.concatenate([flm_, frm_])
        fh = np.concatenate([fm_, fh_])
        whole = np.concatenate([left[nk], right[nk]])
        itol = np.concatenate([half, half])
        if lo.size > max_intervals:
            break
    bad = float(lo[np.argmax(np.abs(whole))])
    raise QuadratureError("adaptive Simpson did not converge; integrand may diverge", bad)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-9, pieces: int = 16) -> float:
    """Integral of ``f`` from ``a`` to ``b`` (signed) within absolute ``tol``."""
    if a == b:
        return 0.0
    sgn = 1.0
    if b < a:
        a, b, sgn = b, a, -1.0
    edges = np.linspace(a, b, pieces + 1)
    return sgn * float(np.sum(adaptive_simpson_many(f, edges[:-1], edges[1:], tol)))


def _call(f, x):
    y = np.asarray(f(x), dtype=float)
    if y.shape != np.shape(x):
        y = np.broadcast_to(y, np.shape(x)).astype(float)
    if not np.all(np.isfinite(y)):
        bad = float(np.asarray(x)[~np.isfinite(y)][0])
        raise QuadratureError("integrand is not finite", bad)
    return y


# ---------------------------------------------------------------------------
# Monotone integral functions

class MonotoneFn:
    """``F(x) = integral of integrand from lower to x`` with a dyadic knot cache.

    Knots sit at ``lower +/- unit * 2**k``.  Each skeleton segment is integrated
    once to a share of the tolerance; a query integrates only from the nearest
    knot below.  After :meth:`freeze` the cache is read-only and queries
    beyond it are computed without being stored.
    """

    def __init__(self, integrand, lower: float, tol: float = 1e-9, unit: float = 1.0,
                 name: str = "F"):
        if isinstance(integrand, Expr):
            self.expr = integrand
            self._f = compile_vector(integrand)
        else:
            self.expr = None
            self._f = integrand
        self.lower = float(lower)
        self.tol = float(tol)
        self.unit = float(unit)
        self.name = name
        self._lock = threading.Lock()
        self._frozen = False
        # per side: offsets [0, unit, 2 unit, 4 unit, ...] and cumulative values
        self._pos = {1: [0.0], -1: [0.0]}
        self._val = {1: [0.0], -1: [0.0]}

    def integrand(self, x):
        return self._f(x)

    def freeze(self) -> "MonotoneFn":
        self._frozen = True
        return self

    @property
    def knots(self) -> list[tuple[float, float]]:
        left = [(self.lower - p, -v) for p, v in zip(self._pos[-1][1:], self._val[-1][1:])]
        right = [(self.lower + p, v) for p, v in zip(self._pos[1], self._val[1])]
        return sorted(left) + right

    def _offset(self, k: int) -> float:
        return 0.0 if k == 0 else self.unit * 2.0 ** (k - 1)

    def _segment(self, side: int, k: int) -> float:
        a, b = self._offset(k), self._offset(k + 1)
        tol = self.tol * 2.0 ** -(k + 2)
        if side > 0:
            return adaptive_simpson(self._f, self.lower + a, self.lower + b, tol)
        return adaptive_simpson(self._f, self.lower - b, self.lower - a, tol)

    def _skeleton(self, side: int, k: int):
        """Cumulative value at skeleton knot ``k`` on ``side``."""
        pos, val = self._pos[side], self._val[side]
        if k < len(val):
            return val[k]
        if self._frozen:
            v = val[-1]
            for j in range(len(val) - 1, k):
                v += self._segment(side, j)
            return v
        with self._lock:
            while len(val) <= k:
                j = len(val) - 1
                val.append(val[-1] + self._segment(side, j))
                pos.append(self._offset(j + 1))
            return val[k]

    def _locate(self, d: float) -> int:
        if d < self.unit:
            return 0
        return int(math.floor(math.log2(d / self.unit))) + 1

    def query(self, x: float) -> float:
        x = float(x)
        if not math.isfinite(x):
            raise DomainError(f"{self.name} queried at a non-finite point", x)
        d = x - self.lower
        if d == 0.0:
            return 0.0
        side = 1 if d > 0 else -1
        ad = abs(d)
        k = self._locate(ad)
        while self._offset(k) > ad:
            k -= 1
        while self._offset(k + 1) <= ad:
            k += 1
        base = self._skeleton(side, k)
        start = self.lower + side * self._offset(k)
        rest = adaptive_simpson(self._f, start, x, self.tol / 2.0, pieces=4)
        # left-side values accumulate the mirrored integral, hence the sign flip
        return base + rest if side > 0 else -base + rest

    __call__ = query

    def values(self, xs) -> np.ndarray:
        """Vectorised :meth:`query` for many points at once."""
        xs = np.asarray(xs, dtype=float)
        flat = xs.ravel()
        if flat.size == 0:
            return np.zeros(xs.shape)
        order = np.argsort(flat, kind="stable")
        s = flat[order]
        anchor = self.query(s[0])
        if s.size > 1:
            inc = adaptive_simpson_many(self._f, s[:-1], s[1:], self.tol / 2.0)
            vals = anchor + np.concatenate([[0.0], np.cumsum(inc)])
        else:
            vals = np.array([anchor])
        out = np.empty_like(flat)
        out[order] = vals
        return out.reshape(xs.shape)


def integral_fn(integrand, lower: float, tol: float = 1e-9, name: str = "F") -> MonotoneFn:
    """Build ``x -> integral_lower^x integrand``."""
    return MonotoneFn(integrand, lower, tol=tol, name=name)


def inverse_query(f: MonotoneFn, y: float, max_doublings: int = 200) -> float:
    """Solve ``f(x) = y`` for increasing ``f``, growing the bracket by doubling."""
    y = float(y)
    lo = f.lower
    if y == 0.0:
        return lo
    side = 1.0 if y > 0 else -1.0
    width = f.unit
    probes = []
    prev_x, prev_f = lo, 0.0
    stalled = 0
    for _ in range(max_doublings):
        x = lo + side * width
        try:
            fx = f.query(x)
        except DomainError:
            if not probes:
                raise
            break
        probes.append((x, fx))
        if side * (fx - y) >= 0:
            a, b = min(prev_x, x), max(prev_x, x)
            root = brentq(lambda z: f.query(z) - y, a, b, xtol=1e-300, rtol=4 * _EPS, maxiter=400)
            return float(root)
        # bounded-integral signature: increments collapse below the tolerance
        stalled = stalled + 1 if abs(fx - prev_f) < f.tol else 0
        if stalled >= 3:
            break
        prev_x, prev_f = x, fx
        width *= 2.0
    sup = probes[-1][1] if probes else float("nan")
    raise UnreachableError(y, sup, probes)


# ---------------------------------------------------------------------------
# Comparison ODE  d mu = g(mu) phi(t) dt

@dataclass
class MuSolution:
    t: np.ndarray
    mu: np.ndarray
    blowup_time: float | None = None
    reason: str = ""
    steps: int = 0

    @property
    def ok(self) -> bool:
        return self.blowup_time is None

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.mu.tolist()))


def rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_doubling(f, t0: float, y0: float, grid, atol: float = 1e-10, rtol: float = 1e-11,
                 y_max: float = 1e12, h_min_frac: float = 1e-12) -> MuSolution:
    """Classical RK4 with step-doubling error control, landing on every grid point."""
    grid = np.asarray(grid, dtype=float)
    out = np.full(grid.shape, np.nan)
    span = max(float(grid[-1] - t0), 1.0) if grid.size else 1.0
    h_min = h_min_frac * span
    t, y = float(t0), float(y0)
    h = min(1e-3, span) if span > 0 else 1e-3
    steps = 0
    for i, target in enumerate(grid):
        if target < t:
            raise ValueError("time grid must be non-decreasing and start at or after t0")
        while t < target:
            step = min(h, target - t)
            try:
                big = rk4_step(f, t, y, step)
                half = rk4_step(f, t, y, step / 2)
                small = rk4_step(f, t + step / 2, half, step / 2)
            except (DomainError, OverflowError, ZeroDivisionError) as exc:
                sol = MuSolution(grid[:i], out[:i], t, f"domain: {exc}", steps)
                return sol
            if not (math.isfinite(big) and math.isfinite(small)):
                return MuSolution(grid[:i], out[:i], t, "non-finite state", steps)
            err = abs(small - big) / 15.0
            scale = atol + rtol * abs(small)
            if err <= scale:
                t += step
                y = small + (small - big) / 15.0
                steps += 1
                if abs(y) > y_max:
                    return MuSolution(grid[:i], out[:i], t, f"|mu| exceeded {y_max:g}", steps)
            fac = 4.0 if err == 0 else min(4.0, max(0.1, 0.9 * (scale / err) ** 0.2))
            if err <= scale and step < h:
                # landed on a grid point with a truncated step; keep the old h
                fac = max(fac, 1.0)
                h = max(h, step * fac)
            else:
                h = step * fac
            if h < h_min:
                return MuSolution(grid[:i], out[:i], t, "step size collapsed", steps)
        out[i] = y
    return MuSolution(grid, out, None, "", steps)


def solve_mu(model, grid, atol: float = 1e-10, rtol: float = 1e-11) -> MuSolution:
    """Solve the comparison ODE ``mu' = g(mu) phi(t)``, ``mu(0) = X0`` on ``grid``."""
    if model.x0 < model.b:
        raise DomainError("initial value below the lower limit b of G", model.x0)
    g, phi = model.scalar("g"), model.scalar("phi")

    def rhs(t, y):
        return g(y) * phi(t)

    return rk4_doubling(rhs, 0.0, model.x0, grid, atol=atol, rtol=rtol)


# ---------------------------------------------------------------------------
# Drift functional for f(t, x) = B(x)/theta(t)

def a_tilde(model, t, x):
    """``-theta'(t)/theta(t)^2 B(x) + g(x) phi(t) / (sigma(x) theta(t)) - sigma'(x) theta(t) / 2``."""
    t_arr, x_arr = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    th = model.vector("theta")(t_arr)
    if np.any(th == 0):
        raise DomainError("theta vanishes", float(t_arr[th == 0].flat[0]))
    sig = model.vector("sigma")(x_arr)
    if np.any(sig <= 0):
        raise DomainError("sigma must be positive", float(x_arr[sig <= 0].flat[0]))
    bx = model.B.values(x_arr)
    val = (-model.vector("dtheta")(t_arr) / th**2 * bx
           + model.vector("g")(x_arr) * model.vector("phi")(t_arr) / (sig * th)
           - 0.5 * model.vector("dsigma")(x_arr) * th)
    return float(val) if val.ndim == 0 else val


@dataclass
class InnerInf:
    value: np.ndarray
    argmin: np.ndarray
    at_boundary: np.ndarray


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _tolerant(fn, xs):
    """``fn`` on ``xs`` with points outside its domain mapped to nan."""
    try:
        return np.asarray(fn(xs), dtype=float)
    except DomainError:
        out = np.empty_like(xs)
        for i, x in enumerate(xs):
            try:
                out[i] = fn(np.array([x]))[0]
            except DomainError:
                out[i] = np.nan
        return out
_GLZ, _GLW = np.polynomial.legendre.leggauss(16)


def inner_infimum(model, r, window, seeds: int = 64, iters: int = 48) -> InnerInf:
    """Per-time infimum over ``x`` in ``window`` of the drift functional.

    The value at time ``r`` is ``-a(r) B(x) + b(r) h1(x) - c(r) h2(x)`` with
    fixed functions of ``x``, so the x-dependent pieces are shared by all
    times.  Seeds on a uniform grid, then golden-section refinement in the
    bracket around the best seed.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    lo, hi = map(float, window)
    if not hi > lo:
        raise ValueError("x window must have positive length")
    th = model.vector("theta")(r)
    if np.any(th == 0):
        raise DomainError("theta vanishes", float(r[th == 0][0]))
    ca = model.vector("dtheta")(r) / th**2
    cb = model.vector("phi")(r) / th
    cc = 0.5 * th
    h1f = lambda x: model.vector("g")(x) / model.vector("sigma")(x)  # noqa: E731
    h2f = model.vector("dsigma")

    xs = np.linspace(lo, hi, seeds)
    key = ("inf_seeds", lo, hi, seeds)
    if key not in model._cache:
        with np.errstate(all="ignore"):
            model._cache[key] = (_tolerant(model.B.values, xs), _tolerant(h1f, xs),
                                 _tolerant(h2f, xs))
    bx, h1, h2 = model._cache[key]
    with np.errstate(all="ignore"):
        grid = -ca[:, None] * bx[None, :] + cb[:, None] * h1[None, :] - cc[:, None] * h2[None, :]
    if not np.all(np.isfinite(grid)):
        # a divergent or undefined seed marks the infimum as -inf
        bad = np.isnan(grid) | (grid == -np.inf)
        if bad.any():
            out = np.where(bad.any(axis=1), -np.inf, np.where(bad, np.inf, grid).min(axis=1))
            arg = xs[np.argmin(np.where(bad, -np.inf, grid), axis=1)]
            return InnerInf(out, arg, bad.any(axis=1))
    k = np.argmin(grid, axis=1)
    best = grid[np.arange(r.size), k]
    a = xs[np.maximum(k - 1, 0)]
    b = xs[np.minimum(k + 1, seeds - 1)]
    x1 = b - _GOLD * (b - a)
    x2 = a + _GOLD * (b - a)

    anchor, b_anchor = xs[k], bx[k]
    inv_sigma = lambda x: 1.0 / model.vector("sigma")(x)  # noqa: E731

    def diag(x):
        # B(x) from the anchor seed; the bracket spans two seed intervals
        half = 0.5 * (x - anchor)
        bl = b_anchor + half * sum(w * inv_sigma(anchor + half * (1.0 + z))
                                   for z, w in zip(_GLZ, _GLW))
        return -ca * bl + cb * h1f(x) - cc * h2f(x)

    f1, f2 = diag(x1), diag(x2)
    for _ in range(iters):
        left = f1 <= f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        nx1 = np.where(left, b - _GOLD * (b - a), x2)
        nx2 = np.where(left, x1, a + _GOLD * (b - a))
        fn = diag(np.where(left, nx1, nx2))
        f1, f2 = np.where(left, fn, f2), np.where(left, f1, fn)
        x1, x2 = nx1, nx2
    xm = 0.5 * (a + b)
    fm = diag(xm)
    value = np.minimum(best, fm)
    argmin = np.where(fm < best, xm, xs[k])
    boundary = (argmin <= lo + 1e-12 * max(1.0, abs(lo))) | (argmin >= hi - 1e-12 * max(1.0, abs(hi)))
    return InnerInf(value, argmin, boundary)


def big_A(model, t: float, x_window, tol: float = 1e-6) -> float:
    """``A(t) = integral_0^t inf_x a_tilde(r, x) dr`` with ``x`` restricted to ``x_window``."""
    return float(big_A_many(model, [t], x_window, tol)[0])


def big_A_many(model, ts, x_window, tol: float = 1e-6) -> np.ndarray:
    """``A`` at increasing times ``ts``, reusing earlier pieces of the time integral."""
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) < 0) or (ts.size and ts[0] < 0):
        raise ValueError("times must be non-negative and increasing")
    edges = np.concatenate([[0.0], ts])

    def m(r):
        v = inner_infimum(model, r, x_window).value
        if not np.all(np.isfinite(v)):
            raise _NegInf()
        return v

    try:
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            sub = np.linspace(a, b, 9)
            pieces.append(np.sum(adaptive_simpson_many(m, sub[:-1], sub[1:], tol)))
    except _NegInf:
        return np.full(ts.shape, -np.inf)
    return np.cumsum(pieces)


class _NegInf(Exception):
    pass


def relative_identity_residual(phi_vals, g_of_mu, g0: float = 0.0) -> float:
    """``max |Phi - (G(mu) - G(mu(0)))| / (1 + Phi)`` over a grid.

    ``g0 = G(mu(0))`` vanishes when the ODE starts at the lower limit of ``G``.
    """
    phi_vals = np.asarray(phi_vals, float)
    gap = np.abs(phi_vals - (np.asarray(g_of_mu, float) - g0))
    return float(np.max(gap / (1.0 + np.abs(phi_vals))))
