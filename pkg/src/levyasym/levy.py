"""Random drivers: Wiener increments and a finite-activity Poisson random
measure truncated to ``|u| < K``, plus the compensator constants.

Random streams are Philox counter-based generators keyed by
``(master seed, path index, stream tag)``, so every path can be regenerated
on its own and the result does not depend on how paths are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exprlang import DomainError, Expr, bind, compile_vector
from .quadratures import QuadratureError, adaptive_simpson

STREAM_TAGS = {"wiener": 0, "jumps": 1, "bridge": 2, "probe": 3}
FAMILIES = ("uniform", "laplace", "atoms", "density")
GL_NODES = 64


class MeasureError(ValueError):
    """Ill-posed Levy measure configuration."""


def rng_stream(seed: int, path: int, tag: str) -> np.random.Generator:
    """Independent generator for one ``(seed, path, tag)`` triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path), STREAM_TAGS[tag]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: float


@dataclass
class LevyMeasure:
    """Finite intensity measure on ``(-cutoff, cutoff)``.

    Families and parameters:

    ``uniform``  -- ``low``, ``high``, total ``mass`` (density ``mass/(high-low)``)
    ``laplace``  -- ``scale`` and ``mass``; density proportional to ``exp(-|u|/scale)``
    ``atoms``    -- ``atoms``: list of ``(location, mass)``
    ``density``  -- ``density``: expression in ``u``, ``bound`` >= density for rejection
    """

    family: str
    cutoff: float = 1.0
    low: float = -1.0
    high: float = 1.0
    mass: float = 1.0
    scale: float = 1.0
    atoms: tuple[tuple[float, float], ...] = ()
    density: Expr | None = None
    bound: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise MeasureError(f"unknown measure family {self.family!r}")
        if not self.cutoff > 0:
            raise MeasureError("jump cutoff K must be positive")
        if self.family == "uniform":
            lo, hi = self.support
            if not hi > lo and self.mass > 0:
                raise MeasureError("uniform support does not meet (-K, K)")
            if self.mass < 0:
                raise MeasureError("mass must be non-negative")
        elif self.family == "laplace":
            if not (self.scale > 0 and self.mass >= 0):
                raise MeasureError("laplace needs scale > 0 and mass >= 0")
        elif self.family == "atoms":
            self.atoms = tuple((float(a), float(m)) for a, m in self.atoms)
            for a, m in self.atoms:
                if m < 0:
                    raise MeasureError("atom masses must be non-negative")
                if abs(a) >= self.cutoff:
                    raise MeasureError(f"atom at {a} lies outside |u| < K")
                if a == 0.0:
                    raise MeasureError("atoms must avoid u = 0")
        elif self.family == "density":
            if self.density is None:
                raise MeasureError("density family needs an expression")
            if isinstance(self.density, str):
                self.density = bind(self.density, "u")
            if not self.bound > 0:
                raise MeasureError("density family needs a positive dominating bound")

    @property
    def support(self) -> tuple[float, float]:
        K = self.cutoff
        if self.family == "uniform":
            return max(self.low, -K), min(self.high, K)
        return -K, K

    @property
    def total_mass(self) -> float:
        """``lambda = nu({|u| < K})``."""
        if "mass" not in self._cache:
            self._cache["mass"] = self._total_mass()
        return self._cache["mass"]

    def _total_mass(self) -> float:
        if self.family == "uniform":
            lo, hi = self.support
            # restricting to (-K, K) keeps the density fixed
            return self.mass * (hi - lo) / (self.high - self.low) if hi > lo else 0.0
        if self.family == "laplace":
            return self.mass
        if self.family == "atoms":
            return float(sum(m for _, m in self.atoms))
        f = compile_vector(self.density, "u")
        try:
            lam = sum(adaptive_simpson(f, a, b, 1e-10) for a, b in self._pieces())
        except DomainError as exc:
            raise MeasureError(f"density is not integrable on (-K, K): {exc}") from None
        if not math.isfinite(lam) or lam < 0:
            raise MeasureError("density must be non-negative and integrable")
        return lam

    def _pieces(self):
        lo, hi = self.support
        if lo < 0 < hi and self.family in ("laplace", "density"):
            return [(lo, 0.0), (0.0, hi)]
        return [(lo, hi)]

    def density_fn(self):
        """Vectorised density of ``nu`` (continuous families only)."""
        lo, hi = self.support
        if self.family == "uniform":
            d = self.mass / (self.high - self.low)
            return lambda u: np.where((u >= lo) & (u <= hi), d, 0.0) + 0.0 * np.asarray(u)
        if self.family == "laplace":
            K, s = self.cutoff, self.scale
            norm = self.mass / (2.0 * s * (1.0 - math.exp(-K / s)))
            return lambda u: norm * np.exp(-np.abs(u) / s)
        if self.family == "density":
            return compile_vector(self.density, "u")
        raise MeasureError("atoms have no density")

    def nodes(self, n: int = GL_NODES) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature rule ``(u_k, w_k)`` with ``sum w_k f(u_k) ~ integral f dnu``.

        Gauss-Legendre with ``n`` nodes against the density (split at 0 for the
        kinked families), or the exact atom list.
        """
        key = ("nodes", n)
        if key in self._cache:
            return self._cache[key]
        if self.family == "atoms":
            u = np.array([a for a, _ in self.atoms], float)
            w = np.array([m for _, m in self.atoms], float)
        else:
            pieces = self._pieces()
            per = n // len(pieces)
            x, wx = np.polynomial.legendre.leggauss(per)
            us, ws = [], []
            dens = self.density_fn()
            for a, b in pieces:
                uu = 0.5 * (b - a) * x + 0.5 * (a + b)
                us.append(uu)
                ws.append(0.5 * (b - a) * wx * dens(uu))
            u, w = np.concatenate(us), np.concatenate(ws)
        self._cache[key] = (u, w)
        return u, w

    def sample_marks(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` i.i.d. marks from ``nu / lambda``."""
        if n == 0:
            return np.zeros(0)
        lo, hi = self.support
        if self.family == "uniform":
            return lo + (hi - lo) * rng.random(n)
        if self.family == "laplace":
            # inverse CDF of the symmetric truncated law, one uniform per mark
            v = rng.random(n)
            s, K = self.scale, self.cutoff
            q = np.abs(2.0 * v - 1.0)
            mag = -s * np.log1p(-q * (1.0 - math.exp(-K / s)))
            return np.where(v < 0.5, -mag, mag)
        if self.family == "atoms":
            w = np.array([m for _, m in self.atoms], float)
            cdf = np.cumsum(w) / w.sum()
            idx = np.searchsorted(cdf, rng.random(n), side="right")
            idx = np.minimum(idx, len(self.atoms) - 1)
            return np.array([a for a, _ in self.atoms], float)[idx]
        return self._rejection(n, rng)

    def _rejection(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.support
        dens = self.density_fn()
        out = []
        have = 0
        tried = 0
        while have < n:
            m = max(64, 2 * (n - have))
            u = lo + (hi - lo) * rng.random(m)
            y = self.bound * rng.random(m)
            du = dens(u)
            if np.any(du > self.bound * (1 + 1e-12)):
                raise MeasureError("density exceeds the dominating bound")
            acc = u[y < du]
            out.append(acc)
            have += acc.size
            tried += m
            if tried >= 10_000 and have / tried < 1e-3:
                raise MeasureError(
                    f"rejection acceptance rate {have / tried:.2e} below 1e-3; bound too loose")
        return np.concatenate(out)[:n]


def sample_jumps(measure: LevyMeasure, t0: float, t1: float, rng: np.random.Generator):
    """Jump times and marks of the Poisson random measure on ``(t0, t1]``.

    Returns ``(times, marks)`` arrays with strictly increasing times.
    """
    if not t1 > t0:
        raise ValueError("need t0 < t1")
    lam = measure.total_mass
    if lam == 0:
        return np.zeros(0), np.zeros(0)
    n = int(rng.poisson(lam * (t1 - t0)))
    # uniform on (t0, t1]
    times = np.sort(t1 - (t1 - t0) * rng.random(n))
    marks = measure.sample_marks(n, rng)
    return times, marks


def jump_events(times, marks) -> list[JumpEvent]:
    return [JumpEvent(float(t), float(u)) for t, u in zip(times, marks)]


def compensator_constants(measure: LevyMeasure, gamma: Expr, tol: float = 1e-11):
    """``(integral gamma dnu, integral gamma^2 dnu)`` over ``|u| < K``.

    Divergent integrals raise :class:`QuadratureError`.
    """
    gamma = bind(gamma, "u")
    if measure.family == "atoms":
        from .exprlang import evaluate
        k1 = sum(m * evaluate(gamma, u=a) for a, m in measure.atoms)
        k2 = sum(m * evaluate(gamma, u=a) ** 2 for a, m in measure.atoms)
        return float(k1), float(k2)
    gf = compile_vector(gamma, "u")
    dens = measure.density_fn()
    k1 = k2 = 0.0
    for a, b in measure._pieces():
        k1 += adaptive_simpson(lambda u: gf(u) * dens(u), a, b, tol)
        k2 += adaptive_simpson(lambda u: gf(u) ** 2 * dens(u), a, b, tol)
    if not (math.isfinite(k1) and math.isfinite(k2)):
        raise QuadratureError("compensator integral diverges")
    return float(k1), float(k2)


def wiener_increments(grid, rng: np.random.Generator) -> np.ndarray:
    """Independent ``N(0, dt)`` increments for consecutive points of ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return np.zeros(0)
    dt = np.diff(grid)
    if np.any(dt <= 0):
        raise ValueError("grid must be strictly increasing")
    return np.sqrt(dt) * rng.standard_normal(dt.size)
