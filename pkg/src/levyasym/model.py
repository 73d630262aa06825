"""Model definition: ``dX = g(X) phi(t) dt + sigma(X) theta(t) dW + int c(X-) gamma(u) N~(dt, du)``."""
from __future__ import annotations

from dataclasses import dataclass, field

from .exprlang import Expr, bind, compile_scalar, compile_vector, differentiate, to_string
from .levy import LevyMeasure, compensator_constants
from .quadratures import MonotoneFn

SLOTS = {"g": "x", "sigma": "x", "c": "x", "phi": "t", "theta": "t", "gamma": "u"}
DERIVED = {"dg": ("g", "x"), "dsigma": ("sigma", "x"), "dtheta": ("theta", "t")}


@dataclass
class ModelSpec:
    g: Expr
    sigma: Expr
    c: Expr
    phi: Expr
    theta: Expr
    gamma: Expr
    measure: LevyMeasure
    x0: float = 1.0
    b: float = 0.0
    horizon: float = 2.0**13
    quad_tol: float = 1e-9
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for slot, v in SLOTS.items():
            setattr(self, slot, bind(getattr(self, slot), v))
        self.x0, self.b, self.horizon = float(self.x0), float(self.b), float(self.horizon)
        if not self.horizon > 0:
            raise ValueError("horizon T must be positive")

    @classmethod
    def from_strings(cls, g, sigma, c, phi, theta, gamma, measure, **kw) -> "ModelSpec":
        return cls(g=g, sigma=sigma, c=c, phi=phi, theta=theta, gamma=gamma, measure=measure, **kw)

    @property
    def cutoff(self) -> float:
        return self.measure.cutoff

    def expr(self, name: str) -> Expr:
        if name in SLOTS:
            return getattr(self, name)
        key = ("d", name)
        if key not in self._cache:
            base, v = DERIVED[name]
            self._cache[key] = differentiate(getattr(self, base), v)
        return self._cache[key]

    def var_of(self, name: str) -> str:
        return SLOTS[name] if name in SLOTS else DERIVED[name][1]

    def scalar(self, name: str):
        key = ("scalar", name)
        if key not in self._cache:
            self._cache[key] = compile_scalar(self.expr(name), self.var_of(name))
        return self._cache[key]

    def vector(self, name: str):
        key = ("vector", name)
        if key not in self._cache:
            self._cache[key] = compile_vector(self.expr(name), self.var_of(name))
        return self._cache[key]

    def _monotone(self, key: str, integrand: Expr, lower: float) -> MonotoneFn:
        if key not in self._cache:
            self._cache[key] = MonotoneFn(integrand, lower, tol=self.quad_tol, name=key)
        return self._cache[key]

    @property
    def G(self) -> MonotoneFn:
        """``G(x) = integral_b^x ds / g(s)``."""
        if "G" not in self._cache:
            gv = self.vector("g")
            fn = MonotoneFn(lambda s: 1.0 / gv(s), self.b, tol=self.quad_tol, name="G")
            self._cache["G"] = fn
        return self._cache["G"]

    @property
    def B(self) -> MonotoneFn:
        """``B(x) = integral_0^x dr / sigma(r)``."""
        if "B" not in self._cache:
            sv = self.vector("sigma")
            self._cache["B"] = MonotoneFn(lambda r: 1.0 / sv(r), 0.0, tol=self.quad_tol, name="B")
        return self._cache["B"]

    @property
    def Phi(self) -> MonotoneFn:
        return self._monotone("Phi", self.phi, 0.0)

    @property
    def Theta(self) -> MonotoneFn:
        if "Theta" not in self._cache:
            tv = self.vector("theta")
            self._cache["Theta"] = MonotoneFn(lambda s: tv(s) ** 2, 0.0, tol=self.quad_tol,
                                              name="Theta")
        return self._cache["Theta"]

    @property
    def kappa(self) -> tuple[float, float]:
        """Compensator constants ``(int gamma dnu, int gamma^2 dnu)``."""
        if "kappa" not in self._cache:
            self._cache["kappa"] = compensator_constants(self.measure, self.gamma)
        return self._cache["kappa"]

    def freeze(self) -> "ModelSpec":
        for k in ("G", "B", "Phi", "Theta"):
            if k in self._cache:
                self._cache[k].freeze()
        return self

    def strings(self) -> dict[str, str]:
        return {s: to_string(getattr(self, s)) for s in SLOTS}
