"""Named models used by the demos and the acceptance suite.

Every fixture carries the verdicts that follow analytically from its
coefficients, together with the conditions on which a finite probe may
legitimately stay inconclusive.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .levy import LevyMeasure
from .model import ModelSpec


def _unit_uniform(half: float = 1.0) -> LevyMeasure:
    return LevyMeasure("uniform", cutoff=half, low=-half, high=half, mass=1.0)


def _build(base: dict, overrides: dict) -> ModelSpec:
    base.update(overrides)
    return ModelSpec(**base)


def M1(**kw) -> ModelSpec:
    """Sub-linear drift with small multiplicative noise and bounded jumps."""
    return _build(dict(g="(1+x^2)^0.25", sigma="0.2*(1+x^2)^0.25", c="0.5", phi="1",
                       theta="1", gamma="u", measure=_unit_uniform(), x0=1.0, b=0.0, name="M1"),
                  kw)


def S5(**kw) -> ModelSpec:
    """Model for the growth of ``B(X)/theta`` with ``theta(t) = sqrt(1+t)``."""
    return _build(dict(g="(1+x^2)^0.25", sigma="0.2*(1+x^2)^0.25", c="0.5/(1+x^2)^0.5",
                       phi="1+t", theta="sqrt(1+t)", gamma="u", measure=_unit_uniform(0.5),
                       x0=1.0, b=0.0, horizon=2.0**10, name="S5"), kw)


def power_law(**kw) -> ModelSpec:
    """``g(x) = (1+x)^(1/2)``: ``X(t)`` grows like ``t^2/4``."""
    return _build(dict(g="(1+x)^0.5", sigma="0.1*(1+x)^0.5", c="0.2", phi="1", theta="1",
                       gamma="u", measure=_unit_uniform(), x0=1.0, b=0.0, name="power_law"), kw)


def pure_jump(**kw) -> ModelSpec:
    """``X = X0 + N(t)`` for a unit-rate Poisson process ``N`` (drift cancels the compensator)."""
    opts = dict(x0=1.0, b=0.0, name="pure_jump")
    opts.update(kw)
    nu = LevyMeasure("atoms", cutoff=2.0, atoms=((1.0, 1.0),))
    return ModelSpec("1", "0", "1", "1", "1", "u", nu, **opts)


def deterministic(g: str = "(1+x^2)^0.25", phi: str = "1", **kw) -> ModelSpec:
    """Noise-free model; the path follows the ODE ``mu' = g(mu) phi(t)``."""
    opts = dict(x0=1.0, b=0.0, name="deterministic")
    opts.update(kw)
    return ModelSpec(g, "0", "0", phi, "1", "u", _unit_uniform(), **opts)


def wiener(**kw) -> ModelSpec:
    """``X = X0 + W``: drift-free, unit diffusion, no jumps."""
    opts = dict(x0=0.0, b=-1e300, name="wiener")
    opts.update(kw)
    return ModelSpec("1", "1", "0", "0", "1", "u", _unit_uniform(), **opts)


@dataclass
class Fixture:
    name: str
    model: ModelSpec
    truth: dict[str, str]
    may_be_inconclusive: set[str] = field(default_factory=set)


_ALL_HOLD = {c: "holds" for c in ("I.i", "I.ii", "I.iii", "II", "III", "IV", "V", "VI", "VII",
                                  "VIII")}


def _truth(**fails) -> dict[str, str]:
    t = dict(_ALL_HOLD)
    for k in fails:
        t[k.replace("_", ".")] = "fails"
    return t


def _fx(name, g, sigma, c, phi, theta, gamma, truth, loose=(), **kw) -> Fixture:
    opts = dict(x0=1.0, b=0.0, name=name)
    opts.update(kw)
    m = ModelSpec(g, sigma, c, phi, theta, gamma, opts.pop("measure", _unit_uniform()), **opts)
    return Fixture(name, m, truth, set(loose))


def fixtures() -> list[Fixture]:
    """Truth-table models for the condition checkers."""
    return [
        Fixture("F1", M1(name="F1"), _truth(III=1)),
        _fx("F2", "(1+x^2)^0.25", "0.1*(1+x^2)^0.25", "0.5", "1+t", "1", "u", _truth()),
        # Phi ~ ln t: t/Phi grows, Theta(2^{k+1})/Phi^2 diverges, theta^2/phi = 1+t
        _fx("F3", "1", "1", "0.5", "1/(1+t)", "1", "u", _truth(III=1, IV=1, VII=1)),
        # G bounded (pi/2), g' unbounded, VIII integral -> 0
        _fx("F4", "1+x^2", "0.1", "0.5", "1", "1", "u",
            {**_truth(II=1, III=1, VI=1, VIII=1), "I.i": "fails"}, loose={"I.i"}),
        _fx("F5", "(1+x^2)^0.25", "0.1", "0.5", "1+t", "t^2", "u", _truth(IV=1, VII=1)),
        # G ~ ln ln x: infinite but VIII integral ~ ln c / (ln t ln ln t)
        _fx("F6", "(1+x)*ln(e+x)", "0.1", "0.5", "1", "1", "u",
            {**_truth(III=1, VI=1, VIII=1), "I.i": "fails"}, loose={"I.i", "II"}),
        _fx("F7", "(1+x)^0.5", "0.1*(1+x)^0.5", "0.2", "1", "1", "u", _truth(III=1)),
        # gamma = 1/u is not square integrable near 0; c = x is unbounded
        _fx("F8", "(1+x^2)^0.25", "0.1", "x", "1", "1", "1/u", _truth(I_ii=1, I_iii=1, III=1)),
        _fx("F9", "max(1,x^0.5)", "0.1", "1/(1+x^2)", "ln(e+t)", "1", "u", _truth()),
        _fx("F10", "1", "x", "0.5", "1", "1", "u", _truth(III=1, V=1)),
    ]


def identity_models() -> list[ModelSpec]:
    """Models whose ODE solution stays below ``1e12`` up to ``t = 2^13``."""
    fx = {f.name: f.model for f in fixtures()}
    return [M1(), fx["F3"], fx["F7"], fx["F9"], fx["F10"]]
