"""Almost-sure growth asymptotics of stochastic differential equations driven
by a Wiener process and a compensated Poisson random measure.

The package comprises an expression language for the model coefficients,
quadratures for the monotone integral transforms, a jump-adapted Euler
simulator with per-path Ito ledgers, hypothesis checkers, and a harness
that aggregates ensembles into growth-ratio statistics.
"""
from .exprlang import DomainError, Expr, ParseError, evaluate, parse, to_string
from .levy import LevyMeasure
from .model import ModelSpec

__all__ = [
    "DomainError", "Expr", "LevyMeasure", "ModelSpec", "ParseError",
    "evaluate", "parse", "to_string",
]
__version__ = "0.1.0"
