"""Coefficient expression language.

A tiny closed language for scalar functions of one variable (``x``, ``t`` or
``u``): infix ``+ - * / ^``, unary minus, parentheses, decimal literals, the
named constants ``e`` and ``pi`` and the functions ``exp``, ``ln``, ``sqrt``,
``abs``, ``min``, ``max``.  Expressions are immutable trees that can be
evaluated, printed, differentiated exactly and compiled to fast callables.

Precedence, loosest first::

    + -        left associative
    * /        left associative
    unary -    (so -x^2 == -(x^2))
    ^          right associative, binds tighter than unary minus on its left

Two helper nodes, ``sign(a)`` and ``ifle(a, b, p, q)`` (``p`` if ``a <= b``
else ``q``), are produced by :func:`differentiate` for ``abs``/``min``/``max``.
The parser accepts them so that printed derivatives round-trip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

VARIABLES = ("x", "t", "u")
CONSTANTS = {"e": math.e, "pi": math.pi}

_UNARY_FUNCS = ("exp", "ln", "sqrt", "abs", "sign")
_BINARY_FUNCS = ("min", "max")
_ARITY = {
    "const": 0, "var": 0, "neg": 1,
    "add": 2, "sub": 2, "mul": 2, "div": 2, "pow": 2,
    "exp": 1, "ln": 1, "sqrt": 1, "abs": 1, "sign": 1,
    "min": 2, "max": 2, "ifle": 4,
}


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Malformed expression text.  ``offset`` is a byte offset into the UTF-8 text."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class DomainError(ExprError):
    """Evaluation outside the domain of an expression."""

    def __init__(self, message: str, point: float | None = None):
        self.point = point
        if point is not None:
            message = f"{message} (at {point!r})"
        super().__init__(message)


@dataclass(frozen=True)
class Expr:
    kind: str
    children: tuple["Expr", ...] = ()
    value: float | None = None
    name: str | None = None
    _hash: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ExprError(f"unknown node kind {self.kind!r}")
        if len(self.children) != _ARITY[self.kind]:
            raise ExprError(f"{self.kind} expects {_ARITY[self.kind]} children")
        if self.kind == "const" and (self.value is None or not math.isfinite(self.value)):
            raise ExprError("constant node needs a finite value")
        if self.kind == "var" and self.name not in VARIABLES:
            raise ExprError(f"unknown variable {self.name!r}")

    def __str__(self) -> str:
        return to_string(self)

    def __call__(self, value: float) -> float:
        return evaluate(self, value)

    def walk(self) -> Iterator["Expr"]:
        yield self
        for child in self.children:
            yield from child.walk()

    @property
    def is_const(self) -> bool:
        return self.kind == "const"


def const(v: float) -> Expr:
    return Expr("const", value=float(v))


def var(name: str) -> Expr:
    return Expr("var", name=name)


def free_variables(e: Expr) -> set[str]:
    return {n.name for n in e.walk() if n.kind == "var"}


# ---------------------------------------------------------------------------
# Parsing

_PUNCT = "+-*/^(),"


def _tokenize(text: str):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        start = i
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            while i < n and text[i].isdigit():
                i += 1
            if i < n and text[i] == ".":
                i += 1
                while i < n and text[i].isdigit():
                    i += 1
            if i < n and text[i] in "eE":
                j = i + 1
                if j < n and text[j] in "+-":
                    j += 1
                if j < n and text[j].isdigit():
                    i = j
                    while i < n and text[i].isdigit():
                        i += 1
            tokens.append(("num", text[start:i], start))
        elif ch.isalpha() or ch == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append(("ident", text[start:i], start))
        elif ch in _PUNCT:
            tokens.append(("op", ch, start))
            i += 1
        else:
            tokens.append(("bad", ch, start))
            i += 1
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def _offset(self, char_index: int) -> int:
        return len(self.text[:char_index].encode("utf-8"))

    def error(self, message: str, tok=None) -> ParseError:
        tok = tok or self.tokens[self.pos]
        return ParseError(message, self._offset(tok[2]), self.text)

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, op: str):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != op:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {op!r}, found {found}")
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected {tok[1]!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            right = self.term()
            left = Expr("add" if op == "+" else "sub", (left, right))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            right = self.unary()
            left = Expr("mul" if op == "*" else "div", (left, right))
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Expr("neg", (self.unary(),))
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            return Expr("pow", (base, self.unary()))
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        kind, s, _ = tok
        if kind == "num":
            self.take()
            try:
                v = float(s)
            except ValueError:
                raise self.error(f"bad number {s!r}", tok) from None
            if not math.isfinite(v):
                raise self.error(f"number out of range {s!r}", tok)
            return const(v)
        if kind == "ident":
            self.take()
            nxt = self.peek()
            is_call = nxt[0] == "op" and nxt[1] == "("
            if is_call:
                return self.call(s, tok)
            if s in VARIABLES:
                return var(s)
            if s in CONSTANTS:
                return const(CONSTANTS[s])
            if s in _UNARY_FUNCS or s in _BINARY_FUNCS or s == "ifle":
                raise self.error(f"function {s!r} needs arguments", nxt)
            raise self.error(f"unknown identifier {s!r}", tok)
        if kind == "op" and s == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected {s!r}", tok)

    def call(self, name: str, tok) -> Expr:
        arity = {**{f: 1 for f in _UNARY_FUNCS}, **{f: 2 for f in _BINARY_FUNCS}, "ifle": 4}
        if name not in arity:
            raise self.error(f"unknown identifier {name!r}", tok)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        if len(args) != arity[name]:
            raise ParseError(
                f"{name} takes {arity[name]} argument(s), got {len(args)}",
                self._offset(tok[2]), self.text)
        self.expect(")")
        return Expr(name, tuple(args))


def parse(text: str) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    Raises :class:`ParseError` carrying the byte offset of the offending token.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _fmt_const(v: float) -> str:
    s = repr(float(v))
    return s


def to_string(e: Expr) -> str:
    """Print ``e`` so that ``parse(to_string(e))`` evaluates identically."""
    return _print(e)[0]


def _print(e: Expr) -> tuple[str, int]:
    k = e.kind
    if k == "const":
        if e.value < 0:
            return f"({_fmt_const(e.value)})", 9
        return _fmt_const(e.value), 9
    if k == "var":
        return e.name, 9
    if k == "neg":
        s, p = _print(e.children[0])
        if p < 4:
            s = f"({s})"
        return f"-{s}", 3
    if k in _SYM:
        prec = _PREC[k]
        (ls, lp), (rs, rp) = _print(e.children[0]), _print(e.children[1])
        if k == "pow":
            if lp <= prec:
                ls = f"({ls})"
            if rp < prec:
                rs = f"({rs})"
        else:
            if lp < prec:
                ls = f"({ls})"
            # right operand of - and / needs parens at equal precedence
            if rp < prec or (rp == prec and k in ("sub", "div", "add", "mul") and rp != 9):
                rs = f"({rs})"
        return f"{ls} {_SYM[k]} {rs}" if prec == 1 else f"{ls}{_SYM[k]}{rs}", prec
    args = ", ".join(_print(c)[0] for c in e.children)
    return f"{k}({args})", 9


# ---------------------------------------------------------------------------
# Evaluation

def _pow(a: float, b: float) -> float:
    if a == 0.0 and b < 0:
        raise DomainError("0 raised to a negative power")
    if a < 0 and b != math.floor(b):
        raise DomainError("negative base with non-integer exponent")
    try:
        return math.pow(a, b)
    except OverflowError:
        raise DomainError("overflow in power") from None


def _sign(a: float) -> float:
    return 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)


def _eval(e: Expr, env: dict[str, float]) -> float:
    k = e.kind
    if k == "const":
        return e.value
    if k == "var":
        try:
            return env[e.name]
        except KeyError:
            raise DomainError(f"variable {e.name!r} is unbound") from None
    if k == "ifle":
        a, b = _eval(e.children[0], env), _eval(e.children[1], env)
        return _eval(e.children[2] if a <= b else e.children[3], env)
    args = [_eval(c, env) for c in e.children]
    if k == "neg":
        return -args[0]
    if k == "add":
        return args[0] + args[1]
    if k == "sub":
        return args[0] - args[1]
    if k == "mul":
        return args[0] * args[1]
    if k == "div":
        if args[1] == 0.0:
            raise DomainError("division by zero")
        return args[0] / args[1]
    if k == "pow":
        return _pow(args[0], args[1])
    if k == "exp":
        try:
            return math.exp(args[0])
        except OverflowError:
            raise DomainError("overflow in exp") from None
    if k == "ln":
        if args[0] <= 0:
            raise DomainError("ln of a non-positive number")
        return math.log(args[0])
    if k == "sqrt":
        if args[0] < 0:
            raise DomainError("sqrt of a negative number")
        return math.sqrt(args[0])
    if k == "abs":
        return abs(args[0])
    if k == "sign":
        return _sign(args[0])
    if k == "min":
        return args[0] if args[0] <= args[1] else args[1]
    if k == "max":
        return args[0] if args[0] >= args[1] else args[1]
    raise ExprError(f"cannot evaluate {k}")  # pragma: no cover


def evaluate(e: Expr, value: float | None = None, **env: float) -> float:
    """Evaluate ``e``.

    A positional ``value`` binds to the single free variable of ``e`` (or is
    ignored for constants); keyword arguments bind variables by name.
    """
    if value is not None:
        names = free_variables(e)
        if len(names) > 1:
            raise ExprError(f"expression has several free variables {sorted(names)}")
        for n in names or ("x",):
            env[n] = float(value)
    try:
        out = _eval(e, env)
    except DomainError as exc:
        if exc.point is None and len(env) == 1:
            raise DomainError(str(exc), next(iter(env.values()))) from None
        raise
    if not math.isfinite(out):
        raise DomainError("non-finite result", value)
    return out


# ---------------------------------------------------------------------------
# Simplifying constructors and differentiation

def _c(e: Expr, v: float) -> bool:
    return e.kind == "const" and e.value == v


def _fold(kind: str, *args: Expr) -> Expr:
    if all(a.kind == "const" for a in args) and kind != "ifle":
        try:
            return const(_eval(Expr(kind, tuple(args)), {}))
        except ExprError:
            pass
    return Expr(kind, tuple(args))


def add(a: Expr, b: Expr) -> Expr:
    if _c(a, 0):
        return b
    if _c(b, 0):
        return a
    return _fold("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _c(b, 0):
        return a
    if _c(a, 0):
        return neg(b)
    return _fold("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _c(a, 0) or _c(b, 0):
        return const(0.0)
    if _c(a, 1):
        return b
    if _c(b, 1):
        return a
    return _fold("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _c(a, 0):
        return const(0.0)
    if _c(b, 1):
        return a
    return _fold("div", a, b)


def neg(a: Expr) -> Expr:
    if a.kind == "neg":
        return a.children[0]
    return _fold("neg", a)


def power(a: Expr, b: Expr) -> Expr:
    if _c(b, 1):
        return a
    if _c(b, 0):
        return const(1.0)
    return _fold("pow", a, b)


def differentiate(e: Expr, wrt: str = "x") -> Expr:
    """Exact derivative of ``e`` with respect to variable ``wrt``.

    ``abs'(0) = 0``; ``min``/``max`` differentiate to the selected branch,
    ties taking the first argument.
    """
    k = e.kind
    d = lambda n: differentiate(n, wrt)  # noqa: E731
    if k == "const":
        return const(0.0)
    if k == "var":
        return const(1.0 if e.name == wrt else 0.0)
    if k == "neg":
        return neg(d(e.children[0]))
    if k in ("add", "sub"):
        a, b = e.children
        return (add if k == "add" else sub)(d(a), d(b))
    if k == "mul":
        a, b = e.children
        return add(mul(d(a), b), mul(a, d(b)))
    if k == "div":
        a, b = e.children
        return div(sub(mul(d(a), b), mul(a, d(b))), power(b, const(2.0)))
    if k == "pow":
        a, b = e.children
        da, db = d(a), d(b)
        if _c(db, 0):
            return mul(mul(b, power(a, sub(b, const(1.0)))), da)
        if _c(da, 0):
            return mul(mul(e, _fold("ln", a)), db)
        return mul(e, add(mul(db, _fold("ln", a)), div(mul(b, da), a)))
    if k == "exp":
        return mul(e, d(e.children[0]))
    if k == "ln":
        a = e.children[0]
        return div(d(a), a)
    if k == "sqrt":
        a = e.children[0]
        return div(d(a), mul(const(2.0), e))
    if k == "abs":
        a = e.children[0]
        return mul(_fold("sign", a), d(a))
    if k == "sign":
        return const(0.0)
    if k == "min":
        a, b = e.children
        return _branch(a, b, d(a), d(b))
    if k == "max":
        a, b = e.children
        return _branch(b, a, d(a), d(b))
    if k == "ifle":
        a, b, p, q = e.children
        return _branch(a, b, d(p), d(q))
    raise ExprError(f"cannot differentiate {k}")  # pragma: no cover


def _branch(a: Expr, b: Expr, p: Expr, q: Expr) -> Expr:
    if p == q:
        return p
    return Expr("ifle", (a, b, p, q))


# ---------------------------------------------------------------------------
# Compilation

def to_source(e: Expr, flavour: str = "math") -> str:
    """Python source for ``e``.

    ``flavour="math"`` targets scalar code (plain Python or numba, names
    ``math`` and the helper functions below); ``"numpy"`` targets
    vectorised numpy code under the name ``np``.
    """
    return _src(e, flavour)


def _src(e: Expr, fl: str) -> str:
    k = e.kind
    if k == "const":
        return f"({e.value!r})"
    if k == "var":
        return e.name
    c = [_src(ch, fl) for ch in e.children]
    if k == "neg":
        return f"(-{c[0]})"
    if k in ("add", "sub", "mul", "div"):
        return f"({c[0]} {dict(add='+', sub='-', mul='*', div='/')[k]} {c[1]})"
    if fl == "numpy":
        table = {
            "pow": "np.power({0}, {1})", "exp": "np.exp({0})", "ln": "np.log({0})",
            "sqrt": "np.sqrt({0})", "abs": "np.abs({0})", "sign": "np.sign({0})",
            "min": "np.minimum({0}, {1})", "max": "np.maximum({0}, {1})",
            "ifle": "np.where({0} <= {1}, {2}, {3})",
        }
    elif fl == "numba":
        table = {
            "pow": "({0} ** {1})", "exp": "math.exp({0})", "ln": "math.log({0})",
            "sqrt": "math.sqrt({0})", "abs": "abs({0})",
            "sign": "(1.0 if {0} > 0.0 else (-1.0 if {0} < 0.0 else 0.0))",
            "min": "min({0}, {1})", "max": "max({0}, {1})",
            "ifle": "({2} if {0} <= {1} else {3})",
        }
    else:
        table = {
            "pow": "_pow({0}, {1})", "exp": "math.exp({0})", "ln": "math.log({0})",
            "sqrt": "math.sqrt({0})", "abs": "abs({0})", "sign": "_sign({0})",
            "min": "({0} if {0} <= {1} else {1})", "max": "({0} if {0} >= {1} else {1})",
            "ifle": "({2} if {0} <= {1} else {3})",
        }
    return table[k].format(*c)


def compile_scalar(e: Expr, argname: str | None = None) -> Callable[[float], float]:
    """Fast scalar callable with the same domain semantics as :func:`evaluate`."""
    argname = argname or _single_var(e)
    ns = {"math": math, "_pow": _pow, "_sign": _sign}
    exec(f"def _f({argname}):\n    return {to_source(e)}\n", ns)
    raw = ns["_f"]

    def f(v: float) -> float:
        try:
            out = raw(float(v))
        except ZeroDivisionError:
            raise DomainError("division by zero", v) from None
        except (ValueError, OverflowError) as exc:
            raise DomainError(str(exc), v) from None
        if not math.isfinite(out):
            raise DomainError("non-finite result", v)
        return out

    f.expr = e
    return f


def compile_vector(e: Expr, argname: str | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised numpy callable; domain violations raise :class:`DomainError`."""
    argname = argname or _single_var(e)
    ns = {"np": np}
    exec(f"def _f({argname}):\n    return {to_source(e, 'numpy')}\n", ns)
    raw = ns["_f"]

    def f(v):
        arr = np.asarray(v, dtype=float)
        # both branches of min/max/abs are evaluated, so only the final
        # value decides whether the point lies outside the domain
        with np.errstate(all="ignore"):
            try:
                out = raw(arr) + np.zeros_like(arr)
            except (ZeroDivisionError, OverflowError, ValueError) as exc:
                # constant sub-expressions are evaluated by Python, not numpy
                first = float(arr.flat[0]) if arr.size else None
                raise DomainError(str(exc), first) from None
        if not np.all(np.isfinite(out)):
            bad = arr.flat[int(np.flatnonzero(~np.isfinite(out))[0])] if out.size else None
            raise DomainError("non-finite result", float(bad))
        return out

    f.expr = e
    return f


def _single_var(e: Expr) -> str:
    names = free_variables(e)
    if len(names) > 1:
        raise ExprError(f"expression has several free variables {sorted(names)}")
    return next(iter(names)) if names else "x"


def bind(e: Expr | str, slot_var: str) -> Expr:
    """Parse if needed and check that ``e`` only uses ``slot_var``."""
    if isinstance(e, str):
        e = parse(e)
    extra = free_variables(e) - {slot_var}
    if extra:
        raise ExprError(f"expected a function of {slot_var!r}, found variable(s) {sorted(extra)}")
    return e
