"""Run configuration: a line-oriented ``section.key = value`` text format.

Expression values are double-quoted; numeric values may be written as
constant expressions (``2^-6``).  ``#`` starts a comment.  Unknown sections
or keys are errors.  :func:`format_config` writes every key, so parsing its
output reproduces the configuration exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .exprlang import ExprError, evaluate, free_variables, parse
from .hypotheses import ProbeConfig
from .levy import LevyMeasure, MeasureError
from .model import ModelSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# type codes: expr, str, float, ofloat (float or "none"), int, bool, floats, atoms
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "model": {
        "name": ("str", "model"),
        "g": ("expr", "(1+x^2)^0.25"),
        "sigma": ("expr", "0.2*(1+x^2)^0.25"),
        "c": ("expr", "0.5"),
        "phi": ("expr", "1"),
        "theta": ("expr", "1"),
        "gamma": ("expr", "u"),
        "x0": ("float", 1.0),
        "b": ("float", 0.0),
        "cutoff": ("float", 1.0),
        "horizon": ("float", 2.0**13),
        "quad_tol": ("float", 1e-9),
    },
    "measure": {
        "family": ("str", "uniform"),
        "low": ("float", -1.0),
        "high": ("float", 1.0),
        "mass": ("float", 1.0),
        "scale": ("float", 1.0),
        "atoms": ("atoms", ()),
        "density": ("expr", ""),
        "bound": ("float", 0.0),
    },
    "run": {
        "n_paths": ("int", 256),
        "step": ("float", 2.0**-6),
        "wiener_resolution": ("ofloat", None),
        "seed": ("int", 0),
        "workers": ("int", 1),
        "checkpoints": ("str", "dyadic:4:13"),
        "section5": ("bool", False),
        "lil_martingale": ("str", "J7"),
        "save_paths": ("bool", False),
        "waive_condition_I": ("bool", False),
        "verdicts": ("str", "auto"),
    },
    "tol": {
        "ratio": ("float", 0.1),
        "mu_ratio": ("float", 0.15),
        "martingale": ("float", 0.05),
        "growth_factor": ("float", 2.0),
        "growth_floor": ("float", 1.0),
        "flag_warn": ("float", 0.1),
        "flag_invalid": ("float", 0.5),
    },
    "probe": {
        "x_lo": ("ofloat", None),
        "x_hi": ("ofloat", None),
        "x_doublings": ("int", 40),
        "t_doublings": ("int", 40),
        "samples": ("int", 2000),
        "viii_c": ("floats", (0.5, 2.0, 10.0)),
        "window_lo": ("ofloat", None),
        "window_hi": ("ofloat", None),
        "k_max": ("int", 40),
        "t52_doublings": ("int", 13),
        "seed": ("int", 0),
    },
    "output": {
        "dir": ("str", "run"),
    },
}

EXPR_VARS = {"g": "x", "sigma": "x", "c": "x", "phi": "t", "theta": "t", "gamma": "u",
             "density": "u"}


def _number(text: str, line: int | None) -> float:
    try:
        e = parse(text)
    except ExprError as exc:
        raise ConfigError(f"bad number {text!r}: {exc}", line) from None
    if free_variables(e):
        raise ConfigError(f"number {text!r} must not contain variables", line)
    return float(evaluate(e))


def _unquote(text: str, line) -> str:
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    raise ConfigError(f"expression values must be double-quoted: {text}", line)


def _convert(kind: str, text: str, line: int | None, key: str):
    if kind == "expr":
        s = _unquote(text, line)
        if s:
            try:
                e = parse(s)
            except ExprError as exc:
                raise ConfigError(f"{key}: {exc}", line) from None
            extra = free_variables(e) - {EXPR_VARS.get(key.split(".")[-1], "x")}
            if extra:
                raise ConfigError(f"{key}: unexpected variable(s) {sorted(extra)}", line)
        return s
    if kind == "str":
        return text[1:-1] if len(text) >= 2 and text[0] == text[-1] == '"' else text
    if kind == "float":
        return _number(text, line)
    if kind == "ofloat":
        return None if text.lower() == "none" else _number(text, line)
    if kind == "int":
        v = _number(text, line)
        if v != int(v):
            raise ConfigError(f"{key} must be an integer", line)
        return int(v)
    if kind == "bool":
        low = text.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"{key} must be true or false", line)
        return low == "true"
    if kind == "floats":
        return tuple(_number(p.strip(), line) for p in text.split(",") if p.strip())
    if kind == "atoms":
        s = text[1:-1] if text.startswith('"') else text
        out = []
        for item in filter(None, (p.strip() for p in s.split(","))):
            loc, sep, mass = item.partition(":")
            if not sep:
                raise ConfigError(f"atom {item!r} must be location:mass", line)
            out.append((_number(loc.strip(), line), _number(mass.strip(), line)))
        return tuple(out)
    raise AssertionError(kind)


def _render(kind: str, v) -> str:
    if kind == "expr":
        return f'"{v}"'
    if kind == "str":
        return str(v)
    if kind in ("float", "ofloat"):
        return "none" if v is None else repr(float(v))
    if kind == "int":
        return str(int(v))
    if kind == "bool":
        return "true" if v else "false"
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "atoms":
        return '"' + ", ".join(f"{a!r}:{m!r}" for a, m in v) + '"'
    raise AssertionError(kind)


@dataclass
class RunConfig:
    values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        full = {f"{s}.{k}": d for s, keys in SCHEMA.items() for k, (_, d) in keys.items()}
        for k in self.values:
            if k not in full:
                raise ConfigError(f"unknown key {k}")
        full.update(self.values)
        self.values = full

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **updates) -> "RunConfig":
        """Copy with ``section__key=value`` overrides."""
        v = dict(self.values)
        for k, val in updates.items():
            key = k.replace("__", ".", 1)
            if key not in v:
                raise ConfigError(f"unknown key {key}")
            v[key] = val
        return RunConfig(v)

    # -- derived objects ---------------------------------------------------
    def measure(self) -> LevyMeasure:
        v = self.values
        try:
            return LevyMeasure(
                v["measure.family"], cutoff=v["model.cutoff"], low=v["measure.low"],
                high=v["measure.high"], mass=v["measure.mass"], scale=v["measure.scale"],
                atoms=v["measure.atoms"], density=v["measure.density"] or None,
                bound=v["measure.bound"])
        except MeasureError as exc:
            raise ConfigError(str(exc)) from None

    def model(self) -> ModelSpec:
        v = self.values
        return ModelSpec(v["model.g"], v["model.sigma"], v["model.c"], v["model.phi"],
                         v["model.theta"], v["model.gamma"], self.measure(), x0=v["model.x0"],
                         b=v["model.b"], horizon=v["model.horizon"],
                         quad_tol=v["model.quad_tol"], name=v["model.name"])

    def probe(self) -> ProbeConfig:
        p = {k.split(".", 1)[1]: val for k, val in self.values.items() if k.startswith("probe.")}
        p["viii_c"] = tuple(p["viii_c"])
        return ProbeConfig(**p)

    def checkpoints(self) -> list[float]:
        spec = str(self.values["run.checkpoints"]).strip()
        T = self.values["model.horizon"]
        if spec.startswith("dyadic"):
            parts = spec.split(":")
            try:
                lo = int(parts[1]) if len(parts) > 1 else 0
                hi = int(parts[2]) if len(parts) > 2 else int(math.floor(math.log2(T)))
            except ValueError:
                raise ConfigError(f"bad checkpoint policy {spec!r}") from None
            pts = [2.0**k for k in range(lo, hi + 1) if 2.0**k <= T]
        else:
            pts = sorted(_number(p.strip(), None) for p in spec.split(",") if p.strip())
        if not pts or any(p <= 0 or p > T for p in pts):
            raise ConfigError(f"checkpoints must lie in (0, T]: {spec!r}")
        step = self.values["run.step"]
        for p in pts:
            n = p / step
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ConfigError(f"checkpoint {p!r} is not a multiple of the step")
        return pts


def parse_config(text: str) -> RunConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'section.key = value': {raw.strip()}", lineno)
        key, val = key.strip(), val.strip()
        section, dot, name = key.partition(".")
        if not dot or section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        values[key] = _convert(SCHEMA[section][name][0], val, lineno, key)
    return RunConfig(values)


def _strip_comment(line: str) -> str:
    inside = False
    for i, ch in enumerate(line):
        if ch == '"':
            inside = not inside
        elif ch == "#" and not inside:
            return line[:i]
    return line


def format_config(cfg: RunConfig) -> str:
    out = []
    for section, keys in SCHEMA.items():
        for name, (kind, _) in keys.items():
            out.append(f"{section}.{name} = {_render(kind, cfg.values[f'{section}.{name}'])}")
        out.append("")
    return "\n".join(out)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_for_model(model: ModelSpec, **run) -> RunConfig:
    """Configuration reproducing a catalog model, with ``section__key`` overrides."""
    nu = model.measure
    s = model.strings()
    v = {
        "model.name": model.name or "model", "model.g": s["g"], "model.sigma": s["sigma"],
        "model.c": s["c"], "model.phi": s["phi"], "model.theta": s["theta"],
        "model.gamma": s["gamma"], "model.x0": model.x0, "model.b": model.b,
        "model.cutoff": nu.cutoff, "model.horizon": model.horizon,
        "model.quad_tol": model.quad_tol, "measure.family": nu.family, "measure.low": nu.low,
        "measure.high": nu.high, "measure.mass": nu.mass, "measure.scale": nu.scale,
        "measure.atoms": tuple(nu.atoms), "measure.bound": nu.bound,
        "measure.density": "" if nu.density is None else str(nu.density),
    }
    return RunConfig(v).replace(**run)
