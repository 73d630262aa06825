"""Ensemble runs: simulate many paths, aggregate growth ratios at the
checkpoints, and turn the aggregates into pass/fail verdicts.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, RunConfig, format_config
from .hypotheses import (FAILS, HOLDS, ConditionReport, check_all, check_T52, format_report_table,
                         lil_scale, reports_to_csv)
from .levy import rng_stream
from .model import ModelSpec
from .quadratures import solve_mu
from .sde import ito_ledger, model_kernels, section5_ledger, simulate

KINDS = ("G/Phi", "X/mu", "J1/Phi", "J2/Phi", "J3/Phi", "J4/Phi", "B/theta", "M/lil",
         "|G/Phi-1|", "|X/mu-1|", "|J2/Phi|", "|J4/Phi|", "|M/lil|")
QUANTILES = (5, 25, 50, 75, 95)
STATS_COLUMNS = ("t", "kind", *(f"q{q:02d}" for q in QUANTILES), "mean", "stderr", "n_valid",
                 "n_flagged")

# prerequisite conditions for each verdict
PREREQ = {
    "thm41": ("I.i", "I.ii", "I.iii", "II", "III", "IV", "V", "VI", "VII"),
    "thm42": ("I.i", "I.ii", "I.iii", "II", "III", "IV", "V", "VI", "VII", "VIII"),
    "J2": ("I.i", "I.ii", "I.iii", "II", "III", "IV", "V", "VI", "VII"),
    "J4": ("I.i", "I.ii", "I.iii", "II", "III", "IV", "V", "VI", "VII"),
    "thm52": ("T52.i", "T52.ii", "T52.iii", "T52.iv"),
    "M": ("T52.ii", "T52.iii"),
}


def fmt(v) -> str:
    return "%.17g" % v


@dataclass
class PathRecord:
    """Per-checkpoint values of one path; ``flag`` is empty for usable paths."""
    index: int
    flag: str
    X: np.ndarray
    G: np.ndarray
    J: np.ndarray
    f: np.ndarray | None = None
    W: np.ndarray | None = None
    J57: np.ndarray | None = None


@dataclass
class EnsembleStats:
    times: np.ndarray
    table: dict[str, np.ndarray]  # kind -> (n_checkpoints, 8) q05..q95, mean, stderr
    n_valid: int
    n_flagged: int
    flag_reasons: dict[str, int] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.n_valid + self.n_flagged

    def column(self, kind: str, stat: str = "q50") -> np.ndarray:
        names = [c for c in STATS_COLUMNS[2:-2]]
        return self.table[kind][:, names.index(stat)]

    @property
    def flagged_fraction(self) -> float:
        return self.n_flagged / self.n_paths if self.n_paths else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for i, t in enumerate(self.times):
            for kind in KINDS:
                row = self.table[kind][i]
                w.writerow([fmt(t), kind, *(fmt(v) for v in row), self.n_valid, self.n_flagged])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EnsembleStats":
        rows = list(csv.DictReader(io.StringIO(text)))
        times = sorted({float(r["t"]) for r in rows})
        pos = {t: i for i, t in enumerate(times)}
        table = {k: np.full((len(times), 7), np.nan) for k in KINDS}
        nv = nf = 0
        for r in rows:
            table[r["kind"]][pos[float(r["t"])]] = [float(r[c]) for c in STATS_COLUMNS[2:-2]]
            nv, nf = int(r["n_valid"]), int(r["n_flagged"])
        return cls(np.array(times), table, nv, nf)


@dataclass
class Verdict:
    name: str
    passed: bool
    scope: str  # "within theorem scope" | "outside theorem scope" | "unverified scope" | "invalid"
    detail: str

    @property
    def label(self) -> str:
        return "pass" if self.passed else "fail"


@dataclass
class EnsembleResult:
    config: RunConfig
    stats: EnsembleStats
    reports: list[ConditionReport]
    verdicts: list[Verdict]
    records: list[PathRecord]
    invalid_reason: str | None = None

    @property
    def warning(self) -> str | None:
        frac = self.stats.flagged_fraction
        if frac > self.config["tol.flag_warn"]:
            return f"WARNING: {frac:.1%} of paths flagged ({_dominant(self.stats.flag_reasons)})"
        return None

    def exit_code(self) -> int:
        if self.invalid_reason:
            return 1
        for v in self.verdicts:
            if not v.passed and v.scope != "outside theorem scope":
                return 1
        return 0


def _dominant(reasons: dict[str, int]) -> str:
    if not reasons:
        return "none"
    k = max(sorted(reasons), key=lambda r: reasons[r])
    return f"mostly {k}"


# ---------------------------------------------------------------------------
# Per-path work

def _one_path(model: ModelSpec, cfg: RunConfig, cks: np.ndarray, i: int, s5: bool):
    path = simulate(model, cfg["run.step"], (cfg["run.seed"], i), cfg["run.wiener_resolution"])
    led = ito_ledger(path, model, cks)
    rec = PathRecord(i, "" if path.status == "ok" else path.status, led.X, led.G, led.J)
    if s5 and not rec.flag:
        l5 = section5_ledger(path, model, cks)
        rec.f, rec.W, rec.J57 = l5.f, l5.W, l5.J
    return rec


def _prepare(model: ModelSpec, cks, s5: bool):
    """Tabulate everything the workers share, then freeze it."""
    model_kernels(model)
    model.G.query(1e12)
    model.Phi.values(np.asarray(cks))
    _ = model.kappa
    if s5:
        model.B.query(1e12)
    from .sde import _table
    _table(model, "G")
    if s5:
        _table(model, "B")
    model.freeze()


def run_paths(model: ModelSpec, cfg: RunConfig, cks, s5: bool) -> list[PathRecord]:
    n = cfg["run.n_paths"]
    workers = cfg["run.workers"] or (os.cpu_count() or 1)
    cks = np.asarray(cks, float)
    _prepare(model, cks, s5)
    if workers <= 1:
        return [_one_path(model, cfg, cks, i, s5) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: _one_path(model, cfg, cks, i, s5), range(n)))


# ---------------------------------------------------------------------------
# Aggregation

def _summary(vals: np.ndarray) -> np.ndarray:
    """q05..q95, mean, stderr over the finite entries of each column."""
    out = np.full((vals.shape[1], 7), np.nan)
    for j in range(vals.shape[1]):
        v = vals[:, j]
        v = v[np.isfinite(v)]
        if v.size:
            out[j, :5] = np.percentile(v, QUANTILES)
            out[j, 5] = np.mean(v)
            out[j, 6] = np.std(v, ddof=1) / math.sqrt(v.size) if v.size > 1 else np.nan
    return out


def aggregate(model: ModelSpec, records: list[PathRecord], cks, lil_martingale: str = "J7"
              ) -> EnsembleStats:
    cks = np.asarray(cks, float)
    good = [r for r in records if not r.flag]
    reasons = Counter(r.flag for r in records if r.flag)
    phi = model.Phi.values(cks)
    sol = solve_mu(model, cks)
    mu = np.full(cks.size, np.nan)
    mu[: sol.mu.size] = sol.mu[: cks.size]
    n = len(good)
    nan = np.full((n, cks.size), np.nan)
    if n:
        X = np.array([r.X for r in good])
        G = np.array([r.G for r in good])
        J = np.array([r.J for r in good])
    else:
        X = G = nan
        J = np.full((0, cks.size, 4), np.nan)
    with np.errstate(all="ignore"):
        gr = G / phi
        xr = X / mu
        jr = [J[:, :, q] / phi for q in range(4)] if n else [nan] * 4
        if n and good[0].f is not None:
            f = np.array([r.f for r in good])
            mart = np.array([r.W if lil_martingale == "W" else r.J57[:, 2] for r in good])
            brat = f
            scale = np.where(cks >= 16, np.sqrt(2 * cks * np.log(np.log(np.maximum(cks, 16)))),
                             np.nan)
            mrat = mart / scale
        else:
            brat = mrat = nan
    table = {
        "G/Phi": gr, "X/mu": xr, "J1/Phi": jr[0], "J2/Phi": jr[1], "J3/Phi": jr[2],
        "J4/Phi": jr[3], "B/theta": brat, "M/lil": mrat, "|G/Phi-1|": np.abs(gr - 1),
        "|X/mu-1|": np.abs(xr - 1), "|J2/Phi|": np.abs(jr[1]), "|J4/Phi|": np.abs(jr[3]),
        "|M/lil|": np.abs(mrat),
    }
    table = {k: _summary(v) for k, v in table.items()}
    return EnsembleStats(cks, table, n, len(records) - n, dict(sorted(reasons.items())))


# ---------------------------------------------------------------------------
# Verdicts

def _scope(name: str, reports) -> str:
    by = {r.cid: r.verdict for r in reports}
    need = [by.get(c) for c in PREREQ.get(name, ())]
    if any(v == FAILS for v in need):
        return "outside theorem scope"
    if all(v == HOLDS for v in need):
        return "within theorem scope"
    return "unverified scope"


def _shrinking(m: np.ndarray, tol: float, k: int = 3) -> tuple[bool, str]:
    tail = m[-k:]
    # an identically zero tail (no noise of that kind) counts as shrinking
    dec = bool(np.all(np.isfinite(tail)) and (np.all(np.diff(tail) < 0) or np.all(tail == 0)))
    ok = bool(np.isfinite(m[-1]) and m[-1] <= tol and dec)
    return ok, f"final median {m[-1]:.6g} (tol {tol:g}), decreasing over last {k}: {dec}"


def verdict(stats: EnsembleStats, cfg: RunConfig, reports=(), requested=None) -> list[Verdict]:
    """Verdicts from the aggregated medians; ``requested`` selects which to produce."""
    s5 = cfg["run.section5"]
    if requested is None:
        spec = cfg["run.verdicts"]
        if spec == "auto":
            requested = ["thm41", "thm42", "J2", "J4"] + (["thm52", "M"] if s5 else [])
        else:
            requested = [p.strip() for p in spec.split(",") if p.strip()]
    out = []
    for name in requested:
        if name == "thm41":
            ok, d = _shrinking(stats.column("|G/Phi-1|"), cfg["tol.ratio"])
        elif name == "thm42":
            ok, d = _shrinking(stats.column("|X/mu-1|"), cfg["tol.mu_ratio"])
        elif name in ("J2", "J4"):
            ok, d = _shrinking(stats.column(f"|{name}/Phi|"), cfg["tol.martingale"])
        elif name == "M":
            ok, d = _shrinking(stats.column("|M/lil|"), cfg["tol.martingale"])
        elif name == "thm52":
            m = stats.column("B/theta")[-4:]
            inc = bool(np.all(np.isfinite(m)) and np.all(np.diff(m) > 0))
            factor = m[-1] / m[0] if m.size == 4 and m[0] > 0 else float("nan")
            ok = inc and factor >= cfg["tol.growth_factor"] and m[-1] >= cfg["tol.growth_floor"]
            d = (f"median B/theta increasing over last 4: {inc}, growth factor {factor:.6g} "
                 f"(need {cfg['tol.growth_factor']:g}), final {m[-1]:.6g}")
        else:
            raise ConfigError(f"unknown verdict {name!r}")
        out.append(Verdict(name, bool(ok), _scope(name, reports), d))
    return out


# ---------------------------------------------------------------------------
# Driver

def condition_reports(model: ModelSpec, cfg: RunConfig) -> list[ConditionReport]:
    probe = cfg.probe()
    reports = check_all(model, probe)
    if cfg["run.section5"]:
        reports += check_T52(model, probe)
    return reports


def run_ensemble(cfg: RunConfig, reports=None) -> EnsembleResult:
    model = cfg.model()
    cks = cfg.checkpoints()
    if reports is None:
        reports = condition_reports(model, cfg)
    by = {r.cid: r for r in reports}
    failed_I = [c for c in ("I.i", "I.ii", "I.iii") if c in by and by[c].verdict == FAILS]
    if failed_I and not cfg["run.waive_condition_I"]:
        raise ConfigError(f"condition {', '.join(failed_I)} fails; set run.waive_condition_I = "
                          "true to simulate anyway")
    s5 = cfg["run.section5"]
    records = run_paths(model, cfg, cks, s5)
    stats = aggregate(model, records, cks, cfg["run.lil_martingale"])
    invalid = None
    if stats.flagged_fraction > cfg["tol.flag_invalid"]:
        invalid = f"{stats.flagged_fraction:.1%} of paths flagged, {_dominant(stats.flag_reasons)}"
        verdicts = [Verdict(v.name, False, "invalid", invalid)
                    for v in verdict(stats, cfg, reports)]
    else:
        verdicts = verdict(stats, cfg, reports)
    return EnsembleResult(cfg, stats, reports, verdicts, records, invalid)


def path_csv(rec: PathRecord, cks, model: ModelSpec) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["t", "X", "G", "Phi", "J1", "J2", "J3", "J4"]
    s5 = rec.f is not None
    if s5:
        cols += ["f", "W", "J5", "J6", "J7"]
    w.writerow(cols)
    phi = model.Phi.values(np.asarray(cks, float))
    for i, t in enumerate(cks):
        row = [t, rec.X[i], rec.G[i], phi[i], *rec.J[i]]
        if s5:
            row += [rec.f[i], rec.W[i], *rec.J57[i]]
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def render_summary(stats: EnsembleStats, reports, verdicts, invalid=None, warning=None) -> str:
    lines = []
    if invalid:
        lines.append(f"RUN INVALID: {invalid}")
    if warning:
        lines.append(warning)
    lines.append(f"paths: {stats.n_paths} (valid {stats.n_valid}, flagged {stats.n_flagged})")
    lines.append("")
    lines.append("conditions")
    lines.append(format_report_table(reports).rstrip())
    lines.append("")
    lines.append("median ratios")
    kinds = ("G/Phi", "X/mu", "J1/Phi", "J2/Phi", "J3/Phi", "J4/Phi", "B/theta", "M/lil")
    lines.append("t".rjust(10) + "".join(k.rjust(14) for k in kinds))
    for i, t in enumerate(stats.times):
        lines.append(f"{t:10g}" + "".join(f"{stats.column(k)[i]:14.6g}" for k in kinds))
    lines.append("")
    lines.append("verdicts")
    for v in verdicts:
        lines.append(f"{v.name:6s}  {v.label:4s}  [{v.scope}]  {v.detail}")
    return "\n".join(lines) + "\n"


def write_outputs(result: EnsembleResult, out_dir: str, save_paths: bool | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    _write(os.path.join(out_dir, "config.txt"), format_config(cfg))
    _write(os.path.join(out_dir, "stats.csv"), result.stats.to_csv())
    _write(os.path.join(out_dir, "conditions.csv"), reports_to_csv(result.reports))
    _write(os.path.join(out_dir, "summary.txt"),
           render_summary(result.stats, result.reports, result.verdicts, result.invalid_reason,
                          result.warning))
    if save_paths if save_paths is not None else cfg["run.save_paths"]:
        pdir = os.path.join(out_dir, "paths")
        os.makedirs(pdir, exist_ok=True)
        model = cfg.model()
        cks = cfg.checkpoints()
        for rec in result.records:
            _write(os.path.join(pdir, f"{rec.index}.csv"), path_csv(rec, cks, model))


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Law of the iterated logarithm calibration

def wiener_lil_probe(n_paths: int, checkpoints, seed: int = 0) -> np.ndarray:
    """Median of ``|W(t)| / sqrt(2 t ln ln t)`` at each checkpoint ``t >= 16``.

    ``W`` is sampled exactly at the checkpoints from independent Gaussian
    increments; one probe stream per path.
    """
    cks = np.asarray(checkpoints, float)
    if np.any(cks < 16):
        raise ValueError("checkpoints must be >= 16")
    dt = np.diff(np.concatenate([[0.0], cks]))
    W = np.empty((n_paths, cks.size))
    for p in range(n_paths):
        W[p] = np.cumsum(np.sqrt(dt) * rng_stream(seed, p, "probe").standard_normal(cks.size))
    return np.median(np.abs(W) / lil_scale(cks), axis=0)
