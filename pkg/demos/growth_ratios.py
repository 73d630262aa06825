"""Ensemble growth ratios for M1 and the power-law model.

Prints the median of |G(X)/Phi - 1| and |X/mu - 1| at each checkpoint, and
the median of X(T) / (T^2/4) for g(x) = (1+x)^(1/2).
"""
import numpy as np

from levyasym.catalog import M1, power_law
from levyasym.config import config_for_model
from levyasym.harness import run_ensemble

res = run_ensemble(config_for_model(M1(), run__n_paths=32, run__seed=1))
s = res.stats
print(f"M1, {s.n_valid} paths")
print(f"{'t':>6} {'|G/Phi-1|':>10} {'|X/mu-1|':>9} {'|J2/Phi|':>9}")
for t, a, b, c in zip(s.times, s.column("|G/Phi-1|"), s.column("|X/mu-1|"), s.column("|J2/Phi|")):
    print(f"{t:6g} {a:10.4f} {b:9.4f} {c:9.4f}")
for v in res.verdicts:
    print(f"  {v.name}: {v.label} ({v.scope})")

T = 2.0**13
res = run_ensemble(config_for_model(power_law(), run__n_paths=16, run__seed=7))
X = np.array([r.X[-1] for r in res.records if not r.flag])
print(f"\npower law: median X(T)/(T^2/4) = {np.median(X) / (T * T / 4):.4f}")
