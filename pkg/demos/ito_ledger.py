"""Simulate one M1 path and print the Ito ledger at each dyadic checkpoint.

The residual column is G(X) - G(X0) - (J1 + J2 + J3 + J4); it shrinks as the
step is halved.
"""
import numpy as np

from levyasym.catalog import M1
from levyasym.sde import ito_ledger, simulate

model = M1(horizon=2.0**10)
for step in (2.0**-4, 2.0**-6):
    path = simulate(model, step, (0, 0), resolution=2.0**-6)
    led = ito_ledger(path, model)
    print(f"step = {step:g}, {path.event_index.size} jumps, status {path.status}")
    print(f"{'t':>6} {'X':>10} {'G/Phi':>8} {'J2/Phi':>9} {'J4/Phi':>9} {'residual':>10}")
    for i, t in enumerate(led.times):
        print(f"{t:6g} {led.X[i]:10.4f} {led.G[i] / led.Phi[i]:8.4f} "
              f"{led.J[i, 1] / led.Phi[i]:9.4f} {led.J[i, 3] / led.Phi[i]:9.4f} "
              f"{led.residual[i]:10.2e}")
    print(f"max |residual| = {np.max(np.abs(led.residual)):.3e}\n")
