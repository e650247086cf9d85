# %% [markdown]
# Projection method on the Taylor-Green vortex
#
# The vortex decays as exp(-2t/Re) in velocity, so its kinetic energy decays
# as exp(-4t/Re). We step it with the exact FFT pressure solve and compare.

# %%
import math

import numpy as np

from pdeforge import Grid
from pdeforge import nsprojection as ns

Re, T = 100.0, 0.5


def run(dt, n=64):
    g = Grid.periodic(n, 2)
    u, p = ns.taylor_green(g, 0.0, Re)
    state = ns.ProjectionState(g, u, None, p, 0.0, dt, Re)
    return g, u, ns.run(state, ns.FFTSolver(), int(round(T / dt))).final


g, u0, final = run(1e-3)
print("KE(t=0.5) / exp(-4t/Re) * KE(0) - 1 =", final.kinetic_energy() / (0.25 * math.exp(-4 * T / Re)) - 1)

# %% [markdown]
# Time accuracy. Compare against the exact solution of the spatially discrete
# system so that only the time stepping error is left; halving dt should cut
# it by four.

# %%
h = g.spacing[0]
lam = -2 * (2 - 2 * math.cos(h)) / h**2
prev = None
for dt in (0.1, 0.05, 0.025, 0.0125):
    _, u0, final = run(dt)
    exact = u0 * math.exp(lam * T / Re)
    err = np.linalg.norm(final.u - exact) / np.linalg.norm(exact)
    print(f"dt {dt:<7} error {err:.3e}" + (f"  ratio {prev / err:.3f}" if prev else ""))
    prev = err
