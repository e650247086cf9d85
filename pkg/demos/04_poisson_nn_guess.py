# %% [markdown]
# A trained Poisson network as a warm start
#
# The network learns a Green's-function-like kernel from 50 synthesized pairs.
# Its prediction then seeds BiCGSTAB inside a forced (Kolmogorov) flow, and we
# count iterations against the usual warm start from the previous step's
# pressure. A 64^2 grid keeps this to a few minutes; the
# acceptance suite runs the full-size version.

# %%
import numpy as np

from pdeforge import Grid
from pdeforge import nsprojection as ns
from pdeforge.learned import PoissonNN, Schedule, train
from pdeforge.pairgen import generate_dataset

grid = Grid.periodic(64, 2)
ds = generate_dataset("spectrum", 50, grid, seed=0)
model, curves = train(PoissonNN(grid.n, grid.length), ds, Schedule(epochs=2000), log_every=0)
print("final training L_p:", round(curves.loss_p[-1], 5), " validation L_p:", round(curves.val_loss_p[-1], 5))

# %%
case = ns.CaseConfig("I", n=64, kappa=8)
probes = {"prev": ns.BiCGSTABSolver(name="prev"),
          "nn": ns.BiCGSTABSolver(guess=model.predict, name="nn")}
traj = ns.run_case(case, ns.FFTSolver(), 30, seed=1, reference=ns.FFTSolver(), probes=probes, spinup=100)
col = lambda key: np.array([m[key] for m in traj.metrics])
print("mean BiCGSTAB iterations: previous-step guess", col("prev_iters").mean(), " network guess", col("nn_iters").mean())
print("network pressure error (median)", np.median(col("nn_error")).round(6),
      " vs step-to-step pressure change (median)", np.median(col("p_change")).round(6))
