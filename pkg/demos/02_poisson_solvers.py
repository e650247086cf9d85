# %% [markdown]
# Poisson pairs and the classical solvers
#
# A pair is built backwards: pick a pressure field p, then b = A p with the
# same discrete operator the solvers use. The pair is consistent by
# construction, so any solver error is the solver's own.

# %%
import numpy as np

from pdeforge import Grid, LaplaceOperator, bicgstab, mg_solve
from pdeforge.pairgen import generate_dataset

grid = Grid.periodic(128, 2)
ds = generate_dataset("spectrum", 4, grid, seed=3)
op = LaplaceOperator(grid)
pair = ds.pairs[0]
print("|A p - b| =", np.linalg.norm(op(pair.solution) - pair.rhs))

# %% [markdown]
# BiCGSTAB and multigrid on the same system. The tolerance is on the relative
# residual; the solution error can be larger by up to the condition number.

# %%
for tol in (1e-6, 1e-10):
    xk, rk = bicgstab(op, pair.rhs, tol=tol)
    xm, rm = mg_solve(op, pair.rhs, tol=tol)
    err = lambda x: np.linalg.norm(x - pair.solution) / np.linalg.norm(pair.solution)
    print(f"tol {tol:.0e}: BiCGSTAB {rk.iterations:4d} it, err {err(xk):.1e} | "
          f"MG {rm.iterations:2d} cycles, err {err(xm):.1e}")

# %% [markdown]
# Multigrid converges at a rate that does not depend on the grid size.

# %%
for n in (64, 128, 256):
    g = Grid.periodic(n, 2)
    b = generate_dataset("spectrum", 1, g, seed=0).pairs[0].rhs
    _, rep = mg_solve(LaplaceOperator(g), b, tol=1e-8)
    h = np.asarray(rep.residual_history)
    print(f"{n:4d}^2: {rep.iterations} cycles, mean reduction per cycle {(h[-1] / h[0]) ** (1 / rep.iterations):.3f}")
