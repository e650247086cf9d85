# %% [markdown]
# Random fields and their spectra
#
# Two generators feed everything else: a Matern Gaussian random field and a
# spectrum-constrained Fourier-mode synthesis. Here we draw a few of each and
# check them against what they were asked for.

# %%
import numpy as np

from pdeforge import Grid, estimate_spectrum
from pdeforge import fieldgen as fg
from pdeforge.gridfield import divergence

grid = Grid.periodic(128, 2)

# %% [markdown]
# A Matern field with sigma^2 = 1: the pointwise variance over an ensemble
# should sit near 1 everywhere.

# %%
params = fg.MaternParams(lam=0.1, nu=1.5, sigma2=1.0)
ens = np.stack([fg.sample_grf(grid, params, seed=s) for s in range(40)])
print("ensemble variance, mean over grid:", ens.var(axis=0).mean().round(3))

# %% [markdown]
# Spectrum-constrained synthesis with E(k) = 0.5 k^(-7/3). Averaging the
# shell spectra of 50 samples recovers the slope.

# %%
target = fg.PowerLaw()
fields = [fg.synth_scalar_field(grid, target, 512, 0, key=(i,)) for i in range(50)]
E = np.mean([estimate_spectrum(f, grid).energy for f in fields], axis=0)
k = np.arange(1, len(E) + 1)
band = (k >= 6) & (k <= 32)
print("fitted slope over 6 <= k <= 32:", np.polyfit(np.log(k[band]), np.log(E[band]), 1)[0].round(3))
for kk in (6, 12, 24):
    print(f"  k={kk:2d}  measured {E[kk - 1]:.3e}  target {target(np.array(kk)):.3e}")

# %% [markdown]
# Velocity fields. The curl of a GRF stream function is divergence free to
# roundoff on the staggered grid; a synthesized von Karman-Pao field is
# solenoidal mode by mode, so its discrete divergence is pure truncation.

# %%
u = fg.grf_velocity(grid, params, seed=1)
print("curl field   max |div u| =", np.abs(divergence(u, grid)).max())
v = fg.synth_vector_field(grid, fg.vkp_spectrum(), 256, seed=1)
print("VKP field    max |div u| =", np.abs(divergence(v, grid)).max().round(3),
      " (max |u| =", np.abs(v).max().round(3), ")")
