"""Training pairs built forward: pick the solution, compute the source.

Poisson pairs take a generated pressure ``p`` and set ``b = A p`` with the
same discrete operator the solvers use. Momentum pairs take two velocity
states and return the forcing that makes them consecutive steps of the
projection scheme's predictor.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fieldgen
from .gridfield import BoundarySpec, Grid, apply_boundary, smooth_preserving_boundary
from .linsolve import LaplaceOperator, apply_laplacian

log = logging.getLogger(__name__)

GRF_RANGES = {"lam": (0.05, 0.1), "nu": (0.5, 3.0), "sigma2": (0.01, 3.0)}


@dataclass
class DataPair:
    solution: np.ndarray
    rhs: np.ndarray
    bc: BoundarySpec
    meta: dict = field(default_factory=dict)


@dataclass
class Dataset:
    grid: Grid
    pairs: list
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)

    def solutions(self, idx=None) -> np.ndarray:
        idx = range(len(self.pairs)) if idx is None else idx
        return np.stack([self.pairs[i].solution for i in idx])

    def rhs(self, idx=None) -> np.ndarray:
        idx = range(len(self.pairs)) if idx is None else idx
        return np.stack([self.pairs[i].rhs for i in idx])


def make_poisson_pair(
    p: np.ndarray,
    grid: Grid,
    bc: Optional[BoundarySpec] = None,
    smooth_iters: int = 0,
    meta: Optional[dict] = None,
) -> DataPair:
    """Impose ``bc`` on ``p``, optionally smooth, then set ``rhs = A p``.

    On all-periodic grids the solution is made zero-mean first, which pins
    the constant null space of the periodic Laplacian.
    """
    bc = bc or BoundarySpec.from_grid(grid)
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("solution field has non-finite entries")
    p = apply_boundary(p, grid, bc)
    p = smooth_preserving_boundary(p, grid, bc, smooth_iters)
    if grid.all_periodic:
        p = p - p.mean()
    rhs = apply_laplacian(LaplaceOperator(grid), p)
    return DataPair(p, rhs, bc, dict(meta or {}))


def _grf_sample(grid, seed, i):
    rng = fieldgen.rng_for(seed, i, 1)
    draw = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in GRF_RANGES.items()}
    params = fieldgen.MaternParams(**draw)
    p = fieldgen.sample_grf(grid, params, seed, key=(i, 0))
    return p, {"method": "grf", "seed": seed, "index": i, **draw}


def _spectrum_sample(grid, seed, i, spectrum, M):
    p = fieldgen.synth_scalar_field(grid, spectrum, M, seed, key=(i, 0))
    return p, {"method": "spectrum", "seed": seed, "index": i, "M": M, "spectrum": spectrum.describe()}


def worker_count() -> int:
    env = os.environ.get("PDEFORGE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def generate_dataset(
    method: str,
    count: int,
    grid: Grid,
    seed: int = 0,
    spectrum: Optional[fieldgen.SpectrumModel] = None,
    M: int = 512,
    smooth_iters: int = 0,
    validation_fraction: float = 0.1,
) -> Dataset:
    """Generate ``count`` Poisson pairs.

    ``grf``: per-sample Matern parameters lam ~ U(0.05, 0.1), nu ~ U(0.5, 3),
    sigma2 ~ U(0.01, 3). ``spectrum``: fixed target spectrum (default
    ``0.5 |k|^(-7/3)`` held flat below |k| = 6), fresh phases and angles per
    sample. Sample ``i`` depends only on ``(seed, i)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    bc = BoundarySpec.from_grid(grid)
    if method == "grf":
        make = lambda i: _grf_sample(grid, seed, i)
    elif method == "spectrum":
        spectrum = spectrum or fieldgen.PowerLaw()
        make = lambda i: _spectrum_sample(grid, seed, i, spectrum, M)
    else:
        raise ValueError(f"unknown generation method {method!r}")

    def build(i):
        p, meta = make(i)
        return make_poisson_pair(p, grid, bc, smooth_iters, meta)

    workers = min(worker_count(), count)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            pairs = list(ex.map(build, range(count)))
    else:
        pairs = [build(i) for i in range(count)]
    n_val = int(round(validation_fraction * count)) if count > 1 else 0
    train = list(range(count - n_val))
    val = list(range(count - n_val, count))
    meta = {"method": method, "count": count, "seed": seed, "M": M, "smooth_iters": smooth_iters}
    if spectrum is not None:
        meta["spectrum"] = spectrum.describe()
    return Dataset(grid, pairs, train, val, meta)


def balance_source(
    u: np.ndarray,
    u_prev: np.ndarray,
    dt: float,
    Re: float,
    grid: Grid,
    u_prev2: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Forcing that makes ``u`` the predictor output from ``u_prev``.

    Residual of the Adams-Bashforth / Crank-Nicolson momentum step with
    ``u_prev`` as ``u^n``, ``u`` as ``u*`` and ``u_prev2`` as ``u^(n-1)``
    (defaults to ``u_prev``, the first-step start).
    """
    from .nsprojection import convection, vector_laplacian

    if dt <= 0 or Re <= 0:
        raise ValueError("dt and Re must be positive")
    if u.shape != u_prev.shape or u.shape != (grid.dim, *grid.shape):
        raise ValueError("velocity fields must share the staggered grid")
    u_prev2 = u_prev if u_prev2 is None else u_prev2
    adv = 0.5 * (3 * convection(u_prev, grid) - convection(u_prev2, grid))
    diffusion = (0.5 / Re) * (vector_laplacian(u, grid) + vector_laplacian(u_prev, grid))
    return (u - u_prev) / dt + adv - diffusion
