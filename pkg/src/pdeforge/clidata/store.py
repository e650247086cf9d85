"""Datasets, models and trajectories to and from containers."""
from __future__ import annotations

from typing import Optional

import numpy as np
import torch

from ..gridfield import BoundarySpec, Grid
from ..linsolve import MGConfig
from ..pairgen import DataPair, Dataset
from .container import Container, ContainerError, read, write
from .runconfig import RunConfig


def grid_to_dict(grid: Grid) -> dict:
    return {"n": list(grid.n), "length": list(grid.length), "bc": [b.value for b in grid.bc]}


def grid_from_dict(d: dict) -> Grid:
    return Grid(tuple(d["n"]), tuple(d["length"]), tuple(d["bc"]))


def _kind(c: Container, expected: str, path) -> None:
    kind = c.meta.get("kind")
    if kind != expected:
        raise ContainerError(f"{path}: expected a {expected} container, found {kind!r}")


def dataset_container(ds: Dataset, config: Optional[RunConfig] = None) -> Container:
    shape = (len(ds.pairs), *ds.grid.shape)
    sol = ds.solutions() if ds.pairs else np.zeros(shape)
    rhs = ds.rhs() if ds.pairs else np.zeros(shape)
    meta = {
        "kind": "dataset",
        "grid": grid_to_dict(ds.grid),
        "dataset": ds.meta,
        "pairs": [p.meta for p in ds.pairs],
        "train": list(ds.train),
        "validation": list(ds.validation),
        "config": config.to_dict() if config else None,
    }
    return Container({"solution": sol, "rhs": rhs}, meta)


def save_dataset(path, ds: Dataset, config: Optional[RunConfig] = None) -> None:
    write(path, dataset_container(ds, config))


def load_dataset(path) -> Dataset:
    c = read(path)
    _kind(c, "dataset", path)
    for name in ("solution", "rhs"):
        if name not in c.arrays:
            raise ContainerError(f"{path}: missing array {name!r}")
    try:
        grid = grid_from_dict(c.meta["grid"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"{path}: bad grid record ({exc})") from None
    sol, rhs = c["solution"], c["rhs"]
    if sol.shape != rhs.shape or sol.shape[1:] != grid.shape:
        raise ContainerError(f"{path}: array 'solution' {sol.shape} / 'rhs' {rhs.shape} do not match grid {grid.shape}")
    metas = c.meta.get("pairs") or [{} for _ in range(len(sol))]
    bc = BoundarySpec.from_grid(grid)
    pairs = [DataPair(np.array(s), np.array(r), bc, m) for s, r, m in zip(sol, rhs, metas)]
    return Dataset(grid, pairs, list(c.meta.get("train", [])), list(c.meta.get("validation", [])),
                   c.meta.get("dataset", {}))


def save_model(path, model: torch.nn.Module, config: Optional[RunConfig] = None, extra: Optional[dict] = None) -> None:
    arrays = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()}
    meta = {"kind": "model", "arch": model.arch, "config": config.to_dict() if config else None}
    meta.update(extra or {})
    write(path, Container(arrays, meta))


def build_model(arch: dict) -> torch.nn.Module:
    from ..learned import LearnedMG, PoissonNN

    kind = arch.get("kind")
    if kind == "poisson_nn":
        return PoissonNN(arch["n"], arch["length"], arch["kernel_net"], arch["boundary_net"])
    if kind == "learned_mg":
        grid = Grid(tuple(arch["n"]), tuple(arch["length"]))
        cfg = MGConfig(arch["levels"], arch["pre_sweeps"], arch["post_sweeps"], arch["omega"], arch["coarse_sweeps"])
        return LearnedMG(grid, arch["variant"], cfg, arch["smoother_size"], arch["channels"], arch["input_scale"])
    raise ContainerError(f"unknown model kind {kind!r}")


def load_model(path) -> torch.nn.Module:
    c = read(path)
    _kind(c, "model", path)
    try:
        model = build_model(c.meta["arch"])
    except KeyError as exc:
        raise ContainerError(f"{path}: architecture record lacks {exc}") from None
    state = model.state_dict()
    for name, ref in state.items():
        if name not in c.arrays:
            raise ContainerError(f"{path}: missing parameter array {name!r}")
        if tuple(c[name].shape) != tuple(ref.shape):
            raise ContainerError(f"{path}: parameter {name!r} has shape {c[name].shape}, expected {tuple(ref.shape)}")
    model.load_state_dict({k: torch.as_tensor(np.array(c[k], dtype=np.float64)) for k in state})
    return model


def save_trajectory(path, traj, config: Optional[RunConfig] = None) -> None:
    states = traj.states
    grid = states[0].grid
    arrays = {
        "u": np.stack([s.u for s in states]),
        "p": np.stack([s.p for s in states]),
        "t": np.asarray(traj.times, dtype=float),
    }
    meta = {"kind": "trajectory", "grid": grid_to_dict(grid), "steps": [s.step for s in states],
            "dt": states[0].dt, "Re": states[0].Re, "error": traj.error,
            "config": config.to_dict() if config else None}
    write(path, Container(arrays, meta))


def load_trajectory(path) -> Container:
    c = read(path)
    _kind(c, "trajectory", path)
    return c


def write_rows(path_or_file, header, rows) -> None:
    """RFC-4180 CSV with full-precision floats."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return "%.17g" % v
        s = str(v)
        return '"' + s.replace('"', '""') + '"' if any(ch in s for ch in ',"\n') else s

    lines = [",".join(fmt(h) for h in header)] + [",".join(fmt(v) for v in row) for row in rows]
    text = "\r\n".join(lines) + "\r\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
