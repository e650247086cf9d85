"""Uniform grids, finite-difference operators, boundary handling and spectra.

Fields are plain numpy arrays. A scalar field on a grid has shape
``grid.shape``; a vector field has shape ``(grid.dim, *grid.shape)`` with the
component index leading. Array axis ``a`` is spatial axis ``a`` (``ij``
indexing).

Periodic axes store ``n`` samples at ``x_i = i*h`` with ``h = L/n``; the sample
at ``x = L`` is not stored, it is the sample at ``x = 0``.

On a staggered (MAC) grid the pressure lives at cell centres and velocity
component ``a`` on the low face of each cell along axis ``a``. With that layout
the staggered divergence is a forward difference and the staggered gradient a
backward difference, so ``divergence(gradient(p))`` is exactly the
``(1, -2, 1)/h**2`` Laplacian.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np


class BC(str, enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class Grid:
    """Rectangular uniform grid in 1, 2 or 3 dimensions."""

    n: tuple[int, ...]
    length: tuple[float, ...] | None = None
    bc: tuple[BC, ...] | None = None

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        if not 1 <= len(n) <= 3 or any(v < 1 for v in n):
            raise ValueError(f"invalid grid size {self.n}")
        length = self.length
        if length is None:
            length = (2 * math.pi,) * len(n)
        length = tuple(float(v) for v in length)
        bc = self.bc
        if bc is None:
            bc = (BC.PERIODIC,) * len(n)
        bc = tuple(BC(b) for b in bc)
        if len(length) != len(n) or len(bc) != len(n):
            raise ValueError("n, length and bc must have one entry per axis")
        if any(v <= 0 for v in length):
            raise ValueError("domain length must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)
        object.__setattr__(self, "bc", bc)

    @classmethod
    def periodic(cls, n: int, dim: int = 2, length: float = 2 * math.pi) -> "Grid":
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.length, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def all_periodic(self) -> bool:
        return all(b is BC.PERIODIC for b in self.bc)

    def coords(self, offset: Union[float, Sequence[float]] = 0.0) -> list[np.ndarray]:
        """Meshgrid of sample positions, shifted by ``offset`` cells per axis."""
        if np.isscalar(offset):
            offset = (offset,) * self.dim
        axes = [(np.arange(n) + o) * h for n, o, h in zip(self.n, offset, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def face_coords(self, axis: int) -> list[np.ndarray]:
        """Positions of staggered velocity component ``axis``."""
        return self.coords([0.0 if a == axis else 0.5 for a in range(self.dim)])

    def center_coords(self) -> list[np.ndarray]:
        return self.coords(0.5)

    def wavenumbers(self) -> list[np.ndarray]:
        """Physical wavenumber meshgrid matching ``np.fft.fftn`` ordering."""
        ks = [2 * np.pi * np.fft.fftfreq(n, d=L / n) for n, L in zip(self.n, self.length)]
        return np.meshgrid(*ks, indexing="ij")

    def coarsen(self, factor: int = 2) -> "Grid":
        if any(n % factor for n in self.n):
            raise ValueError(f"grid {self.n} not divisible by {factor}")
        return Grid(tuple(n // factor for n in self.n), self.length, self.bc)


# -- boundary conditions ----------------------------------------------------


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class Dirichlet:
    value: Union[float, np.ndarray] = 0.0


@dataclass(frozen=True)
class Neumann:
    """Outward normal derivative on the face."""

    gradient: Union[float, np.ndarray] = 0.0


Face = Union[Periodic, Dirichlet, Neumann]


@dataclass(frozen=True)
class BoundarySpec:
    """One ``(low, high)`` face pair per axis."""

    faces: tuple[tuple[Face, Face], ...]

    def __post_init__(self):
        for lo, hi in self.faces:
            if isinstance(lo, Periodic) != isinstance(hi, Periodic):
                raise ValueError("periodic faces must come in opposing pairs")

    @classmethod
    def periodic(cls, dim: int) -> "BoundarySpec":
        return cls(((Periodic(), Periodic()),) * dim)

    @classmethod
    def from_grid(cls, grid: Grid) -> "BoundarySpec":
        """Homogeneous conditions of the kind recorded in ``grid.bc``."""
        kind = {BC.PERIODIC: Periodic(), BC.DIRICHLET: Dirichlet(0.0), BC.NEUMANN: Neumann(0.0)}
        return cls(tuple((kind[b], kind[b]) for b in grid.bc))

    @property
    def all_periodic(self) -> bool:
        return all(isinstance(lo, Periodic) for lo, _ in self.faces)


def _face_data(value, shape, axis, name):
    face_shape = shape[:axis] + shape[axis + 1:]
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(face_shape, float(arr))
    if arr.shape != face_shape:
        raise ValueError(f"{name} face data on axis {axis} has shape {arr.shape}, expected {face_shape}")
    return arr


def apply_boundary(f: np.ndarray, grid: Grid, bc: BoundarySpec) -> np.ndarray:
    """Impose boundary conditions on the edge samples of a scalar field.

    Dirichlet sets the edge sample to the face value. Neumann treats the edge
    sample as a ghost half a cell outside the face and sets
    ``ghost = inner + h * dudn``. Periodic faces need no action because the
    duplicate endpoint is never stored. Axes are processed in order, so corner
    samples take the condition of the last non-periodic axis.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    if len(bc.faces) != grid.dim:
        raise ValueError("boundary spec dimension does not match grid")
    out = f.copy()
    for axis, ((lo, hi), h) in enumerate(zip(bc.faces, grid.spacing)):
        if isinstance(lo, Periodic):
            continue
        if grid.bc[axis] is BC.PERIODIC and (isinstance(lo, Neumann) or isinstance(hi, Neumann)):
            raise ValueError(f"Neumann condition on periodic axis {axis}")
        moved = np.moveaxis(out, axis, 0)
        for face, edge, inner in ((lo, 0, 1), (hi, -1, -2)):
            if isinstance(face, Dirichlet):
                moved[edge] = _face_data(face.value, f.shape, axis, "Dirichlet")
            elif isinstance(face, Neumann):
                moved[edge] = moved[inner] + h * _face_data(face.gradient, f.shape, axis, "Neumann")
    return out


def periodic_closure(f: np.ndarray) -> np.ndarray:
    """Append the ``x = L`` samples of a periodic field (copies of ``x = 0``)."""
    return np.pad(f, [(0, 1)] * f.ndim, mode="wrap")


def _interior_mask(grid: Grid) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for axis, b in enumerate(grid.bc):
        if b is not BC.PERIODIC:
            moved = np.moveaxis(mask, axis, 0)
            moved[0] = False
            moved[-1] = False
    return mask


def _shift(f: np.ndarray, axis: int, step: int, periodic: bool) -> np.ndarray:
    """``f`` evaluated at index ``i + step``; non-periodic axes repeat the edge."""
    if periodic:
        return np.roll(f, -step, axis=axis)
    pad = [(0, 0)] * f.ndim
    pad[axis] = (max(-step, 0), max(step, 0))
    padded = np.pad(f, pad, mode="edge")
    sl = [slice(None)] * f.ndim
    start = max(step, 0)
    sl[axis] = slice(start, start + f.shape[axis])
    return padded[tuple(sl)]


def smooth_preserving_boundary(f: np.ndarray, grid: Grid, bc: BoundarySpec, iters: int) -> np.ndarray:
    """Iterated nearest-neighbour averaging (half centre, half shared by neighbours)."""
    if iters < 0:
        raise ValueError("iters must be non-negative")
    out = np.array(f, dtype=float, copy=True)
    if iters == 0:
        return out
    mask = _interior_mask(grid)
    w = 0.5 / (2 * grid.dim)
    for _ in range(iters):
        acc = 0.5 * out
        for axis, b in enumerate(grid.bc):
            periodic = b is BC.PERIODIC
            acc = acc + w * (_shift(out, axis, 1, periodic) + _shift(out, axis, -1, periodic))
        out = np.where(mask, acc, out)
        out = apply_boundary(out, grid, bc)
    return out


# -- difference operators ---------------------------------------------------


def _check_vector(u: np.ndarray, grid: Grid):
    if u.shape != (grid.dim, *grid.shape):
        raise ValueError(f"vector field shape {u.shape} does not match {(grid.dim, *grid.shape)}")


def diff(f: np.ndarray, grid: Grid, axis: int, kind: str) -> np.ndarray:
    """One-dimensional difference along ``axis``.

    ``kind`` is ``"forward"`` (f[i+1]-f[i]), ``"backward"`` (f[i]-f[i-1]) or
    ``"central"``. On non-periodic axes forward/backward differences close
    with a zero-flux wall and central differences use second-order one-sided
    stencils at the edges.
    """
    h = grid.spacing[axis]
    periodic = grid.bc[axis] is BC.PERIODIC
    if kind == "central":
        if periodic:
            return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)
        return np.gradient(f, h, axis=axis, edge_order=2)
    if kind == "forward":
        if periodic:
            return (np.roll(f, -1, axis) - f) / h
        # the face past the last cell is a wall carrying zero flux
        pad = [(0, 0)] * f.ndim
        pad[axis] = (0, 1)
        return np.diff(np.pad(f, pad), axis=axis) / h
    if kind == "backward":
        if periodic:
            return (f - np.roll(f, 1, axis)) / h
        out = np.diff(f, axis=axis, prepend=np.take(f, [0], axis=axis)) / h
        return out
    raise ValueError(f"unknown difference kind {kind!r}")


def divergence(u: np.ndarray, grid: Grid, staggered: bool = True) -> np.ndarray:
    _check_vector(u, grid)
    kind = "forward" if staggered else "central"
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        out += diff(u[a], grid, a, kind)
    return out


def gradient(p: np.ndarray, grid: Grid, staggered: bool = True) -> np.ndarray:
    if p.shape != grid.shape:
        raise ValueError(f"scalar field shape {p.shape} does not match grid {grid.shape}")
    kind = "backward" if staggered else "central"
    return np.stack([diff(p, grid, a, kind) for a in range(grid.dim)])


# -- spectra ----------------------------------------------------------------


@dataclass
class Spectrum:
    """Shell-averaged spectrum: ``energy[i]`` is the energy in the unit-width shell around ``k[i]``."""

    k: np.ndarray
    energy: np.ndarray
    total: float = field(default=0.0)


def estimate_spectrum(f: np.ndarray, grid: Grid, full: bool = False) -> Spectrum:
    """Radially binned energy spectrum of a scalar or vector field.

    Scalar fields bin ``|F_k|**2`` (sum over shells is the mean square of the
    non-constant part); vector fields bin ``0.5 * sum_a |F_k^a|**2`` (kinetic
    energy convention). Shells are centred on integer ``|k|`` starting at 1 and
    run up to the Nyquist radius, or to the lattice corner when ``full``.
    """
    if not grid.all_periodic:
        raise ValueError("spectrum estimation needs an all-periodic grid")
    f = np.asarray(f, dtype=float)
    if f.shape == grid.shape:
        power = np.abs(np.fft.fftn(f) / grid.size) ** 2
    else:
        _check_vector(f, grid)
        axes = tuple(range(1, grid.dim + 1))
        power = 0.5 * np.sum(np.abs(np.fft.fftn(f, axes=axes) / grid.size) ** 2, axis=0)
    kmag = np.sqrt(sum(k**2 for k in grid.wavenumbers()))
    shells = np.rint(kmag).astype(int).ravel()
    energy = np.bincount(shells, weights=power.ravel())
    nyquist = min(np.pi * n / L for n, L in zip(grid.n, grid.length))
    kmax = len(energy) - 1 if full else int(np.floor(nyquist))
    energy = np.pad(energy, (0, max(0, kmax + 1 - len(energy))))
    ks = np.arange(1, kmax + 1)
    return Spectrum(ks.astype(float), energy[1:kmax + 1], float(energy[1:].sum()))
