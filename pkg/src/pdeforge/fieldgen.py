"""Forward generation of flow-field solutions.

Two routes: Gaussian random fields with a Matern covariance sampled by FFT,
and random-phase mode sums whose amplitudes follow a prescribed energy
spectrum. Velocity fields are made solenoidal either by a discrete curl of
random potentials or by choosing each mode's direction perpendicular to its
wave vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .gridfield import Grid, diff


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(seed, *key)``, e.g. key = (sample index,)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


# -- Matern Gaussian random fields ------------------------------------------


@dataclass(frozen=True)
class MaternParams:
    lam: float = 0.1
    nu: float = 1.0
    sigma2: float = 1.0
    mean: Union[float, np.ndarray] = 0.0

    def __post_init__(self):
        if self.lam <= 0 or self.nu <= 0 or self.sigma2 < 0:
            raise ValueError(f"invalid Matern parameters {self}")


def matern_psd(kmag: np.ndarray, params: MaternParams, dim: int) -> np.ndarray:
    """Matern power spectral density up to a constant factor."""
    return (2 * params.nu / params.lam**2 + kmag**2) ** (-(params.nu + dim / 2))


def sample_grf(grid: Grid, params: MaternParams, seed: int, key: Sequence[int] = ()) -> np.ndarray:
    """``mean + ifft(sqrt(S) * fft(z))`` with white noise ``z``.

    ``S`` is the Matern spectral density on the grid's wavenumber lattice,
    renormalised so the pointwise variance of the field is ``sigma2``.
    """
    if not grid.all_periodic:
        raise ValueError("FFT sampling of a random field needs an all-periodic grid")
    z = rng_for(seed, *key).standard_normal(grid.shape)
    if params.sigma2 == 0:
        return np.broadcast_to(np.asarray(params.mean, dtype=float), grid.shape).copy()
    kmag = np.sqrt(sum(k**2 for k in grid.wavenumbers()))
    S = matern_psd(kmag, params, grid.dim)
    amp = np.sqrt(S * params.sigma2 * grid.size / S.sum())
    u = np.real(np.fft.ifftn(amp * np.fft.fftn(z)))
    return u + params.mean


def curl_potential(potentials: Union[np.ndarray, Sequence[np.ndarray]], grid: Grid, staggered: bool = True) -> np.ndarray:
    """Velocity from scalar potentials, ``u = curl(phi)``.

    2D takes one potential: ``u = (d phi/dy, -d phi/dx)``. 3D takes three.
    The differences are the ones :func:`gridfield.divergence` pairs with
    (forward on a staggered grid, central otherwise), so the discrete
    divergence of the result vanishes up to roundoff.
    """
    kind = "forward" if staggered else "central"
    d = lambda f, axis: diff(f, grid, axis, kind)
    if isinstance(potentials, np.ndarray) and potentials.ndim == grid.dim:
        potentials = [potentials]
    pots = [np.asarray(p, dtype=float) for p in potentials]
    if grid.dim == 2:
        if len(pots) != 1:
            raise ValueError("2D curl takes exactly one potential")
        (phi,) = pots
        return np.stack([d(phi, 1), -d(phi, 0)])
    if grid.dim == 3:
        if len(pots) != 3:
            raise ValueError("3D curl takes three potentials")
        px, py, pz = pots
        return np.stack([
            d(pz, 1) - d(py, 2),
            d(px, 2) - d(pz, 0),
            d(py, 0) - d(px, 1),
        ])
    raise ValueError("curl is defined for 2D and 3D grids")


def grf_velocity(grid: Grid, params: MaternParams, seed: int, staggered: bool = True) -> np.ndarray:
    """Solenoidal velocity from independent GRF potentials."""
    count = 1 if grid.dim == 2 else 3
    pots = [sample_grf(grid, params, seed, key=(i,)) for i in range(count)]
    return curl_potential(pots, grid, staggered=staggered)


# -- spectra -----------------------------------------------------------------


class SpectrumModel:
    """Energy spectrum ``E(|k|)``; call it on an array of magnitudes."""

    def __call__(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(SpectrumModel):
    """``a * |k|**e`` above ``k_min``, held at the ``k_min`` value below it."""

    amplitude: float = 0.5
    exponent: float = -7.0 / 3.0
    k_min: float = 6.0

    def __call__(self, k):
        k = np.maximum(np.asarray(k, dtype=float), self.k_min)
        with np.errstate(divide="ignore"):
            return np.where(k > 0, self.amplitude * np.abs(k) ** self.exponent, 0.0)

    def describe(self):
        return {"kind": "powerlaw", "amplitude": self.amplitude, "exponent": self.exponent, "k_min": self.k_min}


@dataclass(frozen=True)
class VonKarmanPao(SpectrumModel):
    u_rms: float = 1.0
    k_e: float = 4.0
    k_eta: float = 1e3
    alpha: float = 1.453

    def __post_init__(self):
        if self.u_rms <= 0 or self.k_e <= 0 or self.k_eta <= 0:
            raise ValueError("von Karman-Pao parameters must be positive")

    def __call__(self, k):
        r = np.asarray(k, dtype=float) / self.k_e
        return (self.alpha * self.u_rms**2 / self.k_e * r**4 / (1 + r**2) ** (17.0 / 6.0)
                * np.exp(-2 * (np.asarray(k, dtype=float) / self.k_eta) ** 2))

    def describe(self):
        return {"kind": "vkp", "u_rms": self.u_rms, "k_e": self.k_e, "k_eta": self.k_eta, "alpha": self.alpha}


def vkp_spectrum(u_rms: float = 1.0, k_e: float = 4.0, k_eta: float = 1e3, alpha: float = 1.453) -> VonKarmanPao:
    return VonKarmanPao(u_rms, k_e, k_eta, alpha)


@dataclass(frozen=True)
class Tabulated(SpectrumModel):
    k: tuple
    energy: tuple

    def __post_init__(self):
        if any(e < 0 for e in self.energy):
            raise ValueError("tabulated spectrum must be non-negative")

    def __call__(self, k):
        return np.interp(np.asarray(k, dtype=float), self.k, self.energy, left=self.energy[0], right=0.0)

    def describe(self):
        return {"kind": "tabulated", "k": list(self.k), "energy": list(self.energy)}


def spectrum_from_dict(d: dict) -> SpectrumModel:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "powerlaw":
        return PowerLaw(**d)
    if kind == "vkp":
        return VonKarmanPao(**d)
    if kind == "tabulated":
        return Tabulated(tuple(d["k"]), tuple(d["energy"]))
    raise ValueError(f"unknown spectrum kind {kind!r}")


# -- spectral mode synthesis ---------------------------------------------------


@dataclass
class ModeSet:
    """Wave vectors ``k`` (M, dim), phases, amplitudes and unit directions ``sigma``."""

    k: np.ndarray
    phase: np.ndarray
    amplitude: np.ndarray
    dk: float
    sigma: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return len(self.phase)

    @property
    def kmag(self) -> np.ndarray:
        return np.linalg.norm(self.k, axis=1)

    @property
    def khat(self) -> np.ndarray:
        return self.k / self.kmag[:, None]


def nyquist(grid: Grid) -> float:
    return min(np.pi * n / L for n, L in zip(grid.n, grid.length))


def _perpendicular(khat: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random unit vectors orthogonal to each row of ``khat`` (3D)."""
    a = rng.uniform(0, 2 * np.pi, len(khat))
    ref = np.where(np.abs(khat[:, [2]]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(khat, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(khat, e1)
    s = np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2
    # one Gram-Schmidt pass removes roundoff from the cross products
    s -= np.sum(s * khat, axis=1, keepdims=True) * khat
    return s / np.linalg.norm(s, axis=1, keepdims=True)


def make_modes(
    grid: Grid,
    spectrum: SpectrumModel,
    M: int,
    rng: np.random.Generator,
    k_min: float = 1.0,
    k_max: Optional[float] = None,
    vector: bool = False,
    lattice: bool = True,
    sphere_uniform: bool = False,
) -> ModeSet:
    """Draw a mode set on a uniform magnitude ladder.

    Magnitudes are the midpoints of ``M`` equal bins on ``[k_min, k_max]``
    (``k_max`` defaults to the Nyquist wavenumber). Angles and phases are
    uniform on ``[0, 2pi]``; ``sphere_uniform`` draws 3D directions uniformly
    on the sphere instead. With ``lattice`` each wave vector is rounded to the
    grid's reciprocal lattice so the field is exactly periodic, and the
    amplitude is taken at the rounded magnitude.
    """
    if M < 1:
        raise ValueError("need at least one mode")
    dim = grid.dim
    k_max = nyquist(grid) if k_max is None else k_max
    dk = (k_max - k_min) / M
    mag = k_min + (np.arange(M) + 0.5) * dk
    theta = rng.uniform(0, 2 * np.pi, M)
    phi = rng.uniform(0, 2 * np.pi, M)
    psi = rng.uniform(0, 2 * np.pi, M)
    if dim == 1:
        dirs = np.ones((M, 1))
    elif dim == 2:
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        theta = np.full(M, np.pi / 2)
    else:
        if sphere_uniform:
            theta = np.arccos(rng.uniform(-1, 1, M))
        dirs = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    k = mag[:, None] * dirs
    if lattice:
        unit = np.array([2 * np.pi / L for L in grid.length])
        half = np.array([n // 2 for n in grid.n])
        idx = np.clip(np.rint(k / unit), -half, half)
        zero = ~idx.any(axis=1)
        idx[zero, 0] = 1  # only reachable for magnitudes below half a lattice step
        k = idx * unit
    kmag = np.linalg.norm(k, axis=1)
    E = np.asarray(spectrum(kmag), dtype=float)
    if np.any(E < 0) or not np.all(np.isfinite(E)):
        raise ValueError("spectrum must be finite and non-negative at every sampled wavenumber")
    modes = ModeSet(k=k, phase=psi, amplitude=np.sqrt(E * dk), dk=dk, theta=theta, phi=phi)
    if vector:
        khat = modes.khat
        if dim == 2:
            modes.sigma = np.stack([-khat[:, 1], khat[:, 0]], axis=1)
        elif dim == 3:
            modes.sigma = _perpendicular(khat, rng)
        else:
            raise ValueError("vector synthesis needs a 2D or 3D grid")
    return modes


def _mode_sum_direct(grid: Grid, k: np.ndarray, phase: np.ndarray, coef: np.ndarray, offset=0.0) -> np.ndarray:
    """sum_m coef[m] * cos(k_m . x + phase_m), evaluated pointwise (O(M N))."""
    x = grid.coords(offset)
    out = np.zeros(grid.shape)
    for m in range(len(phase)):
        arg = phase[m] + sum(k[m, a] * x[a] for a in range(grid.dim))
        out += coef[m] * np.cos(arg)
    return out


def _mode_sum_fft(grid: Grid, k: np.ndarray, phase: np.ndarray, coef: np.ndarray, offset=0.0) -> np.ndarray:
    """Same sum for lattice wave vectors, scattered into an FFT array."""
    if np.isscalar(offset):
        offset = (offset,) * grid.dim
    spacing = np.array(grid.spacing)
    unit = np.array([2 * np.pi / L for L in grid.length])
    idx = np.rint(k / unit).astype(int)
    shift = phase + k @ (np.asarray(offset) * spacing)
    c = coef * np.exp(1j * shift)
    spec = np.zeros(grid.shape, dtype=complex)
    pos = tuple((idx[:, a] % grid.n[a]) for a in range(grid.dim))
    neg = tuple((-idx[:, a] % grid.n[a]) for a in range(grid.dim))
    np.add.at(spec, pos, 0.5 * c)
    np.add.at(spec, neg, 0.5 * np.conj(c))
    return np.real(np.fft.ifftn(spec)) * grid.size


def _is_lattice(grid: Grid, k: np.ndarray) -> bool:
    unit = np.array([2 * np.pi / L for L in grid.length])
    q = k / unit
    return bool(np.allclose(q, np.rint(q), atol=1e-9))


def mode_sum(grid: Grid, k, phase, coef, offset=0.0, method: str = "auto") -> np.ndarray:
    if method == "auto":
        method = "fft" if grid.all_periodic and _is_lattice(grid, k) else "direct"
    if method == "fft":
        return _mode_sum_fft(grid, k, phase, coef, offset)
    return _mode_sum_direct(grid, k, phase, coef, offset)


def synth_scalar_field(
    grid: Grid,
    spectrum: SpectrumModel,
    M: int,
    seed: int,
    key: Sequence[int] = (),
    method: str = "auto",
    **mode_kw,
) -> np.ndarray:
    """``u(x) = 2 sum_m sqrt(E(|k_m|) dk / 2) cos(k_m . x + psi_m)``.

    The spatial variance of the result is about ``sum_m E(|k_m|) dk``.
    """
    modes = make_modes(grid, spectrum, M, rng_for(seed, *key), **mode_kw)
    coef = 2 * np.sqrt(0.5) * modes.amplitude
    return mode_sum(grid, modes.k, modes.phase, coef, method=method)


def synth_vector_field(
    grid: Grid,
    spectrum: SpectrumModel,
    M: int,
    seed: int,
    key: Sequence[int] = (),
    staggered: bool = True,
    method: str = "auto",
    **mode_kw,
) -> np.ndarray:
    """``u(x) = 2 sum_m sqrt(E(|k_m|) dk) cos(k_m . x + psi_m) sigma_m``.

    Each direction ``sigma_m`` is perpendicular to ``k_m``, so every mode is
    solenoidal. With ``staggered`` component ``a`` is sampled on the faces.
    """
    modes = make_modes(grid, spectrum, M, rng_for(seed, *key), vector=True, **mode_kw)
    out = np.empty((grid.dim, *grid.shape))
    for a in range(grid.dim):
        offset = [0.0 if b == a else 0.5 for b in range(grid.dim)] if staggered else 0.0
        coef = 2 * modes.amplitude * modes.sigma[:, a]
        out[a] = mode_sum(grid, modes.k, modes.phase, coef, offset=offset, method=method)
    return out


def spectrum_peak(spectrum: Callable, k_lo: float = 1e-3, k_hi: float = 100.0, n: int = 200_001) -> tuple[float, float]:
    """Location and value of the maximum of ``spectrum`` on a dense 1D scan."""
    k = np.linspace(k_lo, k_hi, n)
    E = spectrum(k)
    i = int(np.argmax(E))
    return float(k[i]), float(E[i])
