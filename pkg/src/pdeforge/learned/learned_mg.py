"""Multigrid with learned kernels and coarse-level correction networks.

Variants:

* ``nmg``: learned smoothing, differentiation, restriction, prolongation and
  coarsest-inverse kernels, no correction network;
* ``cnn-mg``: adds a CNN correction on every intermediate level whose
  down/up-sampling are learned stride-2 (transposed) convolutions;
* ``wtcnn-mg``: same correction network with Haar DWT/IDWT as the
  down/up-sampling.

Every kernel starts at its classical counterpart (weighted Jacobi, 2d+1 point
stencil, full weighting, linear interpolation, and the exact response of the
classical coarsest-level sweeps) and correction outputs start at zero, so an
untrained hierarchy reproduces :func:`pdeforge.linsolve.mg_vcycle`.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
import torch
from torch import nn

from ..gridfield import Grid
from ..linsolve import LaplaceOperator, MGConfig, jacobi
from . import kernels as K

VARIANTS = ("nmg", "cnn-mg", "wtcnn-mg")


def _kron_kernel(weights1d, dim):
    w = torch.tensor(weights1d, dtype=torch.float64)
    out = w
    for _ in range(dim - 1):
        out = out[..., None] * w
    return out


def laplace_kernel(spacing) -> torch.Tensor:
    dim = len(spacing)
    w = torch.zeros((3,) * dim, dtype=torch.float64)
    centre = (1,) * dim
    for a, h in enumerate(spacing):
        for s in (0, 2):
            idx = list(centre)
            idx[a] = s
            w[tuple(idx)] += 1.0 / h**2
        w[centre] -= 2.0 / h**2
    return w


def coarse_solve_kernel(grid: Grid, config: MGConfig) -> torch.Tensor:
    """Cross-correlation kernel equal to ``coarse_sweeps`` Jacobi sweeps from zero.

    Size ``n + 1`` per axis with the last tap unused, so ``x = w * b`` under
    circular padding reproduces the sweeps on the whole periodic grid.
    """
    op = LaplaceOperator(grid)
    delta = np.zeros(grid.shape)
    delta[(0,) * grid.dim] = 1.0
    resp = jacobi(op, delta, np.zeros(grid.shape), config.coarse_sweeps, config.omega)
    n = grid.n[0]
    c = n // 2
    w = np.zeros((n + 1,) * grid.dim)
    for o in np.ndindex(*(n,) * grid.dim):
        w[o] = resp[tuple((c - oi) % n for oi in o)]
    return torch.as_tensor(w)


class ScaledKernel(nn.Module):
    """Convolution kernel stored as ``scale * theta`` with ``theta`` O(1)."""

    def __init__(self, init: torch.Tensor, scale: Optional[float] = None, trainable: bool = True):
        super().__init__()
        scale = float(init.abs().max()) if scale is None else float(scale)
        self.scale = scale if scale != 0 else 1.0
        theta = (init / self.scale).reshape(1, 1, *init.shape).to(torch.float64)
        if trainable:
            self.theta = nn.Parameter(theta)
        else:
            self.register_buffer("theta", theta)

    @property
    def weight(self) -> torch.Tensor:
        return self.scale * self.theta


def _conv_weight(c_out, c_in, k, dim, zero=False):
    w = torch.empty((c_out, c_in) + (k,) * dim, dtype=torch.float64)
    if zero:
        nn.init.zeros_(w)
    else:
        nn.init.kaiming_uniform_(w, a=0.1, nonlinearity="leaky_relu")
    return nn.Parameter(w)


class CorrectionNet(nn.Module):
    """Two-level encoder/decoder mapping a level's right-hand side to a correction.

    ``wavelet=True`` down/up-samples with the Haar DWT/IDWT, otherwise with
    learned stride-2 convolutions of the same channel counts. Convolutions
    are bias-free and the activation is leaky ReLU, so the network maps zero
    to zero and scales linearly with positive input amplitude.
    """

    def __init__(self, dim: int, channels: int = 8, wavelet: bool = True, slope: float = 0.1):
        super().__init__()
        self.dim = dim
        self.wavelet = wavelet
        self.slope = slope
        nb = 2**dim
        c = channels
        self.conv_a = _conv_weight(c, nb, 3, dim)
        self.conv_b = _conv_weight(c * nb, c * nb, 3, dim)
        self.conv_c = _conv_weight(c, c, 3, dim)
        self.conv_out = _conv_weight(nb, c, 3, dim, zero=True)
        if not wavelet:
            self.down1 = _conv_weight(nb, 1, 2, dim)
            self.down2 = _conv_weight(c * nb, c, 2, dim)
            self.up1 = _conv_weight(c * nb, c, 2, dim)  # transposed: (C_in, C_out, ...)
            self.up2 = _conv_weight(nb, 1, 2, dim)

    def _down(self, x, which):
        if self.wavelet:
            return K.haar_dwt(x)
        return K.strided_conv(x, getattr(self, which))

    def _up(self, x, which):
        if self.wavelet:
            return K.haar_idwt(x)
        return K.strided_conv_transpose(x, getattr(self, which))

    def forward(self, b: torch.Tensor) -> torch.Tensor:
        act = lambda z: K.leaky_relu(z, self.slope)
        e1 = act(K.periodic_conv(self._down(b, "down1"), self.conv_a))
        e2 = act(K.periodic_conv(self._down(e1, "down2"), self.conv_b))
        d1 = act(K.periodic_conv(self._up(e2, "up1"), self.conv_c))
        return self._up(K.periodic_conv(d1, self.conv_out), "up2")


class LearnedMG(nn.Module):
    """Learned V-cycle hierarchy for the periodic Poisson problem on ``grid``."""

    def __init__(self, grid: Grid, variant: str = "wtcnn-mg", config: Optional[MGConfig] = None,
                 smoother_size: int = 3, channels: int = 8, input_scale: float = 1.0):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown learned multigrid variant {variant!r}")
        config = (config or MGConfig()).resolved(grid)
        self.grid = grid
        self.variant = variant
        self.config = config
        self.dim = grid.dim
        self.levels = config.levels
        self.input_scale = float(input_scale)
        self.arch = {"kind": "learned_mg", "variant": variant, "n": list(grid.n), "length": list(grid.length),
                     "levels": config.levels, "pre_sweeps": config.pre_sweeps, "post_sweeps": config.post_sweeps,
                     "omega": config.omega, "coarse_sweeps": config.coarse_sweeps,
                     "smoother_size": smoother_size, "channels": channels, "input_scale": self.input_scale}
        grids = [grid]
        for _ in range(self.levels - 1):
            grids.append(grids[-1].coarsen(2))
        for g in grids[1:]:
            if g.n[0] % 4 and variant != "nmg" and g is not grids[-1]:
                raise ValueError(f"correction networks need level sizes divisible by 4, got {g.n}")
        self.grids = grids
        self.spacings = [g.spacing for g in grids]

        self.smoothers = nn.ModuleList()
        self.operators = nn.ModuleList()
        self.restrictions = nn.ModuleList()
        self.prolongations = nn.ModuleList()
        self.corrections = nn.ModuleList()
        for l, g in enumerate(grids[:-1]):
            diag = sum(-2.0 / h**2 for h in g.spacing)
            m = torch.zeros((smoother_size,) * self.dim, dtype=torch.float64)
            m[(smoother_size // 2,) * self.dim] = config.omega / diag
            self.smoothers.append(ScaledKernel(m))
            # level 1 keeps the exact operator so outer residuals are honest
            self.operators.append(ScaledKernel(laplace_kernel(g.spacing), trainable=l > 0))
            self.restrictions.append(ScaledKernel(_kron_kernel([0.25, 0.5, 0.25], self.dim)))
            self.prolongations.append(ScaledKernel(_kron_kernel([0.5, 1.0, 0.5], self.dim)))
            if l > 0 and variant != "nmg":
                self.corrections.append(CorrectionNet(self.dim, channels, wavelet=variant == "wtcnn-mg"))
            else:
                self.corrections.append(nn.Identity())
        self.coarse = ScaledKernel(coarse_solve_kernel(grids[-1], config))

    def _apply(self, kern: ScaledKernel, x, stride=1):
        return K.periodic_conv(x, kern.weight, stride=stride)

    def _smooth(self, l, b, x, sweeps):
        for _ in range(sweeps):
            x = x + self._apply(self.smoothers[l], b - self._apply(self.operators[l], x))
        return x

    def _cycle(self, l, b, x):
        if l == self.levels - 1:
            return self._apply(self.coarse, b)
        x = self._smooth(l, b, x, self.config.pre_sweeps)
        r = b - self._apply(self.operators[l], x)
        bc = self._apply(self.restrictions[l], r, stride=2)
        xc = self._cycle(l + 1, bc, torch.zeros_like(bc))
        x = x + K.periodic_conv_transpose(xc, self.prolongations[l].weight, stride=2)
        if l > 0 and self.variant != "nmg":
            x = x + self.corrections[l](b)
        return self._smooth(l, b, x, self.config.post_sweeps)

    def forward(self, b: torch.Tensor, x0: Optional[torch.Tensor] = None) -> torch.Tensor:
        """One V-cycle on a batch ``b`` of shape ``(B, *n)``."""
        squeeze = b.dim() == self.dim
        if squeeze:
            b = b[None]
            x0 = None if x0 is None else x0[None]
        b4 = b[:, None]
        x = torch.zeros_like(b4) if x0 is None else x0[:, None]
        # the cycle is positively homogeneous: run it on a rescaled system
        s = self.input_scale
        x = self._cycle(0, b4 / s, x / s) * s
        x = x[:, 0]
        dims = tuple(range(-self.dim, 0))
        x = x - x.mean(dim=dims, keepdim=True)
        return x[0] if squeeze else x

    def train_forward(self, b: torch.Tensor, cycles: int = 1) -> torch.Tensor:
        x = None
        for _ in range(cycles):
            x = self(b, x)
        return x

    @torch.no_grad()
    def cycle_numpy(self, b: np.ndarray, x: Optional[np.ndarray]) -> np.ndarray:
        bt = torch.as_tensor(np.asarray(b, dtype=np.float64))
        xt = None if x is None else torch.as_tensor(np.asarray(x, dtype=np.float64))
        return self(bt, xt).numpy()

    def as_cycle(self):
        """``cycle(b, x) -> x`` for :func:`pdeforge.linsolve.mg_solve`."""
        return lambda b, x: self.cycle_numpy(b, x)


def learned_vcycle(h: LearnedMG, b, x0=None):
    """One learned V-cycle; numpy or torch in, same kind out."""
    if isinstance(b, torch.Tensor):
        return h(b, x0)
    if np.shape(b)[-h.dim:] != h.grid.shape:
        raise ValueError(f"right-hand side shape {np.shape(b)} does not match hierarchy grid {h.grid.shape}")
    return h.cycle_numpy(b, x0)
