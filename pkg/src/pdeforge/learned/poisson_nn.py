"""Green's-function-style Poisson network.

``p = IFFT(FFT(N_G) * FFT(b)) * h^d + N_h``: a kernel network ``N_G`` emits a
field over the grid that is circularly convolved with the right-hand side,
and a second network ``N_h`` adds a fixed field (the boundary contribution,
which on a periodic box should learn to vanish).
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from . import kernels as K


def _int_freqs(n: int, real_last: bool) -> np.ndarray:
    return np.arange(n // 2 + 1) if real_last else np.rint(np.fft.fftfreq(n) * n).astype(int)


def resample_rfft(C: torch.Tensor, n_from: Sequence[int], n_to: Sequence[int]) -> torch.Tensor:
    """Move rfft-layout coefficients between lattices, keeping shared integer frequencies."""
    if tuple(n_from) == tuple(n_to):
        return C
    out = C
    d = len(n_from)
    for axis in range(d):
        last = axis == d - 1
        f_from = _int_freqs(n_from[axis], last)
        f_to = _int_freqs(n_to[axis], last)
        lookup = {int(f): i for i, f in enumerate(f_from)}
        src = [lookup.get(int(f), -1) for f in f_to]
        idx = torch.tensor([max(s, 0) for s in src])
        mask = torch.tensor([s >= 0 for s in src], dtype=out.real.dtype)
        ax = out.dim() - d + axis
        out = torch.index_select(out, ax, idx)
        shape = [1] * out.dim()
        shape[ax] = -1
        out = out * mask.reshape(shape)
    return out


class FourierSeriesNet(nn.Module):
    """Truncated Fourier-series network ``g(x) = sum_k Re(c_k exp(i k.x))``.

    A single layer of fixed sinusoidal features with a learned linear readout.
    Coefficients are stored relative to a ``(1 + |k|^2)^(-decay/2)`` scale so
    parameters stay O(1) whatever the field's spectral decay. ``multiplier``
    returns ``h^d * DFT(g)`` on the training lattice; ``forward`` evaluates
    ``g`` on any lattice covering the same domain.
    """

    def __init__(self, n: Sequence[int], length: Sequence[float], decay: float = 2.0):
        super().__init__()
        self.n = tuple(int(v) for v in n)
        self.length = tuple(float(v) for v in length)
        shape = self.n[:-1] + (self.n[-1] // 2 + 1,)
        self.re = nn.Parameter(torch.zeros(shape, dtype=torch.float64))
        self.im = nn.Parameter(torch.zeros(shape, dtype=torch.float64))
        ks = [2 * np.pi / L * _int_freqs(m, i == len(self.n) - 1) for i, (m, L) in enumerate(zip(self.n, self.length))]
        k2 = sum(k**2 for k in np.meshgrid(*ks, indexing="ij"))
        self.register_buffer("scale", torch.as_tensor((1.0 + k2) ** (-decay / 2)))

    def multiplier(self, n: Optional[Sequence[int]] = None) -> torch.Tensor:
        C = torch.complex(self.re, self.im) * self.scale
        return resample_rfft(C, self.n, n or self.n)

    def forward(self, n: Optional[Sequence[int]] = None) -> torch.Tensor:
        n = tuple(n or self.n)
        volume = math.prod(self.length)
        return torch.fft.irfftn(self.multiplier(n), s=n) * (math.prod(n) / volume)


class SirenNet(nn.Module):
    """Coordinate MLP: per-axis sin/cos features of frequencies 1..K, sine activations."""

    def __init__(self, dim: int, length: Sequence[float], freqs: int = 16, width: int = 64, depth: int = 2,
                 zero_output: bool = True):
        super().__init__()
        self.dim = dim
        self.length = tuple(float(v) for v in length)
        self.register_buffer("freqs", torch.arange(1, freqs + 1, dtype=torch.float64))
        layers = []
        fan_in = 2 * dim * freqs
        for _ in range(depth):
            layers.append(nn.Linear(fan_in, width, dtype=torch.float64))
            fan_in = width
        self.hidden = nn.ModuleList(layers)
        self.out = nn.Linear(fan_in, 1, dtype=torch.float64)
        if zero_output:
            nn.init.zeros_(self.out.weight)
            nn.init.zeros_(self.out.bias)

    def forward(self, n: Sequence[int]) -> torch.Tensor:
        axes = [torch.arange(m, dtype=torch.float64) * (2 * math.pi / m) for m in n]
        grids = torch.meshgrid(*axes, indexing="ij")
        feats = []
        for g in grids:
            arg = g[..., None] * self.freqs
            feats += [torch.sin(arg), torch.cos(arg)]
        z = torch.cat(feats, dim=-1)
        for layer in self.hidden:
            z = torch.sin(layer(z))
        return self.out(z)[..., 0]


class PoissonNN(nn.Module):
    def __init__(self, n: Sequence[int], length: Optional[Sequence[float]] = None,
                 kernel_net: str = "fourier", boundary_net: Optional[str] = "fourier"):
        super().__init__()
        self.n = tuple(int(v) for v in n)
        self.dim = len(self.n)
        self.length = tuple(length) if length is not None else (2 * math.pi,) * self.dim
        self.arch = {"kind": "poisson_nn", "n": list(self.n), "length": list(self.length),
                     "kernel_net": kernel_net, "boundary_net": boundary_net}
        self.kernel_net = self._make(kernel_net, zero_output=False)
        self.boundary_net = self._make(boundary_net, zero_output=True) if boundary_net else None

    def _make(self, kind, zero_output):
        if kind == "fourier":
            return FourierSeriesNet(self.n, self.length)
        if kind == "siren":
            return SirenNet(self.dim, self.length, zero_output=zero_output)
        raise ValueError(f"unknown network kind {kind!r}")

    def forward(self, b: torch.Tensor) -> torch.Tensor:
        n = tuple(b.shape[-self.dim:])
        h_vol = math.prod(L / m for L, m in zip(self.length, n))
        if isinstance(self.kernel_net, FourierSeriesNet) and n == self.n:
            # identical to fft_conv(g, b) but skips the FFT of a field we just inverse-transformed
            p = K.fft_multiply(self.kernel_net.multiplier(n), b, n)
        else:
            g = self.kernel_net(n)
            p = K.fft_conv(g, b, self.dim, volume=h_vol)
        if self.boundary_net is not None:
            p = p + self.boundary_net(n)
        dims = tuple(range(-self.dim, 0))
        return p - p.mean(dim=dims, keepdim=True)

    def train_forward(self, b: torch.Tensor) -> torch.Tensor:
        return self(b)

    @torch.no_grad()
    def predict(self, b: np.ndarray) -> np.ndarray:
        """numpy in, numpy out; accepts a single field or a batch."""
        t = torch.as_tensor(np.asarray(b, dtype=np.float64))
        return self(t).numpy()


def poisson_nn_forward(model: PoissonNN, b, grid=None):
    """``p_NN`` for a single right-hand side or a batch; numpy or torch in, same kind out."""
    if grid is not None and not grid.all_periodic:
        raise ValueError("FFT convolution needs an all-periodic grid")
    if isinstance(b, torch.Tensor):
        return model(b)
    return model.predict(b)
