"""Differentiable building blocks on periodic grids.

All functions take batched tensors shaped ``(B, C, *spatial)`` with one, two
or three spatial axes; gradients come from torch's reverse mode. Padding is
always circular since every supported problem is periodic.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F

_CONV = {1: F.conv1d, 2: F.conv2d, 3: F.conv3d}
_CONV_T = {1: F.conv_transpose1d, 2: F.conv_transpose2d, 3: F.conv_transpose3d}


def _spatial(x: torch.Tensor) -> int:
    d = x.dim() - 2
    if d not in _CONV:
        raise ValueError(f"expected (B, C, *spatial) with 1-3 spatial axes, got shape {tuple(x.shape)}")
    return d


def periodic_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
    if pad == 0:
        return x
    d = _spatial(x)
    return F.pad(x, (pad, pad) * d, mode="circular")


def periodic_conv(x: torch.Tensor, w: torch.Tensor, stride: int = 1) -> torch.Tensor:
    """Centred cross-correlation ``y[i] = sum_o w[o] x[s*i + o - c]`` with wrap-around.

    ``w`` has shape ``(C_out, C_in, k, ..., k)`` with odd ``k``.
    """
    d = _spatial(x)
    k = w.shape[-1]
    if k % 2 == 0 or w.dim() != d + 2:
        raise ValueError(f"kernel shape {tuple(w.shape)} incompatible with {d}D input")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"kernel expects {w.shape[1]} input channels, got {x.shape[1]}")
    if any(n % stride for n in x.shape[2:]):
        raise ValueError(f"spatial shape {tuple(x.shape[2:])} not divisible by stride {stride}")
    return _CONV[d](periodic_pad(x, k // 2), w, stride=stride)


def zero_upsample(x: torch.Tensor, stride: int) -> torch.Tensor:
    d = _spatial(x)
    out = x.new_zeros(*x.shape[:2], *(n * stride for n in x.shape[2:]))
    out[(slice(None), slice(None)) + (slice(None, None, stride),) * d] = x
    return out


def periodic_conv_transpose(x: torch.Tensor, w: torch.Tensor, stride: int = 2) -> torch.Tensor:
    """Transposed strided convolution: zero-upsample, then periodic convolution.

    With ``w = [1/2, 1, 1/2]`` per axis this is linear interpolation from
    coarse point ``I`` sitting at fine point ``stride * I``.
    """
    return periodic_conv(zero_upsample(x, stride), w)


def strided_conv(x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Non-overlapping ``k = stride`` convolution (no padding needed)."""
    d = _spatial(x)
    s = w.shape[-1]
    return _CONV[d](x, w, stride=s)


def strided_conv_transpose(x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    d = _spatial(x)
    s = w.shape[-1]
    return _CONV_T[d](x, w, stride=s)


def haar_dwt(x: torch.Tensor) -> torch.Tensor:
    """One level of the orthonormal Haar transform along every spatial axis.

    ``(B, C, n, ...) -> (B, C * 2**d, n/2, ...)``; for each input channel the
    ``2**d`` sub-bands are contiguous, approximation first.
    """
    d = _spatial(x)
    bands = [x]
    for axis in range(2, 2 + d):
        nxt = []
        for band in bands:
            even = band.narrow(axis, 0, band.shape[axis] // 2 * 2)
            lo = even.unfold(axis, 2, 2)
            a, b = lo[..., 0], lo[..., 1]
            nxt += [(a + b) / math.sqrt(2), (a - b) / math.sqrt(2)]
        bands = nxt
    out = torch.stack(bands, dim=2)  # (B, C, 2**d, ...)
    return out.reshape(x.shape[0], -1, *out.shape[3:])


def haar_idwt(y: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`haar_dwt`."""
    d = _spatial(y)
    nb = 2**d
    if y.shape[1] % nb:
        raise ValueError(f"channel count {y.shape[1]} not divisible by {nb}")
    bands = list(y.reshape(y.shape[0], -1, nb, *y.shape[2:]).unbind(2))
    for axis in reversed(range(2, 2 + d)):
        nxt = []
        for i in range(0, len(bands), 2):
            lo, hi = bands[i], bands[i + 1]
            a = (lo + hi) / math.sqrt(2)
            b = (lo - hi) / math.sqrt(2)
            st = torch.stack([a, b], dim=axis + 1)
            shape = list(lo.shape)
            shape[axis] *= 2
            nxt.append(st.reshape(shape))
        bands = nxt
    return bands[0]


def fft_conv(g: torch.Tensor, b: torch.Tensor, d: int, volume: float = 1.0) -> torch.Tensor:
    """Circular convolution ``volume * sum_j g[i - j] b[j]`` via the convolution theorem.

    ``g`` and ``b`` share their trailing ``d`` spatial axes; ``g`` broadcasts
    against ``b``'s leading axes.
    """
    dims = tuple(range(-d, 0))
    shape = b.shape[-d:]
    G = torch.fft.rfftn(g, dim=dims)
    Bh = torch.fft.rfftn(b, dim=dims)
    return volume * torch.fft.irfftn(G * Bh, s=shape, dim=dims)


def fft_multiply(G: torch.Tensor, b: torch.Tensor, shape) -> torch.Tensor:
    """Apply a Fourier multiplier ``G`` (rfft layout) to real fields ``b``."""
    dims = tuple(range(-len(shape), 0))
    return torch.fft.irfftn(G * torch.fft.rfftn(b, dim=dims), s=shape, dim=dims)


def periodic_laplacian(x: torch.Tensor, spacing) -> torch.Tensor:
    """``(1, -2, 1)/h**2`` Laplacian over the trailing ``len(spacing)`` axes."""
    d = len(spacing)
    out = torch.zeros_like(x)
    for k, h in enumerate(spacing):
        axis = x.dim() - d + k
        out = out + (torch.roll(x, 1, axis) + torch.roll(x, -1, axis) - 2 * x) / h**2
    return out


def leaky_relu(x: torch.Tensor, slope: float = 0.1) -> torch.Tensor:
    return F.leaky_relu(x, slope)


def _norms(x: torch.Tensor, d: int) -> torch.Tensor:
    return torch.sqrt(torch.sum(x.reshape(*x.shape[: x.dim() - d], -1) ** 2, dim=-1))


def relative_l2(pred: torch.Tensor, target: torch.Tensor, d: int) -> torch.Tensor:
    """Per-sample ``|pred - target| / |target|`` over the last ``d`` axes, averaged."""
    return torch.mean(_norms(pred - target, d) / _norms(target, d))


def mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return torch.mean((pred - target) ** 2)
