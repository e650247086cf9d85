"""Matrix-free pressure Poisson operator, BiCGSTAB and geometric multigrid."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .gridfield import BC, Grid

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class LaplaceOperator:
    """Second-order Laplacian ``A = A_x (x) I + I (x) A_y (+ z)``, applied matrix-free.

    Per-axis 1D stencil ``(1, -2, 1)/h**2``. Closures: periodic axes wrap,
    Dirichlet axes see zero outside the array, Neumann axes mirror the edge
    sample (zero flux).
    """

    def __init__(self, grid: Grid, shift: float = 0.0, scale: float = 1.0):
        # represents scale * Laplacian + shift * I (used for Helmholtz systems)
        self.grid = grid
        self.shift = float(shift)
        self.scale = float(scale)

    @property
    def singular(self) -> bool:
        return self.grid.all_periodic and self.shift == 0.0

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return apply_laplacian(self, p)

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.grid.shape)
        for axis, (b, h) in enumerate(zip(self.grid.bc, self.grid.spacing)):
            d = np.full(self.grid.n[axis], -2.0 / h**2)
            if b is BC.NEUMANN:
                d[0] = d[-1] = -1.0 / h**2
            shape = [1] * self.grid.dim
            shape[axis] = -1
            diag = diag + d.reshape(shape)
        return self.scale * diag + self.shift

    def symbol(self) -> np.ndarray:
        """Eigenvalues on the FFT lattice (all-periodic grids only)."""
        if not self.grid.all_periodic:
            raise ValueError("operator symbol needs an all-periodic grid")
        lam = np.zeros(self.grid.shape)
        for axis, (n, h) in enumerate(zip(self.grid.n, self.grid.spacing)):
            theta = 2 * np.pi * np.fft.fftfreq(n)
            shape = [1] * self.grid.dim
            shape[axis] = -1
            lam = lam + (-(2 - 2 * np.cos(theta)) / h**2).reshape(shape)
        return self.scale * lam + self.shift


def apply_laplacian(op: LaplaceOperator, p: np.ndarray) -> np.ndarray:
    grid = op.grid
    if p.shape != grid.shape:
        raise ValueError(f"field shape {p.shape} does not match grid {grid.shape}")
    out = np.zeros(grid.shape)
    for axis, (b, h) in enumerate(zip(grid.bc, grid.spacing)):
        if b is BC.PERIODIC:
            nb = np.roll(p, 1, axis) + np.roll(p, -1, axis)
        else:
            pad = [(0, 0)] * grid.dim
            pad[axis] = (1, 1)
            q = np.pad(p, pad, mode="constant" if b is BC.DIRICHLET else "edge")
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[axis] = slice(0, -2)
            hi[axis] = slice(2, None)
            nb = q[tuple(lo)] + q[tuple(hi)]
        out += (nb - 2 * p) / h**2
    if op.scale != 1.0:
        out *= op.scale
    if op.shift:
        out += op.shift * p
    return out


def fft_poisson_solve(grid: Grid, b: np.ndarray) -> np.ndarray:
    """Exact inverse of the periodic discrete Laplacian (zero-mean solution)."""
    lam = LaplaceOperator(grid).symbol()
    lam.flat[0] = 1.0
    bh = np.fft.fftn(b)
    bh.flat[0] = 0.0
    return np.real(np.fft.ifftn(bh / lam))


@dataclass
class SolverReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    tolerance: float = 0.0
    reason: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    def to_csv(self, path_or_file) -> None:
        close = False
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            path_or_file = open(path_or_file, "w", newline="")
            close = True
        try:
            w = csv.writer(path_or_file)
            w.writerow(["iteration", "residual"])
            for i, r in enumerate(self.residual_history):
                w.writerow([i, "%.17g" % r])
        finally:
            if close:
                path_or_file.close()


def relative_residual(op: Callable, x: np.ndarray, b: np.ndarray) -> float:
    bn = np.linalg.norm(b)
    rn = np.linalg.norm(b - op(x))
    if bn == 0.0:
        return float(rn)
    return float(rn / bn)


def _check_compatible(op: LaplaceOperator, b: np.ndarray):
    if getattr(op, "singular", False):
        scale = np.sqrt(np.mean(b * b))
        if abs(b.mean()) > 1e-8 * max(scale, 1e-300):
            raise SolverError("periodic Poisson right-hand side must have zero mean")


def bicgstab(
    op,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    precond: Optional[Callable] = None,
) -> tuple[np.ndarray, SolverReport]:
    """Van der Vorst's BiCGSTAB on a matrix-free operator.

    Convergence is declared on the true relative residual ``|b - A x| / |b|``;
    the recursively updated residual is only used to decide when to check it.
    One iteration is one full BiCGSTAB step (two operator applications).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_compatible(op, b)
    singular = getattr(op, "singular", False)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    report = SolverReport(tolerance=tol)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x[...] = 0.0
        report.residual_history.append(0.0)
        report.converged = True
        return x, report

    M = precond if precond is not None else (lambda v: v)
    r = b - op(x)
    res = np.linalg.norm(r) / bnorm
    report.residual_history.append(res)
    if res <= tol:
        report.converged = True
        if singular:
            x -= x.mean()
        return x, report

    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    tiny = np.finfo(float).tiny ** 0.5
    for k in range(1, max_iter + 1):
        rho_new = np.vdot(r_hat, r)
        if abs(rho_new) < tiny * bnorm**2:
            report.reason = "breakdown: rho"
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = M(p)
        v = op(p_hat)
        denom = np.vdot(r_hat, v)
        if denom == 0.0:
            report.reason = "breakdown: r_hat . v"
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= tol:
            x_try = x + alpha * p_hat
            true = relative_residual(op, x_try, b)
            if true <= tol:
                x = x_try
                report.iterations = k
                report.residual_history.append(true)
                report.converged = True
                break
        s_hat = M(s)
        t = op(s_hat)
        tt = np.vdot(t, t)
        if tt == 0.0:
            report.reason = "breakdown: t"
            break
        omega = np.vdot(t, s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        res = np.linalg.norm(r) / bnorm
        report.iterations = k
        if res <= tol:
            # guard against drift between recursive and true residual
            r = b - op(x)
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                report.residual_history.append(res)
                report.converged = True
                break
        report.residual_history.append(res)
        if omega == 0.0:
            report.reason = "breakdown: omega"
            break
    else:
        report.reason = "max_iter reached"
    if not report.converged and report.residual_history:
        report.residual_history[-1] = relative_residual(op, x, b)
    if singular:
        x -= x.mean()
    return x, report


# -- geometric multigrid ----------------------------------------------------


@dataclass
class MGConfig:
    """``levels=0`` picks the deepest hierarchy whose coarsest grid keeps >= 4 points per axis."""

    levels: int = 0
    pre_sweeps: int = 2
    post_sweeps: int = 2
    omega: float = 2.0 / 3.0
    coarse_sweeps: int = 50

    def __post_init__(self):
        if self.levels == 1 or self.levels < 0:
            raise ValueError("multigrid needs at least two levels")

    def resolved(self, grid: Grid) -> "MGConfig":
        if self.levels:
            return self
        return replace(self, levels=max_levels(grid))


def max_levels(grid: Grid) -> int:
    levels = 1
    n = min(grid.n)
    while all(v % 2 ** levels == 0 for v in grid.n) and n // 2 ** levels >= 4:
        levels += 1
    if levels < 2:
        raise ValueError(f"grid {grid.n} is too small for multigrid")
    return levels


def check_coarsenable(grid: Grid, levels: int):
    if not grid.all_periodic:
        raise ValueError("multigrid is implemented for all-periodic grids")
    f = 2 ** (levels - 1)
    for n in grid.n:
        if n % f or n // f < 4:
            raise ValueError(f"grid {grid.n} cannot be coarsened {levels - 1} times down to >= 4 points")


def _axis_filter(x: np.ndarray, axis: int, weights) -> np.ndarray:
    return weights[0] * np.roll(x, 1, axis) + weights[1] * x + weights[2] * np.roll(x, -1, axis)


def restrict_full_weighting(r: np.ndarray) -> np.ndarray:
    """Full weighting onto the even-indexed points (``[1/4, 1/2, 1/4]`` per axis)."""
    out = r
    for axis in range(r.ndim):
        out = _axis_filter(out, axis, (0.25, 0.5, 0.25))
    return out[tuple(slice(0, None, 2) for _ in range(r.ndim))]


def prolong_linear(e: np.ndarray) -> np.ndarray:
    """Bi/tri-linear interpolation from coarse to fine, coarse point I at fine 2I."""
    fine = np.zeros(tuple(2 * n for n in e.shape))
    fine[tuple(slice(0, None, 2) for _ in range(e.ndim))] = e
    for axis in range(e.ndim):
        fine = _axis_filter(fine, axis, (0.5, 1.0, 0.5))
    return fine


def jacobi(op: LaplaceOperator, b: np.ndarray, x: np.ndarray, sweeps: int, omega: float) -> np.ndarray:
    dinv = omega / op.diagonal()
    for _ in range(sweeps):
        x = x + dinv * (b - op(x))
    return x


def mg_vcycle(op: LaplaceOperator, b: np.ndarray, x0: Optional[np.ndarray], config: MGConfig) -> np.ndarray:
    """One V-cycle: Jacobi pre-smoothing, full-weighting restriction,
    recursive coarse correction, linear prolongation, Jacobi post-smoothing.
    Coarse operators are rediscretised on the coarse spacing."""
    config = config.resolved(op.grid)
    check_coarsenable(op.grid, config.levels)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    x = _vcycle(op, b, x, config, config.levels)
    if op.singular:
        x -= x.mean()
    return x


def _vcycle(op, b, x, config, levels):
    if levels == 1:
        return jacobi(op, b, x, config.coarse_sweeps, config.omega)
    x = jacobi(op, b, x, config.pre_sweeps, config.omega)
    r = b - op(x)
    coarse = LaplaceOperator(op.grid.coarsen(2), op.shift, op.scale)
    bc = restrict_full_weighting(r)
    ec = _vcycle(coarse, bc, np.zeros_like(bc), config, levels - 1)
    x = x + prolong_linear(ec)
    return jacobi(op, b, x, config.post_sweeps, config.omega)


def mg_solve(
    op: LaplaceOperator,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    config: Optional[MGConfig] = None,
    tol: float = 1e-6,
    max_cycles: int = 200,
    cycle: Optional[Callable] = None,
) -> tuple[np.ndarray, SolverReport]:
    """Repeat V-cycles until the relative residual drops below ``tol``.

    ``cycle(b, x) -> x`` overrides the classical V-cycle (used by the learned
    variants). Aborts when the residual exceeds ten times its initial value.
    """
    config = (config or MGConfig()).resolved(op.grid)
    if cycle is None:
        cycle = lambda rhs, x: mg_vcycle(op, rhs, x, config)
    _check_compatible(op, b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    report = SolverReport(tolerance=tol)
    r0 = relative_residual(op, x, b)
    report.residual_history.append(r0)
    if np.linalg.norm(b) == 0.0:
        report.converged = True
        return np.zeros_like(b), report
    if r0 <= tol:
        report.converged = True
        return (x - x.mean() if op.singular else x), report
    for k in range(1, max_cycles + 1):
        x = cycle(b, x)
        res = relative_residual(op, x, b)
        report.residual_history.append(res)
        report.iterations = k
        if not np.isfinite(res) or res > 10 * r0:
            report.reason = "diverged"
            break
        if res <= tol:
            report.converged = True
            break
    else:
        report.reason = "max_cycles reached"
    if op.singular:
        x -= x.mean()
    return x, report
