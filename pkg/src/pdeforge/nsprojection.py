"""Second-order projection method for periodic incompressible flow on a MAC grid.

Convection is Adams-Bashforth 2 in conservative form, viscosity Crank-Nicolson,
and the pressure Poisson equation is handed to a pluggable solver::

    (u* - u^n)/dt + (3 N(u^n) - N(u^(n-1)))/2 = (lap u* + lap u^n)/(2 Re) + f^(n+1)
    lap p = div u* / dt
    u^(n+1) = u* - dt grad p
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol

import numpy as np

from . import fieldgen
from .gridfield import Grid, divergence, gradient
from .linsolve import (
    LaplaceOperator,
    MGConfig,
    SolverError,
    SolverReport,
    bicgstab,
    fft_poisson_solve,
    mg_solve,
)

log = logging.getLogger(__name__)


# -- spatial operators on the staggered grid --------------------------------


def _fwd_avg(f, axis):
    return 0.5 * (f + np.roll(f, -1, axis))


def _back_avg(f, axis):
    return 0.5 * (f + np.roll(f, 1, axis))


def convection(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Conservative ``div(u u)`` at the velocity faces, second-order centred."""
    if not grid.all_periodic:
        raise ValueError("the projection solver supports all-periodic grids")
    h = grid.spacing
    out = np.zeros_like(u)
    for a in range(grid.dim):
        for b in range(grid.dim):
            if a == b:
                c = _fwd_avg(u[a], a) ** 2  # cell centres
                out[a] += (c - np.roll(c, 1, a)) / h[a]
            else:
                q = _back_avg(u[a], b) * _back_avg(u[b], a)  # cell edges
                out[a] += (np.roll(q, -1, b) - q) / h[b]
    return out


def vector_laplacian(u: np.ndarray, grid: Grid) -> np.ndarray:
    op = LaplaceOperator(grid)
    return np.stack([op(c) for c in u])


# -- forcing and state ------------------------------------------------------


@dataclass(frozen=True)
class KolmogorovForcing:
    """``f = sin(kappa y) x_hat`` sampled on the x-velocity faces."""

    kappa: int = 16
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kappa < 1:
            raise ValueError("forcing wavenumber must be >= 1")

    def __call__(self, grid: Grid, t: float) -> np.ndarray:
        f = np.zeros((grid.dim, *grid.shape))
        y = grid.face_coords(0)[1]
        f[0] = self.amplitude * np.sin(self.kappa * y)
        return f


def no_forcing(grid: Grid, t: float) -> np.ndarray:
    return np.zeros((grid.dim, *grid.shape))


@dataclass
class ProjectionState:
    grid: Grid
    u: np.ndarray
    u_prev: Optional[np.ndarray]
    p: np.ndarray
    t: float
    dt: float
    Re: float
    forcing: Callable = no_forcing
    step: int = 0

    def copy(self) -> "ProjectionState":
        return replace(self, u=self.u.copy(), u_prev=None if self.u_prev is None else self.u_prev.copy(), p=self.p.copy())

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.mean(np.sum(self.u**2, axis=0)))


# -- pressure solvers -------------------------------------------------------


class PPESolver(Protocol):
    name: str

    def __call__(self, op: LaplaceOperator, b: np.ndarray, p_prev: np.ndarray) -> tuple[np.ndarray, SolverReport]:
        ...


@dataclass
class FFTSolver:
    """Exact periodic solve; the reference pressure in comparisons."""

    name: str = "fft"

    def __call__(self, op, b, p_prev):
        p = fft_poisson_solve(op.grid, b)
        rep = SolverReport(iterations=0, residual_history=[0.0], converged=True, tolerance=0.0)
        return p, rep


@dataclass
class BiCGSTABSolver:
    """Unpreconditioned BiCGSTAB started from the previous pressure, zero,
    or ``guess(b)`` when one is given (e.g. a trained Poisson network)."""

    tol: float = 1e-6
    initial: str = "previous"
    guess: Optional[Callable] = None
    max_iter: int = 20_000
    name: str = "bicgstab"

    def initial_guess(self, b, p_prev):
        if self.guess is not None:
            return self.guess(b)
        if self.initial == "previous":
            return p_prev
        return np.zeros_like(b)

    def __call__(self, op, b, p_prev):
        return bicgstab(op, b, self.initial_guess(b, p_prev), tol=self.tol, max_iter=self.max_iter)


@dataclass
class MGSolver:
    config: MGConfig = field(default_factory=MGConfig)
    tol: float = 1e-6
    initial: str = "previous"
    cycle: Optional[Callable] = None
    max_cycles: int = 500
    name: str = "mg"

    def __call__(self, op, b, p_prev):
        x0 = p_prev if self.initial == "previous" else np.zeros_like(b)
        return mg_solve(op, b, x0, self.config, self.tol, self.max_cycles, cycle=self.cycle)


# -- one step ---------------------------------------------------------------


def helmholtz_operator(grid: Grid, dt: float, Re: float) -> LaplaceOperator:
    """``I - dt/(2 Re) lap``."""
    return LaplaceOperator(grid, shift=1.0, scale=-dt / (2 * Re))


def predictor(state: ProjectionState, tol: float = 1e-13, forcing: Optional[np.ndarray] = None) -> np.ndarray:
    """Intermediate velocity ``u*`` from the AB2/CN momentum step.

    The first step (``u_prev is None``) starts with ``u^(n-1) = u^n``.
    """
    g, dt, Re = state.grid, state.dt, state.Re
    u_prev = state.u if state.u_prev is None else state.u_prev
    f = state.forcing(g, state.t + dt) if forcing is None else forcing
    rhs = state.u + dt * (
        -0.5 * (3 * convection(state.u, g) - convection(u_prev, g))
        + (0.5 / Re) * vector_laplacian(state.u, g)
        + f
    )
    H = helmholtz_operator(g, dt, Re)
    out = np.empty_like(rhs)
    for a in range(g.dim):
        out[a], rep = bicgstab(H, rhs[a], state.u[a], tol=tol, max_iter=1000)
        if not rep.converged:
            raise SolverError(f"Helmholtz solve did not converge ({rep.reason})")
    return out


def momentum_residual(u_star, u_n, u_nm1, f, dt, Re, grid) -> np.ndarray:
    """Pointwise residual of the discrete momentum step (zero for a consistent set)."""
    lhs = (u_star - u_n) / dt + 0.5 * (3 * convection(u_n, grid) - convection(u_nm1, grid))
    rhs = (0.5 / Re) * (vector_laplacian(u_star, grid) + vector_laplacian(u_n, grid)) + f
    return lhs - rhs


def ppe_rhs(u_star: np.ndarray, dt: float, grid: Grid) -> np.ndarray:
    b = divergence(u_star, grid, staggered=True) / dt
    return b - b.mean()


def corrector(u_star: np.ndarray, p: np.ndarray, dt: float, grid: Grid) -> np.ndarray:
    return u_star - dt * gradient(p, grid, staggered=True)


def step(state: ProjectionState, solver: PPESolver) -> tuple[ProjectionState, dict]:
    """Advance one step; returns the new state and step diagnostics."""
    g = state.grid
    u_star = predictor(state)
    b = ppe_rhs(u_star, state.dt, g)
    op = LaplaceOperator(g)
    p, rep = solver(op, b, state.p)
    u_new = corrector(u_star, p, state.dt, g)
    new = ProjectionState(g, u_new, state.u, p, state.t + state.dt, state.dt, state.Re, state.forcing, state.step + 1)
    return new, {"rhs": b, "u_star": u_star, "report": rep}


# -- cases ------------------------------------------------------------------


@dataclass(frozen=True)
class CaseConfig:
    name: str
    n: int = 128
    Re: float = 500.0
    dt: float = 1e-3
    kappa: int = 8
    initial: str = "grf"  # grf | spectrum | taylor-green
    u_rms: Optional[float] = 1.0  # rescale the initial field; None keeps it as generated
    grf: dict = field(default_factory=lambda: {"lam": 0.1, "nu": 1.0, "sigma2": 1.0})
    spectrum: dict = field(default_factory=lambda: {"kind": "vkp", "u_rms": 1.0, "k_e": 4.0, "k_eta": 1e3, "alpha": 1.453})
    modes: int = 512


# Kolmogorov cases at desk scale; the full-scale settings are kept for reference.
DESK_CASES = {
    "I": CaseConfig("I", kappa=8, initial="grf"),
    "II": CaseConfig("II", kappa=16, initial="grf"),
    "III": CaseConfig("III", kappa=8, initial="spectrum"),
    "IV": CaseConfig("IV", kappa=16, initial="spectrum"),
}
FULL_SCALE_CASES = {
    "I": CaseConfig("I", n=1024, Re=5000.0, dt=5e-4, kappa=16, initial="grf", u_rms=None),
    "II": CaseConfig("II", n=1024, Re=5000.0, dt=5e-4, kappa=32, initial="grf", u_rms=None),
    "III": CaseConfig("III", n=1024, Re=5000.0, dt=5e-4, kappa=16, initial="spectrum", u_rms=None),
    "IV": CaseConfig("IV", n=1024, Re=5000.0, dt=5e-4, kappa=32, initial="spectrum", u_rms=None),
}


def taylor_green(grid: Grid, t: float = 0.0, Re: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    """Decaying Taylor-Green vortex velocity (on faces) and pressure (centres)."""
    decay = math.exp(-2 * t / Re)
    x0, y0 = grid.face_coords(0)
    x1, y1 = grid.face_coords(1)
    u = np.stack([np.sin(x0) * np.cos(y0) * decay, -np.cos(x1) * np.sin(y1) * decay])
    xc, yc = grid.center_coords()
    p = 0.25 * (np.cos(2 * xc) + np.cos(2 * yc)) * decay**2
    return u, p


def initial_state(case: CaseConfig, seed: int = 0) -> ProjectionState:
    grid = Grid.periodic(case.n, 2)
    if case.initial == "taylor-green":
        u, p = taylor_green(grid, 0.0, case.Re)
        return ProjectionState(grid, u, None, p - p.mean(), 0.0, case.dt, case.Re, no_forcing)
    if case.initial == "grf":
        u = fieldgen.grf_velocity(grid, fieldgen.MaternParams(**case.grf), seed)
    elif case.initial == "spectrum":
        u = fieldgen.synth_vector_field(grid, fieldgen.spectrum_from_dict(case.spectrum), case.modes, seed)
    else:
        raise ValueError(f"unknown initial condition {case.initial!r}")
    if case.u_rms is not None:
        u *= case.u_rms / math.sqrt(np.mean(np.sum(u**2, axis=0)) / grid.dim)
    # make the generated field discretely solenoidal before the first step
    b = divergence(u, grid)
    u = u - gradient(fft_poisson_solve(grid, b - b.mean()), grid)
    return ProjectionState(grid, u, None, np.zeros(grid.shape), 0.0, case.dt, case.Re, KolmogorovForcing(case.kappa))


@dataclass
class Trajectory:
    states: list
    times: list
    metrics: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    probe_reports: dict = field(default_factory=dict)
    error: str = ""

    @property
    def final(self) -> ProjectionState:
        return self.states[-1]


def run(
    state: ProjectionState,
    solver: PPESolver,
    steps: int,
    reference: Optional[PPESolver] = None,
    probes: Optional[dict] = None,
    keep_every: int = 0,
    callback: Optional[Callable] = None,
) -> Trajectory:
    """Advance ``steps`` steps with ``solver``.

    ``reference`` (e.g. :class:`FFTSolver`) solves each step's PPE alongside
    to measure the solver's pressure error. ``probes`` maps names to extra
    solvers evaluated on the same right-hand side without affecting the
    trajectory; each probe sees the reference pressure of the previous step
    as ``p_prev``. Per-step metrics:

    * ``p_change``: |p(t) - p(t - dt)| / |p(t)| of the reference pressure;
    * ``<name>_error``: |p_name - p_ref| / |p_ref| for solver and probes;
    * ``<name>_iters``: iteration count.
    """
    probes = probes or {}
    traj = Trajectory([state.copy()], [state.t])
    traj.probe_reports = {k: [] for k in probes}
    p_ref_prev = state.p
    for k in range(steps):
        try:
            t0 = time.perf_counter()
            new, info = step(state, solver)
            elapsed = time.perf_counter() - t0
        except (SolverError, FloatingPointError) as exc:
            traj.error = f"step {k + 1}: {exc}"
            log.error("run stopped: %s", traj.error)
            break
        rep = info["report"]
        if not rep.converged:
            traj.error = f"step {k + 1}: PPE solver {solver.name} did not converge ({rep.reason})"
            log.error("run stopped: %s", traj.error)
            break
        m = {"step": new.step, "t": new.t, f"{solver.name}_iters": rep.iterations,
             f"{solver.name}_residual": rep.final_residual, "seconds": elapsed,
             "kinetic_energy": new.kinetic_energy()}
        op = LaplaceOperator(state.grid)
        if reference is not None:
            p_ref, _ = reference(op, info["rhs"], p_ref_prev)
            nref = np.linalg.norm(p_ref)
            if k > 0 or state.step > 0:
                m["p_change"] = float(np.linalg.norm(p_ref - p_ref_prev) / nref)
            m[f"{solver.name}_error"] = float(np.linalg.norm(new.p - p_ref) / nref)
            for name, probe in probes.items():
                p_probe, prep = probe(op, info["rhs"], p_ref_prev)
                m[f"{name}_iters"] = prep.iterations
                m[f"{name}_error"] = float(np.linalg.norm(p_probe - p_ref) / nref)
                traj.probe_reports[name].append(prep)
            p_ref_prev = p_ref
        if not np.all(np.isfinite(new.u)):
            traj.error = f"step {k + 1}: non-finite velocity"
            break
        traj.metrics.append(m)
        traj.reports.append(rep)
        state = new
        if callback is not None:
            callback(state, m)
        if keep_every and new.step % keep_every == 0:
            traj.states.append(state.copy())
            traj.times.append(state.t)
    if traj.states[-1].step != state.step:
        traj.states.append(state.copy())
        traj.times.append(state.t)
    return traj


def run_case(
    case,
    solver: PPESolver,
    steps: int,
    seed: int = 0,
    reference: Optional[PPESolver] = None,
    probes: Optional[dict] = None,
    keep_every: int = 0,
    spinup: int = 0,
    spinup_solver: Optional[PPESolver] = None,
) -> Trajectory:
    """Run a Kolmogorov case (name from :data:`DESK_CASES` or a :class:`CaseConfig`).

    ``spinup`` steps are taken first with ``spinup_solver`` (exact FFT solve
    by default) and are not recorded.
    """
    if isinstance(case, str):
        case = DESK_CASES[case]
    state = initial_state(case, seed)
    if spinup:
        pre = run(state, spinup_solver or FFTSolver(), spinup)
        if pre.error:
            raise SolverError(f"spin-up failed: {pre.error}")
        state = pre.final
    return run(state, solver, steps, reference=reference, probes=probes, keep_every=keep_every)
