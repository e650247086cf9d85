"""``pdeforge`` command line: generate, solve, train, dns, spectrum, bench.

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from .. import fieldgen, nsprojection as ns
from ..gridfield import Grid, estimate_spectrum
from ..linsolve import LaplaceOperator, MGConfig, SolverError, bicgstab, mg_solve
from ..pairgen import generate_dataset
from .container import ContainerError
from .runconfig import RunConfig
from .store import (load_dataset, load_model, load_trajectory, save_dataset, save_model, save_trajectory,
                    write_rows)

log = logging.getLogger("pdeforge")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
SOLVERS = ("bicgstab", "mg", "poisson-nn", "nmg", "cnn-mg", "wtcnn-mg")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _config(args, command) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    return RunConfig(command, params)


def _spectrum_model(args):
    if args.spectrum == "power":
        return fieldgen.PowerLaw(args.amplitude, args.exponent, args.k_flat)
    return fieldgen.vkp_spectrum(args.u_rms)


# -- generate -----------------------------------------------------------------


def cmd_generate(args):
    grid = Grid.periodic(args.grid, args.dim)
    spec = _spectrum_model(args) if args.method == "spectrum" else None
    ds = generate_dataset(args.method, args.samples, grid, args.seed, spectrum=spec, M=args.modes,
                          smooth_iters=args.smooth_iters, validation_fraction=args.validation_fraction)
    save_dataset(args.out, ds, _config(args, "generate"))
    print(f"wrote {len(ds)} pairs ({len(ds.train)} train / {len(ds.validation)} validation) to {args.out}")
    return EXIT_OK


# -- solve / bench --------------------------------------------------------------


def _select(ds, split):
    if split == "train":
        return list(ds.train)
    if split == "validation":
        return list(ds.validation)
    return list(range(len(ds.pairs)))


def make_solver(name, model_path, tol, max_iter):
    """``solve(b) -> (x, report)`` for a named solver."""
    if name not in SOLVERS:
        raise UsageError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")
    model = None
    if name in ("poisson-nn", "nmg", "cnn-mg", "wtcnn-mg"):
        if not model_path:
            raise UsageError(f"solver {name!r} needs --model")
        model = load_model(model_path)
        kind = model.arch["kind"]
        if (name == "poisson-nn") != (kind == "poisson_nn") or (kind == "learned_mg" and model.variant != name):
            raise UsageError(f"model {model_path} holds a {model.arch.get('variant', kind)} model, not {name}")

    def solve(op, b):
        if name == "bicgstab":
            return bicgstab(op, b, None, tol=tol, max_iter=max_iter)
        if name == "poisson-nn":
            return bicgstab(op, b, model.predict(b), tol=tol, max_iter=max_iter)
        if name == "mg":
            return mg_solve(op, b, None, MGConfig(), tol=tol, max_cycles=max_iter)
        return mg_solve(op, b, None, model.config, tol=tol, max_cycles=max_iter, cycle=model.as_cycle())

    return solve


def cmd_solve(args):
    ds = load_dataset(args.input)
    idx = _select(ds, args.split)
    if not idx:
        raise UsageError("no pairs")
    solve = make_solver(args.solver, args.model, args.tol, args.max_iter)
    op = LaplaceOperator(ds.grid)
    rows, failed = [], 0
    for i in idx:
        pair = ds.pairs[i]
        x, rep = solve(op, pair.rhs)
        err = float(np.linalg.norm(x - pair.solution) / np.linalg.norm(pair.solution))
        failed += not rep.converged
        for it, r in enumerate(rep.residual_history):
            rows.append((i, it, r))
        print(f"pair {i}: {rep.iterations} iterations, residual {rep.final_residual:.3e}, "
              f"solution error {err:.3e}{'' if rep.converged else ' (NOT CONVERGED: ' + rep.reason + ')'}")
    write_rows(args.out, ("pair", "iteration", "relative_residual"), rows)
    _write_config(args.out, _config(args, "solve"))
    if failed:
        raise NumericalFailure(f"{failed} of {len(idx)} solves did not converge")
    return EXIT_OK


def cmd_bench(args):
    ds = load_dataset(args.input)
    idx = _select(ds, args.split)
    if not idx:
        raise UsageError("no pairs")
    names = [s.strip() for s in args.solvers.split(",") if s.strip()]
    models = dict(m.split("=", 1) for m in args.model) if args.model else {}
    columns, solvers = [], []
    for name in names:
        label = name if name not in columns else f"{name}#{columns.count(name) + sum(c.startswith(name + '#') for c in columns) + 1}"
        columns.append(label)
        solvers.append(make_solver(name, models.get(name), args.tol, args.max_iter))
    op = LaplaceOperator(ds.grid)
    iters = np.zeros((len(idx), len(names)), dtype=int)
    per_iter = np.zeros((len(idx), len(names)))
    first = np.zeros((len(idx), len(names)))
    for r, i in enumerate(idx):
        b = ds.pairs[i].rhs
        for c, solve in enumerate(solvers):
            t0 = time.perf_counter()
            _, rep = solve(op, b)
            elapsed = time.perf_counter() - t0
            iters[r, c] = rep.iterations if rep.converged else -1
            per_iter[r, c] = elapsed / max(rep.iterations, 1)
            first[r, c] = rep.residual_history[1] if len(rep.residual_history) > 1 else rep.residual_history[0]
    header = ["pair"] + [f"{c}_iters" for c in columns] + [f"{c}_first_residual" for c in columns] \
        + [f"{c}_seconds_per_iter" for c in columns]
    rows = [[i, *iters[r], *first[r], *per_iter[r]] for r, i in enumerate(idx)]
    write_rows(args.out, header, rows)
    _write_config(args.out, _config(args, "bench"))
    width = max(len(c) for c in columns) + 2
    print("solver".ljust(width) + "mean iters  median first residual  s/iter (informational)")
    for c, label in enumerate(columns):
        ok = iters[:, c] >= 0
        mean = iters[ok, c].mean() if ok.any() else float("nan")
        print(f"{label.ljust(width)}{mean:10.2f}  {np.median(first[:, c]):21.3e}  {np.median(per_iter[:, c]):.3e}"
              + ("" if ok.all() else f"  ({(~ok).sum()} not converged)"))
    if (iters < 0).any():
        raise NumericalFailure("some solves did not converge")
    return EXIT_OK


def _write_config(csv_path, config):
    with open(str(csv_path) + ".config.json", "w") as fh:
        fh.write(config.dumps() + "\n")


# -- train ----------------------------------------------------------------------


def cmd_train(args):
    from ..learned import LearnedMG, PoissonNN, Schedule, TrainingError, train

    ds = load_dataset(args.input)
    if not ds.train:
        raise UsageError("no pairs in the training split")
    if args.model_type == "poisson-nn":
        model = PoissonNN(ds.grid.n, ds.grid.length, args.kernel_net, args.boundary_net or None)
    else:
        scale = float(np.sqrt(np.mean(ds.rhs(ds.train) ** 2)))
        model = LearnedMG(ds.grid, args.model_type, MGConfig(levels=args.levels), channels=args.channels,
                          input_scale=scale)
    sched = Schedule(epochs=args.epochs, lr=args.lr, halve_every=args.halve_every, batch_size=args.batch_size,
                     lambda_eq=args.lambda_eq, lambda_wd=args.lambda_wd, cycles=args.cycles, supervise=args.supervise,
                     seed=args.seed)
    try:
        model, curves = train(model, ds, sched, log_every=args.log_every)
    except TrainingError as exc:
        raise NumericalFailure(str(exc)) from None
    cfg = _config(args, "train")
    save_model(args.out, model, cfg, {"schedule": sched.to_dict(), "final_loss": curves.loss[-1]})
    if args.loss_csv:
        curves.to_csv(args.loss_csv)
    print(f"trained {model.arch.get('variant', model.arch['kind'])} for {args.epochs} epochs: "
          f"loss {curves.loss[-1]:.4e}, validation L_p {curves.val_loss_p[-1]:.4e}")
    return EXIT_OK


# -- dns ------------------------------------------------------------------------


def cmd_dns(args):
    base = ns.DESK_CASES[args.case]
    case = ns.CaseConfig(base.name, n=args.grid or base.n, Re=args.Re or base.Re, dt=args.dt or base.dt,
                         kappa=args.kappa or base.kappa, initial=base.initial)
    if args.solver == "fft":
        solver = ns.FFTSolver()
    elif args.solver == "bicgstab":
        solver = ns.BiCGSTABSolver(tol=args.tol)
    elif args.solver == "mg":
        solver = ns.MGSolver(tol=args.tol)
    elif args.solver == "poisson-nn":
        if not args.model:
            raise UsageError("solver 'poisson-nn' needs --model")
        model = load_model(args.model)
        solver = ns.BiCGSTABSolver(tol=args.tol, guess=model.predict, name="poisson_nn")
    else:
        raise UsageError(f"unknown dns solver {args.solver!r}")
    traj = ns.run_case(case, solver, args.steps, seed=args.seed, reference=ns.FFTSolver(),
                       keep_every=args.keep_every, spinup=args.spinup)
    save_trajectory(args.out, traj, _config(args, "dns"))
    if args.metrics and traj.metrics:
        keys = sorted({k for m in traj.metrics for k in m})
        write_rows(args.metrics, keys, [[m.get(k, float("nan")) for k in keys] for m in traj.metrics])
    if traj.error:
        raise NumericalFailure(traj.error)
    iters = [m.get(f"{solver.name}_iters", 0) for m in traj.metrics]
    print(f"case {case.name}: {len(traj.metrics)} steps to t={traj.final.t:.4g}, mean PPE iterations {np.mean(iters):.2f}")
    return EXIT_OK


# -- spectrum -------------------------------------------------------------------


def cmd_spectrum(args):
    from .container import read
    from .store import grid_from_dict

    c = read(args.input)
    kind = c.meta.get("kind")
    if kind not in ("dataset", "trajectory"):
        raise UsageError(f"{args.input}: spectra need a dataset or trajectory container, found {kind!r}")
    grid = grid_from_dict(c.meta["grid"])
    field = args.field or ("solution" if kind == "dataset" else "p")
    if field not in c.arrays:
        raise UsageError(f"{args.input}: no array {field!r} (have {', '.join(sorted(c.arrays))})")
    data = c[field]
    if len(data) == 0:
        raise UsageError("no pairs")
    spectra = [estimate_spectrum(np.asarray(f, dtype=float), grid) for f in data]
    k = spectra[0].k
    e = np.mean([s.energy for s in spectra], axis=0)
    write_rows(args.out, ("k", "energy"), zip(k, e))
    _write_config(args.out, _config(args, "spectrum"))
    print(f"averaged {len(spectra)} {field} spectra over {len(k)} shells")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdeforge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate Poisson training pairs")
    g.add_argument("--method", choices=("grf", "spectrum"), required=True)
    g.add_argument("--dim", type=int, choices=(2, 3), default=2)
    g.add_argument("--grid", type=int, default=64)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--modes", type=int, default=512, help="spectrum modes M")
    g.add_argument("--spectrum", choices=("power", "vkp"), default="power")
    g.add_argument("--amplitude", type=float, default=0.5)
    g.add_argument("--exponent", type=float, default=-7 / 3)
    g.add_argument("--k-flat", type=float, default=6.0, help="power law held flat below this |k|")
    g.add_argument("--u-rms", type=float, default=1.0)
    g.add_argument("--smooth-iters", type=int, default=0)
    g.add_argument("--validation-fraction", type=float, default=0.1)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve every pair and export residual histories")
    s.add_argument("--solver", choices=SOLVERS, required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--model")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=10_000)
    s.add_argument("--split", choices=("all", "train", "validation"), default="all")
    s.add_argument("--out", required=True, help="CSV of residual histories")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train a Poisson network or learned multigrid")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--model-type", choices=("poisson-nn", "nmg", "cnn-mg", "wtcnn-mg"), required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-csv")
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--halve-every", type=int, default=500)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lambda-eq", type=float, default=1.0)
    t.add_argument("--lambda-wd", type=float, default=1e-6)
    t.add_argument("--cycles", type=int, default=1)
    t.add_argument("--supervise", choices=("last", "all"), default="last",
                   help="learned multigrid: fit the last cycle only, or every cycle")
    t.add_argument("--levels", type=int, default=0)
    t.add_argument("--channels", type=int, default=8)
    t.add_argument("--kernel-net", choices=("fourier", "siren"), default="fourier")
    t.add_argument("--boundary-net", choices=("fourier", "siren", ""), default="fourier")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("dns", help="run a forced periodic flow with the projection method")
    d.add_argument("--case", choices=sorted(ns.DESK_CASES), default="I")
    d.add_argument("--grid", type=int)
    d.add_argument("--Re", type=float)
    d.add_argument("--dt", type=float)
    d.add_argument("--kappa", type=int)
    d.add_argument("--steps", type=int, required=True)
    d.add_argument("--spinup", type=int, default=0)
    d.add_argument("--solver", choices=("fft", "bicgstab", "mg", "poisson-nn"), default="bicgstab")
    d.add_argument("--model")
    d.add_argument("--tol", type=float, default=1e-6)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--keep-every", type=int, default=0)
    d.add_argument("--out", required=True)
    d.add_argument("--metrics", help="per-step metrics CSV")
    d.set_defaults(func=cmd_dns)

    sp = sub.add_parser("spectrum", help="ensemble-averaged radial spectrum as CSV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--field", help="array name (default: solution or p)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_spectrum)

    b = sub.add_parser("bench", help="iteration counts and timings across solvers")
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--solvers", default="bicgstab,mg")
    b.add_argument("--model", action="append", help="SOLVER=model.pdef, repeatable")
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--max-iter", type=int, default=10_000)
    b.add_argument("--split", choices=("all", "train", "validation"), default="validation")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContainerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, SolverError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
