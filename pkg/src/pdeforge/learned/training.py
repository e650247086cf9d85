"""Adam training loop shared by the Poisson network and the learned multigrid."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch

from . import kernels as K

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class Schedule:
    epochs: int = 2000
    lr: float = 1e-3
    halve_every: int = 500
    batch_size: int = 16
    lambda_eq: float = 1.0
    lambda_wd: float = 1e-6
    cycles: int = 1  # V-cycles per forward pass, learned multigrid only
    supervise: str = "last"  # learned multigrid: "last" cycle output, or "all" (sum of log losses per cycle)
    seed: int = 0
    shuffle: bool = True

    def lr_at(self, epoch: int) -> float:
        return self.lr * 0.5 ** (epoch // self.halve_every)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossCurves:
    epoch: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    loss_p: list = field(default_factory=list)
    loss_eq: list = field(default_factory=list)
    weight_decay: list = field(default_factory=list)
    val_loss_p: list = field(default_factory=list)

    def columns(self) -> dict:
        return {k: np.asarray(v, dtype=float) for k, v in asdict(self).items()}

    def to_csv(self, path) -> None:
        cols = self.columns()
        names = list(cols)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for row in zip(*(cols[n] for n in names)):
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def weight_norm2(model: torch.nn.Module) -> torch.Tensor:
    return sum((p**2).sum() for p in model.parameters() if p.requires_grad)


def losses(model, b: torch.Tensor, p: torch.Tensor, spacing, schedule: Schedule):
    """``(total, L_p, L_eq, ||theta||^2)`` for one batch."""
    d = len(spacing)
    wd = weight_norm2(model) if schedule.lambda_wd else torch.zeros((), dtype=torch.float64)

    def fit(pred):
        lp = K.relative_l2(pred, p, d)
        return lp, K.relative_l2(K.periodic_laplacian(pred, spacing), b, d)

    if hasattr(model, "levels") and schedule.supervise == "all":
        # every cycle is asked for the same relative improvement; log keeps the
        # first cycle's much larger error from drowning out the later ones
        total = schedule.lambda_wd * wd
        x = None
        for _ in range(schedule.cycles):
            x = model(b, x)
            lp, leq = fit(x)
            total = total + torch.log(lp + schedule.lambda_eq * leq)
        return total, lp, leq, wd
    if schedule.supervise not in ("last", "all"):
        raise ValueError(f"unknown supervision mode {schedule.supervise!r}")
    if hasattr(model, "levels"):
        pred = model.train_forward(b, schedule.cycles)
    else:
        pred = model.train_forward(b)
    lp, leq = fit(pred)
    total = lp + schedule.lambda_eq * leq + schedule.lambda_wd * wd
    return total, lp, leq, wd


def train(model: torch.nn.Module, dataset, schedule: Optional[Schedule] = None,
          log_every: int = 100, callback=None):
    """Minimise ``L_p + lambda_eq L_eq + lambda_wd ||theta||^2`` with Adam.

    The learning rate halves every ``schedule.halve_every`` epochs. Each epoch
    sweeps the training split in minibatches; the curves hold per-epoch means
    plus the relative solution error on the validation split. Raises
    :class:`TrainingError` on a non-finite loss.
    """
    schedule = schedule or Schedule()
    if not dataset.train:
        raise TrainingError("training split is empty")
    model_shape = tuple(model.grid.shape) if hasattr(model, "grid") else tuple(getattr(model, "n", ()))
    if model_shape and model_shape != tuple(dataset.grid.shape):
        raise ValueError(f"model built for grid {model_shape}, dataset grid is {tuple(dataset.grid.shape)}")
    torch.manual_seed(schedule.seed)
    rng = np.random.default_rng(schedule.seed)
    spacing = dataset.grid.spacing
    b_all = torch.as_tensor(dataset.rhs(dataset.train))
    p_all = torch.as_tensor(dataset.solutions(dataset.train))
    b_val = torch.as_tensor(dataset.rhs(dataset.validation)) if dataset.validation else None
    p_val = torch.as_tensor(dataset.solutions(dataset.validation)) if dataset.validation else None

    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=schedule.lr)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=schedule.halve_every, gamma=0.5)
    curves = LossCurves()
    n = len(b_all)
    bs = max(1, min(schedule.batch_size, n))
    for epoch in range(schedule.epochs):
        order = rng.permutation(n) if schedule.shuffle else np.arange(n)
        sums = np.zeros(4)
        batches = 0
        for start in range(0, n, bs):
            idx = torch.as_tensor(order[start:start + bs])
            opt.zero_grad()
            total, lp, leq, wd = losses(model, b_all[idx], p_all[idx], spacing, schedule)
            if not torch.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batches}: "
                    f"L_p={float(lp.detach()):.3g} L_eq={float(leq.detach()):.3g} |theta|^2={float(wd.detach()):.3g} lr={sched.get_last_lr()[0]:.3g}"
                )
            total.backward()
            opt.step()
            sums += [float(v.detach()) for v in (total, lp, leq, wd)]
            batches += 1
        curves.epoch.append(epoch)
        curves.lr.append(sched.get_last_lr()[0])
        for name, v in zip(("loss", "loss_p", "loss_eq", "weight_decay"), sums / batches):
            getattr(curves, name).append(v)
        if b_val is not None:
            with torch.no_grad():
                pred = model.train_forward(b_val, schedule.cycles) if hasattr(model, "levels") else model.train_forward(b_val)
                curves.val_loss_p.append(float(K.relative_l2(pred, p_val, len(spacing))))
        else:
            curves.val_loss_p.append(math.nan)
        sched.step()
        if log_every and (epoch % log_every == 0 or epoch == schedule.epochs - 1):
            log.info("epoch %d loss %.4g L_p %.4g L_eq %.4g val %.4g", epoch, curves.loss[-1],
                     curves.loss_p[-1], curves.loss_eq[-1], curves.val_loss_p[-1])
        if callback is not None:
            callback(epoch, curves)
    return model, curves
