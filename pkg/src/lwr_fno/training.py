"""Supervised and physics-informed training of the FNO.

The physics term penalises the discrete conservation residual of a predicted
field, built with the same demand/supply interface flux the Godunov solver
uses, so exact solver output is a global minimiser.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .evaluation import mae
from .exceptions import ConfigurationError, TrainingDivergedError
from .fno import FnoConfig, FnoParams, forward_tensor, to_tensors
from .godunov import FundamentalDiagram, GridSpec
from .scenario import make_rng

logger = logging.getLogger(__name__)

MODES = ("fno", "pi_fno")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 2.0
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    lr_decay: tuple[int, float] = (25, 0.5)
    seed: int = 0
    mode: str = "pi_fno"

    def __post_init__(self):
        object.__setattr__(self, "lr_decay", (int(self.lr_decay[0]), float(self.lr_decay[1])))
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0 or self.lr_decay[0] < 1 or not 0 < self.lr_decay[1] <= 1:
            raise ConfigurationError(f"bad learning-rate schedule lr={self.lr}, decay={self.lr_decay}")

    @property
    def effective_lambda(self) -> float:
        return self.lam if self.mode == "pi_fno" else 0.0

    def lr_at(self, epoch: int) -> float:
        """Step-wise schedule: multiply by ``factor`` every ``step_epochs`` epochs."""
        step, factor = self.lr_decay
        return self.lr * factor ** (epoch // step)

    def to_dict(self) -> dict:
        return {"lam": self.lam, "epochs": self.epochs, "batch_size": self.batch_size,
                "lr": self.lr, "lr_decay": list(self.lr_decay), "seed": self.seed,
                "mode": self.mode}


@dataclass
class LossReport:
    """Per-epoch history. ``train_mae`` is the running MAE over the epoch's batches."""

    data_loss: list[float] = field(default_factory=list)
    phys_loss: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    train_mae: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.total)

    def rows(self):
        for e in range(len(self)):
            val = self.val_mae[e] if self.val_mae else float("nan")
            yield {"epoch": e + 1, "data_loss": self.data_loss[e], "phys_loss": self.phys_loss[e],
                   "total": self.total[e], "train_mae": self.train_mae[e], "val_mae": val,
                   "lr": self.lr[e]}

    def __eq__(self, other):
        if not isinstance(other, LossReport):
            return NotImplemented
        if self.best_epoch != other.best_epoch:
            return False
        return all(np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                   for f in ("data_loss", "phys_loss", "total", "train_mae", "val_mae", "lr"))


# -- losses -------------------------------------------------------------------

def data_loss(pred, target, u_max: float) -> ad.Tensor:
    """Sum over samples of the L2 norm of the normalised field error.

    ``pred`` is a tensor or array of shape ``(nx, nt)`` or ``(B, nx, nt)`` in
    veh/km; ``target`` likewise.
    """
    pred = ad.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = ad.scale(ad.sub(pred, target), 1.0 / u_max)
    norms = ad.l2norm(diff, axis=(-2, -1))
    return ad.sum_(norms) if norms.shape else norms


def conservation_residual(pred, fd: FundamentalDiagram, grid: GridSpec) -> ad.Tensor:
    """Normalised conservation residual on interior cells, ``t < nt - 1``.

    Shape ``([B,] nx - 2, nt - 1)``; entry ``[i - 1, j]`` is
    ``(u[i, j+1] - u[i, j] - dt/dx (q[i-1/2, j] - q[i+1/2, j])) / u_max``.
    Densities are clamped into ``[0, u_max]`` before the flux is evaluated.
    """
    pred = ad.as_tensor(pred)
    if pred.shape[-2:] != grid.shape:
        raise ValueError(f"field shape {pred.shape[-2:]} does not match grid {grid.shape}")
    if grid.nx < 3 or grid.nt < 2:
        raise ValueError("residual needs at least 3 cells and 2 time levels")
    u = ad.clamp(pred, 0.0, fd.u_max)
    faces = ad.godunov_flux(u[..., :-1, :-1], u[..., 1:, :-1], fd.u_max, fd.v_max_ms)
    ratio = grid.dt / grid.dx
    change = ad.sub(u[..., 1:-1, 1:], u[..., 1:-1, :-1])
    net_in = ad.sub(faces[..., :-1, :], faces[..., 1:, :])
    return ad.scale(ad.sub(change, ad.scale(net_in, ratio)), 1.0 / fd.u_max)


def physics_loss(pred, fd: FundamentalDiagram, grid: GridSpec) -> ad.Tensor:
    """L2 norm of the conservation residual; per sample for batched input."""
    return ad.l2norm(conservation_residual(pred, fd, grid), axis=(-2, -1))


def total_loss(pred, target, lam: float, fd: FundamentalDiagram, grid: GridSpec):
    """``data_loss + lam * sum(physics_loss)``.

    Returns:
        ``(total, data, phys)`` tensors; ``phys`` is summed over samples.
    """
    d = data_loss(pred, target, fd.u_max)
    p = physics_loss(pred, fd, grid)
    p = ad.sum_(p) if p.shape else p
    if lam == 0:
        return d, d, p
    return ad.add(d, ad.scale(p, lam)), d, p


# -- optimiser ------------------------------------------------------------------

class Adam:
    """Adam over a dict of arrays; complex arrays are updated as (re, im) pairs."""

    def __init__(self, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place."""
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            p_r = p.view(np.float64) if np.iscomplexobj(p) else p
            g_r = np.ascontiguousarray(g).view(np.float64) if np.iscomplexobj(g) else g
            if name not in self.m:
                self.m[name] = np.zeros_like(p_r)
                self.v[name] = np.zeros_like(p_r)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g_r
            v *= b2
            v += (1.0 - b2) * g_r * g_r
            p_r -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: Adam | None, lr: float) -> Adam:
    """Functional wrapper: one Adam update, returns the (mutated) state."""
    state = Adam() if state is None else state
    state.step(params, grads, lr)
    return state


# -- training loop ------------------------------------------------------------------

def predict_batched(x: np.ndarray, params: FnoParams, config: FnoConfig,
                    batch_size: int = 32) -> np.ndarray:
    tensors = to_tensors(params)
    out = [forward_tensor(x[s:s + batch_size], tensors, config).data
           for s in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,) + x.shape[-2:])


def loss_and_grads(params: FnoParams, x, y, fno_config: FnoConfig, lam: float,
                   fd: FundamentalDiagram, grid: GridSpec):
    """Forward + backward on one batch.

    Returns:
        ``(total, data, phys, pred, grads)`` with ``grads`` keyed by parameter name.
    """
    tensors = to_tensors(params, requires_grad=True)
    with ad.Tape() as tape:
        pred = forward_tensor(x, tensors, fno_config)
        total, d, p = total_loss(pred, y, lam, fd, grid)
    ad.backward(tape, total)
    grads = {k: t.grad if t.grad is not None else np.zeros_like(t.data)
             for k, t in tensors.items()}
    return float(total.data), float(d.data), float(p.data), pred.data, grads


def train(fno_config: FnoConfig, params: FnoParams, train_set, val_set, config: TrainConfig,
          fd: FundamentalDiagram, grid: GridSpec) -> tuple[FnoParams, LossReport]:
    """Mini-batch Adam training with a step-wise learning-rate schedule.

    Args:
        train_set: ``(inputs, fields)`` arrays of shape ``(n, C, nx, nt)`` and
            ``(n, nx, nt)`` (veh/km).
        val_set: same layout, or ``None``.

    Returns:
        The parameters of the best-validation epoch (last epoch when there is
        no validation set) and the loss history. The input ``params`` are not
        modified.
    """
    x_train, y_train = (np.asarray(a, dtype=np.float64) for a in train_set)
    params.check(fno_config)
    work = params.copy()
    report = LossReport()
    if config.epochs == 0:
        return work, report
    lam = config.effective_lambda
    rng = make_rng(config.seed)
    opt = Adam()
    best, best_mae = work.copy(), np.inf
    n = len(x_train)

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(n)
        sums = np.zeros(3)
        abs_err = 0.0
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            total, d, p, pred, grads = loss_and_grads(work, x_train[idx], y_train[idx],
                                                      fno_config, lam, fd, grid)
            if not np.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}, batch starting {start}: "
                    f"data={d}, phys={p}, lr={lr}"
                )
            opt.step(work.arrays, grads, lr)
            sums += (total, d, p)
            abs_err += np.abs(pred - y_train[idx]).sum()
        report.total.append(float(sums[0] / n))
        report.data_loss.append(float(sums[1] / n))
        report.phys_loss.append(float(sums[2] / n))
        report.train_mae.append(float(abs_err / y_train.size))
        report.lr.append(lr)
        if val_set is not None:
            val_mae = mae(predict_batched(val_set[0], work, fno_config), val_set[1])
            report.val_mae.append(val_mae)
            if val_mae < best_mae:
                best, best_mae, report.best_epoch = work.copy(), val_mae, epoch + 1
        logger.info("epoch %d lr=%.2e total=%.4f data=%.4f phys=%.4f train_mae=%.3f%s",
                    epoch + 1, lr, report.total[-1], report.data_loss[-1], report.phys_loss[-1],
                    report.train_mae[-1],
                    f" val_mae={report.val_mae[-1]:.3f}" if report.val_mae else "")

    if val_set is None:
        report.best_epoch = config.epochs
        return work, report
    return best, report


def lambda_sweep(fno_config: FnoConfig, params: FnoParams, train_set, val_set, lambdas,
                 base: TrainConfig, fd: FundamentalDiagram, grid: GridSpec):
    """Train one model per ``lambda`` from the same initial parameters.

    Returns:
        ``(best_lambda, table, runs)`` where ``table`` maps each lambda to its
        best validation MAE (ties go to the smaller lambda) and ``runs`` maps
        each lambda to its ``(params, report)``.
    """
    if val_set is None:
        raise ConfigurationError("lambda sweep needs a validation set")
    lambdas = sorted(float(v) for v in lambdas)
    if not lambdas:
        raise ConfigurationError("empty lambda list")
    table, runs = {}, {}
    for lam in lambdas:
        cfg = TrainConfig(lam=lam, epochs=base.epochs, batch_size=base.batch_size, lr=base.lr,
                          lr_decay=base.lr_decay, seed=base.seed,
                          mode="pi_fno" if lam > 0 else "fno")
        fitted, report = train(fno_config, params, train_set, val_set, cfg, fd, grid)
        table[lam] = min(report.val_mae) if report.val_mae else float("inf")
        runs[lam] = (fitted, report)
        logger.info("lambda=%g best val MAE %.4f", lam, table[lam])
    return select_lambda(table), table, runs


def select_lambda(table: dict[float, float], positive_only: bool = False) -> float:
    """Argmin of validation MAE; ties go to the smaller lambda."""
    candidates = [lam for lam in table if lam > 0 or not positive_only]
    if not candidates:
        raise ConfigurationError("no admissible lambda in the table")
    return min(candidates, key=lambda lam: (table[lam], lam))


def stratified_split(labels, fraction: float = 0.1, seed: int = 0):
    """Indices for a seeded, class-stratified train/validation split.

    Each label group contributes ``round(fraction * size)`` validation samples.
    """
    labels = list(labels)
    rng = make_rng(seed)
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    val = []
    for lab in sorted(groups, key=repr):
        members = np.asarray(groups[lab])
        k = int(round(fraction * len(members)))
        if k:
            val.extend(rng.choice(members, size=k, replace=False).tolist())
    val_set = set(val)
    train_idx = np.array([i for i in range(len(labels)) if i not in val_set], dtype=np.intp)
    return train_idx, np.array(sorted(val), dtype=np.intp)
