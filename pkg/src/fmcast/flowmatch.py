"""Conditional flow matching on the Gaussian optimal-transport path, plus the
deterministic least-squares baseline it is compared against."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .nncore import tensor as T
from .nncore.nets import ModelParams, copy_params
from .nncore.optim import Adam
from .nncore.tensor import NonFiniteError, Tensor, no_grad, value_and_grad

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"loss became non-finite at step {step}" + (f" ({detail})" if detail else ""))
        self.step = step


class PairSource(Protocol):
    """Anything that can draw training pairs ``(x1, cond)``; ``cond`` may be None."""

    def sample(self, rng: np.random.Generator, batch_size: int) -> tuple[np.ndarray, np.ndarray | None]: ...


@dataclass
class ArrayPairs:
    """Finite pool of (target, conditioning) pairs sampled with replacement."""

    x1: np.ndarray
    cond: np.ndarray | None = None

    def __post_init__(self):
        if self.cond is not None and len(self.cond) != len(self.x1):
            raise ValueError("x1 and cond must have the same length")

    def __len__(self) -> int:
        return len(self.x1)

    def sample(self, rng, batch_size):
        idx = rng.integers(0, len(self.x1), size=batch_size)
        return self.x1[idx], None if self.cond is None else self.cond[idx]


@dataclass
class SamplerPairs:
    """Pairs drawn from a callable ``draw(rng, n) -> (x1, cond)``."""

    draw: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray | None]]

    def sample(self, rng, batch_size):
        return self.draw(rng, batch_size)


@dataclass
class PathSample:
    x0: np.ndarray
    x1: np.ndarray
    t: float
    xt: np.ndarray
    dxt: np.ndarray


def interpolate(x0: np.ndarray, x1: np.ndarray, t) -> np.ndarray:
    """Gaussian OT path ``t * x1 + (1 - t) * x0``; ``t`` is scalar or one value per row."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        t = t.reshape((-1,) + (1,) * (x1.ndim - 1))
    return t * x1 + (1.0 - t) * x0


def sample_path(x1, rng: np.random.Generator, t: float | None = None) -> PathSample:
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = rng.standard_normal(x1.shape)
    t = float(rng.uniform()) if t is None else float(t)
    return PathSample(x0=x0, x1=x1, t=t, xt=interpolate(x0, x1, t), dxt=x1 - x0)


def squared_error(pred: Tensor, target, reduction: str = "mean") -> Tensor:
    """``mean`` averages over batch and entries; ``sum`` sums entries, averages over batch."""
    diff = pred - target
    if reduction == "mean":
        return T.mean(diff * diff)
    if reduction == "sum":
        return T.sum_(diff * diff) * (1.0 / pred.shape[0])
    raise ValueError(f"unknown reduction {reduction!r}")


def fm_objective(net, params, x1, cond, rng, t=None, reduction: str = "mean") -> Tensor:
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = rng.standard_normal(x1.shape)
    t = rng.uniform(size=len(x1)) if t is None else np.broadcast_to(np.asarray(t, float), (len(x1),))
    xt = interpolate(x0, x1, t)
    return squared_error(net(params, xt, t, cond), x1 - x0, reduction)


def fm_loss(net, params, x1, cond, rng, t=None, reduction: str = "mean") -> float:
    """Flow matching loss on one batch of ``(x1, cond)`` pairs (no gradients)."""
    with no_grad():
        return float(fm_objective(net, params, x1, cond, rng, t, reduction).data)


def deterministic_predict(net, params, cond) -> Tensor:
    """The baseline ``w(y)``: the velocity net with zeroed noise input at t=0."""
    cond = T.as_tensor(cond)
    spec = net.spec
    if getattr(spec, "kind", "") == "mlp":
        x = np.zeros((cond.shape[0], spec.dim))
    else:
        x = np.zeros((cond.shape[0], spec.in_channels) + cond.shape[2:])
    return net(params, x, 0.0, cond)


def deterministic_objective(net, params, x1, cond) -> Tensor:
    return squared_error(deterministic_predict(net, params, cond), x1)


def velocity_fn(net, params) -> Callable:
    """Numpy velocity callable ``v(t, x, cond)`` for the ODE solver."""
    frozen = {k: Tensor(v) for k, v in params.items()}

    def v(t, x, cond=None):
        with no_grad():
            return net(frozen, x, t, cond).data

    return v


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        write_loss_csv(path, self.losses, self.wall_ms)


def write_loss_csv(path, losses, wall_ms) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "wall_ms"])
        for i, (loss, ms) in enumerate(zip(losses, wall_ms)):
            w.writerow([i, repr(loss), f"{ms:.3f}"])


def fit(
    params: ModelParams,
    objective: Callable[[dict, np.random.Generator], Tensor],
    steps: int,
    lr: float,
    rng: np.random.Generator,
    label: str = "train",
    schedule: str = "constant",
) -> TrainResult:
    """Adam on ``objective(param_tensors, rng)`` for ``steps`` updates.

    ``schedule="cosine"`` anneals the learning rate from ``lr`` to ``lr / 100``.
    """
    if schedule not in ("constant", "cosine"):
        raise ValueError(f"unknown schedule {schedule!r}")
    params = copy_params(params)
    opt = Adam(lr)
    result = TrainResult(params)
    start = time.perf_counter()
    for step in range(steps):
        if schedule == "cosine":
            opt.lr = lr * (0.01 + 0.99 * 0.5 * (1 + np.cos(np.pi * step / steps)))
        try:
            loss, grads = value_and_grad(lambda p: objective(p, rng), params)
        except NonFiniteError as exc:
            raise TrainingDiverged(step, f"{label}: {exc}") from exc
        if not np.isfinite(loss):
            raise TrainingDiverged(step, label)
        params = opt.step(params, grads)
        result.losses.append(loss)
        result.wall_ms.append(1e3 * (time.perf_counter() - start))
        if steps >= 10 and (step + 1) % max(1, steps // 10) == 0:
            log.info("%s step %d/%d loss %.6g", label, step + 1, steps, loss)
    result.params = params
    return result


def train_fm(net, data: PairSource, steps: int, lr: float = 1e-5, batch_size: int = 8,
             rng: np.random.Generator | None = None, params: ModelParams | None = None,
             reduction: str = "mean", schedule: str = "constant") -> TrainResult:
    rng = np.random.default_rng() if rng is None else rng
    params = net.init(rng) if params is None else params

    def objective(p, rng):
        x1, cond = data.sample(rng, batch_size)
        return fm_objective(net, p, x1, cond, rng, reduction=reduction)

    return fit(params, objective, steps, lr, rng, label="fm", schedule=schedule)


def train_deterministic(net, data: PairSource, steps: int, lr: float = 1e-5, batch_size: int = 8,
                        rng: np.random.Generator | None = None,
                        params: ModelParams | None = None, schedule: str = "constant") -> TrainResult:
    rng = np.random.default_rng() if rng is None else rng
    params = net.init(rng) if params is None else params

    def objective(p, rng):
        x1, cond = data.sample(rng, batch_size)
        if cond is None:
            raise ValueError("the deterministic baseline needs conditioning inputs")
        return deterministic_objective(net, p, x1, cond)

    return fit(params, objective, steps, lr, rng, label="det", schedule=schedule)


def initial_direction_mean(net, params, y, n_draws: int, rng: np.random.Generator,
                           x_shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Monte-Carlo mean of the single Euler step ``x0 + v_0(x0 | y)``.

    ``y`` is one conditioning sample (or None). For a trained model this should
    approach ``E[y_next | y]``.
    """
    if x_shape is None:
        spec = net.spec
        if getattr(spec, "kind", "") == "mlp":
            x_shape = (spec.dim,)
        elif y is not None:
            x_shape = (spec.in_channels,) + tuple(np.shape(y)[1:])
        else:
            raise ValueError("x_shape is required for an unconditional image model")
    x0 = rng.standard_normal((n_draws,) + tuple(x_shape))
    cond = None if y is None else np.broadcast_to(np.asarray(y, float), (n_draws,) + np.shape(y)).copy()
    with no_grad():
        step = x0 + net(params, x0, 0.0, cond).data
    return step.mean(axis=0)


def least_squares_table(states: np.ndarray, targets: np.ndarray, weights: np.ndarray, n_states: int) -> np.ndarray:
    """Lookup table ``w`` minimising ``sum_j weights_j * ||w[states_j] - targets_j||^2``.

    Solved as a weighted linear least-squares problem over a one-hot design,
    i.e. the deterministic objective with an unrestricted per-state model.
    """
    states = np.asarray(states, dtype=int)
    targets = np.asarray(targets, dtype=np.float64).reshape(len(states), -1)
    sw = np.sqrt(np.asarray(weights, dtype=np.float64))
    design = np.zeros((len(states), n_states))
    design[np.arange(len(states)), states] = 1.0
    table, *_ = np.linalg.lstsq(design * sw[:, None], targets * sw[:, None], rcond=None)
    return table
