"""Few-step samplers distilled from a pretrained flow matching model.

Four routes are provided: direct distillation onto the ODE solution,
progressive step-halving distillation, adversarial distillation (hinge GAN
with a gradient penalty on real samples, optionally blended with the direct
distillation loss) and rectification by retraining on self-generated
couplings.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flowmatch import PairSource, TrainResult, fit, interpolate, squared_error, velocity_fn
from .nncore import input_gradient
from .nncore import tensor as T
from .nncore.nets import ModelParams, copy_params
from .nncore.optim import Adam
from .nncore.tensor import NonFiniteError, Tensor, no_grad, value_and_grad
from .odesolve import SolverConfig, solve

log = logging.getLogger(__name__)

DISTILL_SOLVER = SolverConfig("midpoint", 10)
ADD_SOLVER = SolverConfig("euler", 10)


def _batch_axes(x: Tensor) -> tuple[int, ...]:
    return tuple(range(1, x.ndim))


# ---------------------------------------------------------------------------
# heads


class GeneratorHead:
    """One-step generator ``G(x0 | y) = x0 + v_0(x0 | y)``."""

    def __init__(self, net, params: ModelParams):
        self.net = net
        self.params = copy_params(params)
        self.evaluations = 0

    @staticmethod
    def forward(net, params, x0, cond=None) -> Tensor:
        return T.as_tensor(x0) + net(params, x0, 0.0, cond)

    def __call__(self, x0, cond=None) -> np.ndarray:
        self.evaluations += 1
        with no_grad():
            return self.forward(self.net, self.params, x0, cond).data


class DiscriminatorHead:
    """Critic ``D(x | y) = sum_i v_0(x | y)_i``, one score per batch element."""

    def __init__(self, net, params: ModelParams):
        self.net = net
        self.params = copy_params(params)

    @staticmethod
    def forward(net, params, x, cond=None) -> Tensor:
        out = net(params, x, 0.0, cond)
        return T.sum_(out, axis=_batch_axes(out))

    def __call__(self, x, cond=None) -> np.ndarray:
        with no_grad():
            return self.forward(self.net, self.params, x, cond).data


@dataclass
class ProgressiveStage:
    """Student sampling in ``m`` Euler-like steps of size ``1/m``."""

    m: int
    params: ModelParams
    net: object = field(repr=False, default=None)
    losses: list[float] = field(default_factory=list, repr=False)
    wall_ms: list[float] = field(default_factory=list, repr=False)
    evaluations: int = field(default=0, repr=False)

    @staticmethod
    def step_tensor(net, params, x, t, m: int, cond=None) -> Tensor:
        return T.as_tensor(x) + (1.0 / m) * net(params, x, t, cond)

    def sample(self, x0, cond=None) -> np.ndarray:
        x = np.asarray(x0, dtype=np.float64)
        with no_grad():
            for i in range(self.m):
                x = self.step_tensor(self.net, self.params, x, i / self.m, self.m, cond).data
                self.evaluations += 1
        return x

    def __call__(self, x0, cond=None) -> np.ndarray:
        return self.sample(x0, cond)


def one_step_sample(head, x0, cond=None) -> np.ndarray:
    """Single model evaluation with a generator head or a final (m=1) stage."""
    if isinstance(head, ProgressiveStage) and head.m != 1:
        raise ValueError(f"one-step sampling needs the m=1 stage, got m={head.m}")
    return head(x0, cond)


# ---------------------------------------------------------------------------
# teacher couplings


def teacher_solutions(net, params, x0, cond, solver_cfg: SolverConfig, chunk: int = 256) -> np.ndarray:
    v = velocity_fn(net, params)
    out = np.empty_like(x0)
    for lo in range(0, len(x0), chunk):
        c = None if cond is None else cond[lo:lo + chunk]
        out[lo:lo + chunk] = solve(v, x0[lo:lo + chunk], c, solver_cfg)
    return out


class CouplingPool:
    """Noise/teacher-solution couplings ``(x0, y, phi_1(x0 | y))``.

    With ``size=None`` every batch is solved afresh. Otherwise a pool of
    ``size`` couplings is solved once per epoch (``size // batch_size``
    batches) and minibatches are drawn from it.
    """

    def __init__(self, net, params, data: PairSource, solver_cfg: SolverConfig, batch_size: int,
                 size: int | None = None):
        self.net, self.params, self.data = net, params, data
        self.solver_cfg, self.batch_size, self.size = solver_cfg, batch_size, size
        self._pool = None
        self._draws = 0
        self.solves = 0

    def _make(self, rng, n):
        x1, cond = self.data.sample(rng, n)
        x0 = rng.standard_normal(np.shape(x1))
        self.solves += n
        return x0, cond, teacher_solutions(self.net, self.params, x0, cond, self.solver_cfg)

    def sample(self, rng):
        if self.size is None:
            return self._make(rng, self.batch_size)
        epoch = max(1, self.size // self.batch_size)
        if self._pool is None or self._draws % epoch == 0:
            self._pool = self._make(rng, self.size)
        self._draws += 1
        idx = rng.integers(0, self.size, size=self.batch_size)
        x0, cond, x1 = self._pool
        return x0[idx], None if cond is None else cond[idx], x1[idx]


# ---------------------------------------------------------------------------
# direct distillation


def direct_objective(net, params, x0, cond, teacher) -> Tensor:
    return squared_error(GeneratorHead.forward(net, params, x0, cond), teacher)


def direct_distill(net, params: ModelParams, data: PairSource, solver_cfg: SolverConfig = DISTILL_SOLVER,
                   steps: int = 1000, lr: float = 1e-5, batch_size: int = 8,
                   rng: np.random.Generator | None = None, pool_size: int | None = None,
                   schedule: str = "constant") -> TrainResult:
    """Fit ``x0 + v_0(x0|y)`` to the teacher's ODE solution in least squares."""
    rng = np.random.default_rng() if rng is None else rng
    pool = CouplingPool(net, params, data, solver_cfg, batch_size, pool_size)

    def objective(p, rng):
        x0, cond, x1 = pool.sample(rng)
        return direct_objective(net, p, x0, cond, x1)

    return fit(params, objective, steps, lr, rng, label="direct", schedule=schedule)


# ---------------------------------------------------------------------------
# progressive distillation


def progressive_objective(net, student, expert_frozen, x1, cond, x0, i, m: int) -> Tensor:
    """Student step of size 2/m from grid time i*2/m against two expert steps of 1/m."""
    k = m // 2
    t = i / k
    xt = interpolate(x0, x1, t)
    with no_grad():
        mid = ProgressiveStage.step_tensor(net, expert_frozen, xt, t, m, cond).data
        target = ProgressiveStage.step_tensor(net, expert_frozen, mid, t + 1.0 / m, m, cond).data
    pred = ProgressiveStage.step_tensor(net, student, xt, t, k, cond)
    return squared_error(pred, target)


def progressive_distill(net, params: ModelParams, data: PairSource, n_steps: int = 16,
                        steps_per_stage: int = 1000, lr: float = 1e-5, batch_size: int = 8,
                        rng: np.random.Generator | None = None,
                        schedule: str = "constant") -> list[ProgressiveStage]:
    """Halve the sampler's step count from ``n_steps`` down to 1.

    Returns the trained stages for m = n_steps/2, ..., 1 (one per halving).
    """
    if n_steps < 2 or n_steps & (n_steps - 1):
        raise ValueError(f"n_steps must be a power of two >= 2, got {n_steps}")
    rng = np.random.default_rng() if rng is None else rng
    stages = []
    expert = copy_params(params)
    m = n_steps
    while m > 1:
        k = m // 2
        frozen = {name: Tensor(v) for name, v in expert.items()}

        def objective(p, rng, m=m, k=k, frozen=frozen):
            x1, cond = data.sample(rng, batch_size)
            x0 = rng.standard_normal(np.shape(x1))
            i = rng.integers(0, k, size=len(x1)).astype(np.float64)
            return progressive_objective(net, p, frozen, x1, cond, x0, i, m)

        result = fit(expert, objective, steps_per_stage, lr, rng, label=f"progressive m={k}",
                     schedule=schedule)
        stages.append(ProgressiveStage(k, result.params, net, result.losses, result.wall_ms))
        log.info("progressive stage m=%d done, final loss %s", k, result.losses[-1] if result.losses else None)
        expert = result.params
        m = k
    return stages


# ---------------------------------------------------------------------------
# adversarial distillation


@dataclass(frozen=True)
class AddConfig:
    lam: float = 0.5
    gamma: float = 5.0
    d_to_g_ratio: int = 5
    lr_g: float = 5e-6
    lr_d: float = 5e-5
    beta1: float = 0.0
    beta2: float = 0.99
    d_warmup: int = 0
    schedule: str = "constant"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.d_warmup < 0:
            raise ValueError(f"d_warmup must be >= 0, got {self.d_warmup}")
        if self.d_to_g_ratio < 1:
            raise ValueError(f"d_to_g_ratio must be >= 1, got {self.d_to_g_ratio}")


def hinge_fake(d_fake) -> Tensor:
    """``max(0, 1 - D(G(x0)))``: the critic wants fake scores above +1."""
    return T.relu(1.0 - T.as_tensor(d_fake))


def hinge_real(d_real) -> Tensor:
    """``max(0, 1 + D(x1))``: the critic wants real scores below -1."""
    return T.relu(1.0 + T.as_tensor(d_real))


def gradient_penalty(net, zeta, x1, cond, gamma: float) -> Tensor:
    """``gamma * mean_b ||grad_x D(x1_b)||^2``, differentiable in ``zeta``."""
    if gamma == 0:
        return Tensor(0.0)
    g = input_gradient(net, zeta, x1, 0.0, cond, create_graph=True)
    per_sample = T.sum_(g * g, axis=_batch_axes(g))
    return gamma * T.mean(per_sample)


def discriminator_loss(net, zeta, fake, real, cond, gamma: float) -> tuple[Tensor, Tensor]:
    """Return ``(total, penalty)`` for one critic update."""
    d_fake = DiscriminatorHead.forward(net, zeta, fake, cond)
    d_real = DiscriminatorHead.forward(net, zeta, real, cond)
    penalty = gradient_penalty(net, zeta, real, cond, gamma)
    total = T.mean(hinge_fake(d_fake)) + T.mean(hinge_real(d_real)) + penalty
    return total, penalty


def generator_terms(net, xi, zeta, x0, cond, teacher, lam: float) -> tuple[Tensor | None, Tensor | None]:
    """Distillation and adversarial terms; a term with zero weight is skipped."""
    g = GeneratorHead.forward(net, xi, x0, cond)
    distill = squared_error(g, teacher) if lam > 0 else None
    adv = T.mean(DiscriminatorHead.forward(net, zeta, g, cond)) if lam < 1 else None
    return distill, adv


def blend(distill: Tensor | None, adv: Tensor | None, lam: float) -> Tensor:
    total = Tensor(0.0)
    if distill is not None:
        total = total + lam * distill
    if adv is not None:
        total = total + (1.0 - lam) * adv
    return total


@dataclass
class AddResult:
    xi: ModelParams
    zeta: ModelParams
    log: list[dict] = field(default_factory=list)

    def write_csv(self, path) -> None:
        write_distill_csv(path, self.log)


LOG_COLUMNS = ("step", "loss_total", "loss_distill", "loss_adv", "loss_D", "penalty")


def write_distill_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in rows:
            w.writerow([row[c] if c == "step" else repr(float(row[c])) for c in LOG_COLUMNS])


def add_train(net, params: ModelParams, data: PairSource, cfg: AddConfig = AddConfig(),
              solver_cfg: SolverConfig = ADD_SOLVER, steps: int = 1000, batch_size: int = 8,
              rng: np.random.Generator | None = None, callback=None) -> AddResult:
    """Alternate ``d_to_g_ratio`` critic updates with one generator update.

    ``steps`` counts generator updates. Teacher solves happen only for
    generator batches and only when ``cfg.lam > 0``. ``callback(step, xi, zeta)``
    runs after every generator update.
    """
    rng = np.random.default_rng() if rng is None else rng
    xi, zeta = copy_params(params), copy_params(params)
    opt_g = Adam(cfg.lr_g, cfg.beta1, cfg.beta2)
    opt_d = Adam(cfg.lr_d, cfg.beta1, cfg.beta2)
    result = AddResult(xi, zeta)
    loss_d = penalty_val = math.nan
    for step in range(steps):
        if cfg.schedule == "cosine":
            decay = 0.01 + 0.99 * 0.5 * (1 + math.cos(math.pi * step / steps))
            opt_g.lr, opt_d.lr = cfg.lr_g * decay, cfg.lr_d * decay
        for _ in range(cfg.d_to_g_ratio + (cfg.d_warmup if step == 0 else 0)):
            real, cond = data.sample(rng, batch_size)
            x0 = rng.standard_normal(np.shape(real))
            with no_grad():
                fake = GeneratorHead.forward(net, xi, x0, cond).data
            parts = {}

            def d_objective(p):
                total, pen = discriminator_loss(net, p, fake, real, cond, cfg.gamma)
                parts["penalty"] = float(pen.data)
                return total

            try:
                loss_d, grads = value_and_grad(d_objective, zeta)
            except NonFiniteError as exc:
                raise FloatingPointError(f"discriminator loss non-finite at step {step}: {exc}") from exc
            penalty_val = parts["penalty"]
            zeta = opt_d.step(zeta, grads)

        like, cond = data.sample(rng, batch_size)
        x0 = rng.standard_normal(np.shape(like))
        teacher = teacher_solutions(net, params, x0, cond, solver_cfg) if cfg.lam > 0 else None
        frozen_zeta = {k: Tensor(v) for k, v in zeta.items()}
        parts = {}

        def g_objective(p):
            distill, adv = generator_terms(net, p, frozen_zeta, x0, cond, teacher, cfg.lam)
            parts["distill"] = float(distill.data) if distill is not None else 0.0
            parts["adv"] = float(adv.data) if adv is not None else 0.0
            return blend(distill, adv, cfg.lam)

        try:
            loss_g, grads = value_and_grad(g_objective, xi)
        except NonFiniteError as exc:
            raise FloatingPointError(f"generator loss non-finite at step {step}: {exc}") from exc
        xi = opt_g.step(xi, grads)
        result.log.append({"step": step, "loss_total": loss_g, "loss_distill": parts["distill"],
                           "loss_adv": parts["adv"], "loss_D": loss_d, "penalty": penalty_val})
        if callback is not None:
            callback(step, xi, zeta)
        if steps >= 10 and (step + 1) % max(1, steps // 10) == 0:
            log.info("add step %d/%d G %.4g D %.4g", step + 1, steps, loss_g, loss_d)
    result.xi, result.zeta = xi, zeta
    return result


# ---------------------------------------------------------------------------
# rectified flow


def rectify(net, params: ModelParams, data: PairSource, solver_cfg: SolverConfig = DISTILL_SOLVER,
            steps: int = 1000, lr: float = 1e-5, batch_size: int = 8,
            rng: np.random.Generator | None = None, pool_size: int | None = None,
            schedule: str = "constant") -> TrainResult:
    """Retrain on couplings ``(x0, phi_1(x0|y))`` produced by ``params`` itself."""
    rng = np.random.default_rng() if rng is None else rng
    pool = CouplingPool(net, params, data, solver_cfg, batch_size, pool_size)

    def objective(p, rng):
        x0, cond, x1 = pool.sample(rng)
        t = rng.uniform(size=len(x0))
        xt = interpolate(x0, x1, t)
        return squared_error(net(p, xt, t, cond), x1 - x0)

    return fit(params, objective, steps, lr, rng, label="rectify", schedule=schedule)
