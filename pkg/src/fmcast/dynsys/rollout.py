"""Autoregressive rollout: ``y_{k+1} = sampler(x0 ~ N(0, I) | y_k)``."""

from __future__ import annotations

import numpy as np

from ..distill import GeneratorHead, ProgressiveStage
from ..flowmatch import deterministic_predict, velocity_fn
from ..nncore.tensor import no_grad
from ..odesolve import CountingVelocity, SolverConfig, solve
from .dataset import Normalizer
from .fields import CONDITIONING, Field, Trajectory, augment


class RolloutError(FloatingPointError):
    def __init__(self, message: str, partial: Trajectory):
        super().__init__(message)
        self.partial = partial


class FlowSampler:
    """Flow matching model integrated with a fixed-step solver."""

    def __init__(self, net, params, solver_cfg: SolverConfig = SolverConfig("euler", 10)):
        self.solver_cfg = solver_cfg
        self._v = CountingVelocity(velocity_fn(net, params))

    @property
    def evaluations(self) -> int:
        return self._v.calls

    def __call__(self, cond: np.ndarray, n_out: int, rng: np.random.Generator) -> np.ndarray:
        x0 = rng.standard_normal((cond.shape[0], n_out) + cond.shape[2:])
        return solve(self._v, x0, cond, self.solver_cfg)


class DeterministicSampler:
    """The least-squares baseline; draws no noise."""

    def __init__(self, net, params):
        self.net, self.params = net, params
        self.evaluations = 0

    def __call__(self, cond, n_out, rng):
        self.evaluations += 1
        with no_grad():
            return deterministic_predict(self.net, self.params, cond).data


class OneStepSampler:
    """A distilled generator head or an m=1 progressive stage."""

    def __init__(self, head: "GeneratorHead | ProgressiveStage"):
        self.head = head

    @property
    def evaluations(self) -> int:
        return self.head.evaluations

    def __call__(self, cond, n_out, rng):
        x0 = rng.standard_normal((cond.shape[0], n_out) + cond.shape[2:])
        return self.head(x0, cond)


def rollout(sampler, y0: Field, steps: int, rng: np.random.Generator, dt_sim: float,
            tau_max: float | None = None, normalizer: Normalizer | None = None) -> Trajectory:
    """Roll ``sampler`` forward ``steps`` times from ``y0``.

    Samplers see normalised states and return normalised physical channels.
    Conditioning channels (if ``y0`` carries them) are recomputed every step
    from the advancing simulation time.
    """
    roles = y0.roles
    phys = [i for i, r in enumerate(roles) if r not in CONDITIONING]
    norm = normalizer or Normalizer.identity(len(roles))
    states = [y0]
    y = y0
    for k in range(steps):
        cond = norm.normalize(y.channels)[None]
        try:
            out = sampler(cond, len(phys), rng)[0]
        except FloatingPointError as exc:
            raise RolloutError(f"rollout failed at step {k + 1}: {exc}", Trajectory(states, dt_sim)) from exc
        if not np.all(np.isfinite(out)):
            raise RolloutError(f"non-finite state at rollout step {k + 1}", Trajectory(states, dt_sim))
        phys_field = Field(norm.denormalize(out, phys), tuple(roles[i] for i in phys),
                           y0.sim_time + (k + 1) * dt_sim)
        if y0.is_augmented:
            y = augment(phys_field, phys_field.sim_time, tau_max)
        else:
            y = phys_field
        states.append(y)
    return Trajectory(states, dt_sim)
