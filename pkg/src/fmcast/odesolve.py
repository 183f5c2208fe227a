"""Fixed-step integration of the learned flow from t=0 to t=1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Velocity = Callable[[float, np.ndarray, "np.ndarray | None"], np.ndarray]

SCHEMES = ("euler", "midpoint")


class IntegrationError(FloatingPointError):
    def __init__(self, step: int, message: str = "non-finite state"):
        super().__init__(f"{message} at integration step {step}")
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "euler"
    steps: int = 10
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def evaluations(self) -> int:
        """Velocity evaluations performed by one solve."""
        return self.steps * (2 if self.scheme == "midpoint" else 1)


class CountingVelocity:
    """Wraps a velocity callable and counts its invocations."""

    def __init__(self, v: Velocity):
        self.v = v
        self.calls = 0

    def __call__(self, t, x, cond=None):
        self.calls += 1
        return self.v(t, x, cond)


def _step(v: Velocity, scheme: str, t: float, h: float, x: np.ndarray, cond) -> np.ndarray:
    if scheme == "euler":
        return x + h * v(t, x, cond)
    half = x + 0.5 * h * v(t, x, cond)
    return x + h * v(t + 0.5 * h, half, cond)


def trajectory(v: Velocity, x0, cond=None, cfg: SolverConfig = SolverConfig()) -> list[tuple[float, np.ndarray]]:
    """All states visited by the solver, endpoints included (``steps + 1`` entries)."""
    x = np.asarray(x0, dtype=np.float64)
    h = (cfg.t_end - cfg.t_start) / cfg.steps
    path = [(cfg.t_start, x)]
    for i in range(cfg.steps):
        t = cfg.t_start + i * h
        x = _step(v, cfg.scheme, t, h, x, cond)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(i)
        path.append((cfg.t_start + (i + 1) * h, x))
    return path


def solve(v: Velocity, x0, cond=None, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """State at ``t_end`` reached from ``x0``."""
    return trajectory(v, x0, cond, cfg)[-1][1]
