from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

RHO_MIN = 1e-3


class Role(IntEnum):
    DENSITY = 0
    MOMENTUM_X = 1
    MOMENTUM_Y = 2
    COND_POS = 3
    COND_TIME = 4


PHYSICAL = (Role.DENSITY, Role.MOMENTUM_X, Role.MOMENTUM_Y)
CONDITIONING = (Role.COND_POS, Role.COND_TIME)


@dataclass
class Field:
    """One observed state: channels (C, H, W) tagged with roles, at simulation time ``sim_time``."""

    channels: np.ndarray
    roles: tuple[Role, ...] = PHYSICAL
    sim_time: float = 0.0

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.roles = tuple(Role(r) for r in self.roles)
        if self.channels.ndim != 3 or self.channels.shape[0] != len(self.roles):
            raise ValueError(f"channels {self.channels.shape} do not match roles {self.roles}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels.shape[1:]

    def channel(self, role: Role) -> np.ndarray:
        try:
            return self.channels[self.roles.index(role)]
        except ValueError:
            raise KeyError(f"field has no {Role(role).name} channel") from None

    @property
    def density(self) -> np.ndarray:
        return self.channel(Role.DENSITY)

    @property
    def momentum(self) -> tuple[np.ndarray, np.ndarray]:
        return self.channel(Role.MOMENTUM_X), self.channel(Role.MOMENTUM_Y)

    def velocity(self, rho_min: float = RHO_MIN) -> tuple[np.ndarray, np.ndarray]:
        rho = np.maximum(self.density, rho_min)
        mx, my = self.momentum
        return mx / rho, my / rho

    @property
    def is_augmented(self) -> bool:
        return any(r in CONDITIONING for r in self.roles)

    def physical(self) -> "Field":
        keep = [i for i, r in enumerate(self.roles) if r not in CONDITIONING]
        return Field(self.channels[keep], tuple(self.roles[i] for i in keep), self.sim_time)


@dataclass
class Trajectory:
    states: list[Field]
    dt_sim: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = [s.sim_time for s in self.states]
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("trajectory sim_time must be strictly increasing")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, k):
        return self.states[k]

    def array(self) -> np.ndarray:
        """States stacked as (len, C, H, W)."""
        return np.stack([s.channels for s in self.states])


def augment(y: Field, tau: float, tau_max: float) -> Field:
    """Append a vertical ramp channel (row i -> i/(H-1)) and a constant tau/tau_max channel."""
    if y.is_augmented:
        raise ValueError("field already carries conditioning channels")
    if tau_max <= 0:
        raise ValueError(f"tau_max must be positive, got {tau_max}")
    if tau > tau_max * (1 + 1e-12) or tau < 0:
        raise ValueError(f"simulation time {tau} outside [0, {tau_max}]")
    h, w = y.shape
    ramp = np.arange(h, dtype=np.float64) / (h - 1) if h > 1 else np.zeros(1)
    pos = np.repeat(ramp[:, None], w, axis=1)
    tim = np.full((h, w), tau / tau_max)
    return Field(np.concatenate([y.channels, pos[None], tim[None]]),
                 y.roles + (Role.COND_POS, Role.COND_TIME), tau)
