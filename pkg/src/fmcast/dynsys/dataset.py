"""FMDS dataset files and per-channel normalisation.

Layout (little-endian): b"FMDS", version u32, n_traj u32, len u32, C u8,
H u16, W u16, dt_sim f64, C role tags u8, C (mean, std) f64 pairs, then the
trajectories as a contiguous f64 block of shape (n_traj, len, C, H, W).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import CONDITIONING, Field, Role, Trajectory

MAGIC = b"FMDS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIBHHd")


class DatasetError(ValueError):
    pass


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, n_channels: int) -> "Normalizer":
        return cls(np.zeros(n_channels), np.ones(n_channels))

    @classmethod
    def fit(cls, data: np.ndarray, roles) -> "Normalizer":
        """Per-channel statistics over (n, len, C, H, W); conditioning channels stay unscaled."""
        axes = (0, 1, 3, 4)
        mean = data.mean(axis=axes)
        std = data.std(axis=axes)
        std = np.where(std > 1e-12, std, 1.0)
        for i, r in enumerate(roles):
            if Role(r) in CONDITIONING:
                mean[i], std[i] = 0.0, 1.0
        return cls(mean, std)

    def _bc(self, channels):
        idx = slice(None) if channels is None else channels
        shape = (-1, 1, 1)
        return self.mean[idx].reshape(shape), self.std[idx].reshape(shape)

    def normalize(self, x: np.ndarray, channels=None) -> np.ndarray:
        m, s = self._bc(channels)
        return (x - m) / s

    def denormalize(self, x: np.ndarray, channels=None) -> np.ndarray:
        m, s = self._bc(channels)
        return x * s + m


@dataclass
class Dataset:
    data: np.ndarray  # (n_traj, len, C, H, W), physical units
    roles: tuple[Role, ...]
    dt_sim: float
    normalizer: Normalizer

    def __post_init__(self):
        self.roles = tuple(Role(r) for r in self.roles)
        if self.data.ndim != 5 or self.data.shape[2] != len(self.roles):
            raise DatasetError(f"data shape {self.data.shape} does not match {len(self.roles)} roles")

    @property
    def n_traj(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def field_shape(self) -> tuple[int, int]:
        return self.data.shape[3:]

    @property
    def physical_channels(self) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r not in CONDITIONING]

    @property
    def tau_max(self) -> float:
        return (self.length - 1) * self.dt_sim

    @classmethod
    def from_trajectories(cls, trajs: list[Trajectory], normalizer: Normalizer | None = None) -> "Dataset":
        if not trajs:
            raise DatasetError("no trajectories")
        data = np.stack([t.array() for t in trajs])
        roles = trajs[0].states[0].roles
        if normalizer is None:
            normalizer = Normalizer.fit(data, roles)
        return cls(data, roles, trajs[0].dt_sim, normalizer)

    def trajectory(self, i: int) -> Trajectory:
        states = [Field(self.data[i, k], self.roles, k * self.dt_sim) for k in range(self.length)]
        return Trajectory(states, self.dt_sim)

    def trajectories(self) -> list[Trajectory]:
        return [self.trajectory(i) for i in range(self.n_traj)]

    def normalized(self) -> np.ndarray:
        return (self.data - self.normalizer.mean.reshape(1, 1, -1, 1, 1)) / self.normalizer.std.reshape(1, 1, -1, 1, 1)

    def pairs(self) -> "TransitionPairs":
        return TransitionPairs(self.normalized(), self.physical_channels)


class TransitionPairs:
    """Draws normalised ``(y_{k+1} physical channels, y_k)`` pairs from trajectories."""

    def __init__(self, normed: np.ndarray, physical: list[int]):
        if normed.shape[1] < 2:
            raise DatasetError("trajectories need at least two states")
        self.normed = normed
        self.physical = physical

    def sample(self, rng: np.random.Generator, batch_size: int):
        n, length = self.normed.shape[:2]
        i = rng.integers(0, n, size=batch_size)
        k = rng.integers(0, length - 1, size=batch_size)
        cond = self.normed[i, k]
        x1 = self.normed[i, k + 1][:, self.physical]
        return x1, cond


def encode(ds: Dataset) -> bytes:
    n, length, c, h, w = ds.data.shape
    header = _HEADER.pack(MAGIC, VERSION, n, length, c, h, w, float(ds.dt_sim))
    roles = struct.pack(f"<{c}B", *[int(r) for r in ds.roles])
    stats = np.stack([ds.normalizer.mean, ds.normalizer.std], axis=1).astype("<f8").tobytes()
    return header + roles + stats + np.ascontiguousarray(ds.data, dtype="<f8").tobytes()


def decode(buf: bytes) -> Dataset:
    if len(buf) < _HEADER.size or buf[:4] != MAGIC:
        raise DatasetError("not an FMDS file (bad magic)")
    _, version, n, length, c, h, w, dt = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise DatasetError(f"unsupported FMDS version {version}")
    pos = _HEADER.size
    roles = struct.unpack_from(f"<{c}B", buf, pos)
    pos += c
    stats = np.frombuffer(buf, dtype="<f8", count=2 * c, offset=pos).reshape(c, 2)
    pos += 16 * c
    count = n * length * c * h * w
    if len(buf) - pos != 8 * count:
        raise DatasetError(f"payload is {len(buf) - pos} bytes, expected {8 * count}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(n, length, c, h, w)
    return Dataset(data.astype(np.float64), roles, dt, Normalizer(stats[:, 0].copy(), stats[:, 1].copy()))


def save(path, ds: Dataset) -> None:
    Path(path).write_bytes(encode(ds))


def load(path) -> Dataset:
    return decode(Path(path).read_bytes())


def split_train_test(trajectories: list, test_fraction: float, rng: np.random.Generator) -> tuple[list, list]:
    """Split at trajectory granularity; ``round(test_fraction * n)`` go to test."""
    n = len(trajectories)
    if n < 2:
        raise ValueError(f"need at least 2 trajectories to split, got {n}")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    n_test = int(round(test_fraction * n))
    order = rng.permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = [t for i, t in enumerate(trajectories) if i not in test_idx]
    test = [t for i, t in enumerate(trajectories) if i in test_idx]
    return train, test
