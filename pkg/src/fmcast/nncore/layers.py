"""Functional network layers built on :mod:`fmcast.nncore.tensor`."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution. ``weight`` has shape (C_out, C_in, k, k), k odd."""
    b, c, h, w = x.shape
    c_out, c_in, k, k2 = weight.shape
    if c_in != c or k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d: input {x.shape} incompatible with kernel {weight.shape}")
    cols = T.im2col(x, k, k // 2)
    out = T.matmul(T.reshape(weight, (c_out, c_in * k * k)), cols)
    if bias is not None:
        out = out + T.reshape(bias, (c_out, 1))
    return T.reshape(out, (b, c_out, h, w))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with weight of shape (in, out)."""
    out = T.matmul(x, weight)
    if bias is not None:
        out = out + bias
    return out


def group_norm(x: Tensor, groups: int, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    b, c, h, w = x.shape
    if c % groups:
        raise ValueError(f"group_norm: {c} channels not divisible into {groups} groups")
    xr = T.reshape(x, (b, groups, (c // groups) * h * w))
    centered = xr - T.mean(xr, axis=-1, keepdims=True)
    var = T.mean(centered * centered, axis=-1, keepdims=True)
    normed = T.reshape(centered * T.power(var + eps, -0.5), (b, c, h, w))
    return normed * T.reshape(scale, (1, c, 1, 1)) + T.reshape(shift, (1, c, 1, 1))


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10_000.0, scale: float = 1000.0) -> np.ndarray:
    """Sin/cos features of ``scale * t``; returns shape (len(t), dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = scale * t[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def norm_groups(channels: int, preferred: int) -> int:
    """Largest group count <= ``preferred`` that divides ``channels``."""
    return math.gcd(channels, preferred)
