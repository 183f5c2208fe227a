"""Time-conditioned velocity networks.

Both networks share one calling convention::

    out = net(params, x, t, cond)

where ``params`` maps names to arrays or tensors, ``x`` is a batch, ``t`` is a
scalar or one time per batch element and ``cond`` (optional) is concatenated
onto ``x`` along the channel/feature axis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import tensor as T
from .layers import conv2d, group_norm, kaiming_uniform, linear, norm_groups, sinusoidal_embedding
from .tensor import Tensor

ModelParams = dict[str, np.ndarray]


def copy_params(params: Mapping[str, np.ndarray]) -> ModelParams:
    return {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}


def _as_param_tensors(params: Mapping) -> dict[str, Tensor]:
    return {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()}


def _time_vector(t, batch: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return np.full(batch, float(t))
    if t.shape != (batch,):
        raise ValueError(f"time input must be scalar or shape ({batch},), got {t.shape}")
    return t


@dataclass(frozen=True)
class UNetSpec:
    in_channels: int
    out_channels: int
    cond_channels: int = 0
    down_channels: tuple[int, ...] = (32, 64)
    time_embed_dim: int = 64
    groups_per_norm: int = 8
    kind: str = field(default="unet", init=False)

    def __post_init__(self):
        object.__setattr__(self, "down_channels", tuple(int(c) for c in self.down_channels))
        if len(self.down_channels) < 1:
            raise ValueError("UNetSpec needs at least one level")
        if min(self.in_channels, self.out_channels, self.time_embed_dim) < 1 or self.cond_channels < 0:
            raise ValueError(f"invalid channel counts in {self}")


@dataclass(frozen=True)
class MLPSpec:
    """Fully connected velocity net for vector states of shape (B, dim)."""

    dim: int
    cond_dim: int = 0
    hidden: int = 64
    depth: int = 3
    time_embed_dim: int = 32
    kind: str = field(default="mlp", init=False)


def spec_to_dict(spec) -> dict:
    return asdict(spec)


def spec_from_dict(d: Mapping) -> "UNetSpec | MLPSpec":
    d = dict(d)
    kind = d.pop("kind", "unet")
    if kind == "unet":
        d["down_channels"] = tuple(d["down_channels"])
        return UNetSpec(**d)
    if kind == "mlp":
        return MLPSpec(**d)
    raise ValueError(f"unknown network kind {kind!r}")


class UNet:
    """Small UNet: one residual block per level, average-pool down, nearest up."""

    def __init__(self, spec: UNetSpec):
        self.spec = spec

    def _res_block_shapes(self, name: str, c_in: int, c_out: int) -> dict[str, tuple]:
        shapes = {
            f"{name}.norm1.scale": (c_in,),
            f"{name}.norm1.shift": (c_in,),
            f"{name}.conv1.w": (c_out, c_in, 3, 3),
            f"{name}.conv1.b": (c_out,),
            f"{name}.temb.w": (self.spec.time_embed_dim, c_out),
            f"{name}.temb.b": (c_out,),
            f"{name}.norm2.scale": (c_out,),
            f"{name}.norm2.shift": (c_out,),
            f"{name}.conv2.w": (c_out, c_out, 3, 3),
            f"{name}.conv2.b": (c_out,),
        }
        if c_in != c_out:
            shapes[f"{name}.skip.w"] = (c_out, c_in, 1, 1)
            shapes[f"{name}.skip.b"] = (c_out,)
        return shapes

    def param_shapes(self) -> dict[str, tuple]:
        s = self.spec
        chans = s.down_channels
        d = s.time_embed_dim
        shapes: dict[str, tuple] = {
            "time.fc1.w": (d, d),
            "time.fc1.b": (d,),
            "time.fc2.w": (d, d),
            "time.fc2.b": (d,),
            "in.w": (chans[0], s.in_channels + s.cond_channels, 3, 3),
            "in.b": (chans[0],),
        }
        prev = chans[0]
        for i, c in enumerate(chans):
            shapes.update(self._res_block_shapes(f"down{i}", prev, c))
            prev = c
        shapes.update(self._res_block_shapes("mid", prev, prev))
        for i in reversed(range(len(chans))):
            shapes.update(self._res_block_shapes(f"up{i}", prev + chans[i], chans[i]))
            prev = chans[i]
        shapes.update({
            "out.norm.scale": (prev,),
            "out.norm.shift": (prev,),
            "out.w": (s.out_channels, prev, 3, 3),
            "out.b": (s.out_channels,),
        })
        return shapes

    def init(self, rng: np.random.Generator) -> ModelParams:
        params: ModelParams = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("out.w") or name == "out.b":
                params[name] = np.zeros(shape)
            elif name.endswith(".scale"):
                params[name] = np.ones(shape)
            elif name.endswith((".b", ".shift")):
                params[name] = np.zeros(shape)
            elif len(shape) == 4:
                params[name] = kaiming_uniform(rng, shape, shape[1] * shape[2] * shape[3])
            else:
                params[name] = kaiming_uniform(rng, shape, shape[0])
        return params

    def _groups(self, c: int) -> int:
        return norm_groups(c, self.spec.groups_per_norm)

    def _res_block(self, p, name: str, h: Tensor, temb: Tensor) -> Tensor:
        c_in = h.shape[1]
        out = T.silu(group_norm(h, self._groups(c_in), p[f"{name}.norm1.scale"], p[f"{name}.norm1.shift"]))
        out = conv2d(out, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"])
        proj = linear(temb, p[f"{name}.temb.w"], p[f"{name}.temb.b"])
        out = out + T.reshape(proj, proj.shape + (1, 1))
        c_out = out.shape[1]
        out = T.silu(group_norm(out, self._groups(c_out), p[f"{name}.norm2.scale"], p[f"{name}.norm2.shift"]))
        out = conv2d(out, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"])
        skip = conv2d(h, p[f"{name}.skip.w"], p[f"{name}.skip.b"]) if f"{name}.skip.w" in p else h
        return skip + out

    def check_input(self, x: Tensor, cond: Tensor | None) -> None:
        s = self.spec
        if x.ndim != 4 or x.shape[1] != s.in_channels:
            raise ValueError(f"UNet expects x of shape (B, {s.in_channels}, H, W), got {x.shape}")
        factor = 2 ** len(s.down_channels)
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ValueError(f"spatial size {x.shape[2:]} not divisible by {factor}")
        n_cond = 0 if cond is None else cond.shape[1]
        if n_cond != s.cond_channels:
            raise ValueError(f"UNet expects {s.cond_channels} conditioning channels, got {n_cond}")
        if cond is not None and (cond.shape[0] != x.shape[0] or cond.shape[2:] != x.shape[2:]):
            raise ValueError(f"conditioning shape {cond.shape} does not match x shape {x.shape}")

    def __call__(self, params, x, t, cond=None) -> Tensor:
        x = T.as_tensor(x)
        cond = None if cond is None else T.as_tensor(cond)
        self.check_input(x, cond)
        p = _as_param_tensors(params)
        n = len(self.spec.down_channels)

        emb = sinusoidal_embedding(_time_vector(t, x.shape[0]), self.spec.time_embed_dim)
        temb = T.silu(linear(emb, p["time.fc1.w"], p["time.fc1.b"]))
        temb = T.silu(linear(temb, p["time.fc2.w"], p["time.fc2.b"]))

        h = x if cond is None else T.concat([x, cond], axis=1)
        h = conv2d(h, p["in.w"], p["in.b"])
        skips = []
        for i in range(n):
            h = self._res_block(p, f"down{i}", h, temb)
            skips.append(h)
            h = T.avg_pool2(h)
        h = self._res_block(p, "mid", h, temb)
        for i in reversed(range(n)):
            h = T.upsample2(h)
            h = T.concat([h, skips[i]], axis=1)
            h = self._res_block(p, f"up{i}", h, temb)
        c = h.shape[1]
        h = T.silu(group_norm(h, self._groups(c), p["out.norm.scale"], p["out.norm.shift"]))
        return conv2d(h, p["out.w"], p["out.b"])


class MLP:
    """Residual MLP with additive time embedding; output layer starts at zero."""

    def __init__(self, spec: MLPSpec):
        self.spec = spec

    def param_shapes(self) -> dict[str, tuple]:
        s = self.spec
        shapes = {
            "in.w": (s.dim + s.cond_dim, s.hidden),
            "in.b": (s.hidden,),
            "time.w": (s.time_embed_dim, s.hidden),
            "time.b": (s.hidden,),
        }
        for i in range(s.depth):
            shapes[f"h{i}.w"] = (s.hidden, s.hidden)
            shapes[f"h{i}.b"] = (s.hidden,)
        shapes["out.w"] = (s.hidden, s.dim)
        shapes["out.b"] = (s.dim,)
        return shapes

    def init(self, rng: np.random.Generator) -> ModelParams:
        params = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("out.") or name.endswith(".b"):
                params[name] = np.zeros(shape)
            else:
                params[name] = kaiming_uniform(rng, shape, shape[0]) / np.sqrt(2.0)
        return params

    def __call__(self, params, x, t, cond=None) -> Tensor:
        s = self.spec
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != s.dim:
            raise ValueError(f"MLP expects x of shape (B, {s.dim}), got {x.shape}")
        n_cond = 0 if cond is None else T.as_tensor(cond).shape[1]
        if n_cond != s.cond_dim:
            raise ValueError(f"MLP expects {s.cond_dim} conditioning features, got {n_cond}")
        p = _as_param_tensors(params)
        # low-frequency embedding: toy problems want smooth dependence on t
        emb = sinusoidal_embedding(_time_vector(t, x.shape[0]), s.time_embed_dim, max_period=100.0, scale=4.0)
        h = x if cond is None else T.concat([x, T.as_tensor(cond)], axis=1)
        h = linear(h, p["in.w"], p["in.b"]) + linear(emb, p["time.w"], p["time.b"])
        h = T.silu(h)
        for i in range(s.depth):
            h = h + T.silu(linear(h, p[f"h{i}.w"], p[f"h{i}.b"]))
        return linear(h, p["out.w"], p["out.b"])


def build(spec) -> "UNet | MLP":
    if isinstance(spec, UNetSpec):
        return UNet(spec)
    if isinstance(spec, MLPSpec):
        return MLP(spec)
    raise TypeError(f"unsupported network spec {type(spec).__name__}")
