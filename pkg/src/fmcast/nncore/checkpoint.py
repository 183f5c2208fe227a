"""FMCK checkpoint files.

Layout (little-endian): b"FMCK", version u32, count u32, then per parameter
name length u16, UTF-8 name, rank u8, dims u32 * rank, float64 payload.
The network spec is kept next to the checkpoint as ``<name>.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nets import spec_from_dict, spec_to_dict

MAGIC = b"FMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(params: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8", order="C")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError("not an FMCK file (bad magic or short header)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported FMCK version {version}")
    pos = 12
    params = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 8 * size > len(buf):
                raise CheckpointError(f"truncated FMCK file: payload of {name!r} runs past the end")
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(dims)
            pos += 8 * size
            if name in params:
                raise CheckpointError(f"duplicate parameter {name!r}")
            params[name] = arr.astype(np.float64)
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"truncated FMCK file: {exc}") from exc
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after FMCK payload")
    return params


def save(path, params: dict[str, np.ndarray], spec=None) -> None:
    path = Path(path)
    path.write_bytes(encode(params))
    if spec is not None:
        path.with_suffix(".json").write_text(json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n")


def load(path) -> tuple[dict[str, np.ndarray], object]:
    """Return ``(params, spec)``; spec is None when no sidecar exists."""
    path = Path(path)
    params = decode(path.read_bytes())
    sidecar = path.with_suffix(".json")
    spec = spec_from_dict(json.loads(sidecar.read_text())) if sidecar.exists() else None
    return params, spec
