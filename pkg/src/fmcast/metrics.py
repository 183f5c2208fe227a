"""Physical evaluation statistics for predicted fields and trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsys.fields import RHO_MIN, Field, Trajectory


def _check_same_shape(a: Field, b: Field) -> None:
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")


def _rho(f: Field, rho_min: float) -> np.ndarray:
    return np.maximum(f.density, rho_min)


def energy_density(f: Field, rho_min: float = RHO_MIN) -> np.ndarray:
    """Pointwise kinetic energy ``rho * |u|^2 / 2``, with ``rho`` clamped below at ``rho_min``."""
    u, v = f.velocity(rho_min)
    return 0.5 * _rho(f, rho_min) * (u * u + v * v)


def kinetic_energy(f: Field, rho_min: float = RHO_MIN) -> float:
    return float(energy_density(f, rho_min).mean())


def ke_error(real: Field, pred: Field, rho_min: float = RHO_MIN) -> float:
    """Domain average of ``rho_real * |u_real - u_pred|^2 / 2``."""
    _check_same_shape(real, pred)
    ur, vr = real.velocity(rho_min)
    up, vp = pred.velocity(rho_min)
    return float((0.5 * _rho(real, rho_min) * ((ur - up) ** 2 + (vr - vp) ** 2)).mean())


@dataclass
class SpectrumResult:
    wavenumbers: np.ndarray
    energy_density: np.ndarray


def _is_pow2(n: int) -> bool:
    return n > 0 and not n & (n - 1)


def energy_spectrum(f: Field, rho_min: float = RHO_MIN) -> SpectrumResult:
    """Radially binned spectrum of ``w = sqrt(rho) u``; bins sum to the mean kinetic energy.

    Bin k collects modes with round(|k_vec|) == k; modes beyond the Nyquist
    radius fold into the last bin.
    """
    h, w = f.shape
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ValueError(f"energy_spectrum needs power-of-two sizes, got {h}x{w}")
    u, v = f.velocity(rho_min)
    s = np.sqrt(_rho(f, rho_min))
    power = np.zeros((h, w))
    for comp in (s * u, s * v):
        power += np.abs(np.fft.fft2(comp)) ** 2
    power *= 0.5 / (h * w) ** 2
    ky = np.fft.fftfreq(h, d=1.0 / h)
    kx = np.fft.fftfreq(w, d=1.0 / w)
    radius = np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)
    k_max = min(h, w) // 2
    bins = np.minimum(np.rint(radius).astype(int), k_max)
    density = np.bincount(bins.ravel(), weights=power.ravel(), minlength=k_max + 1)
    return SpectrumResult(np.arange(k_max + 1), density)


def laplacian(e: np.ndarray, boundary: str = "periodic") -> np.ndarray:
    """5-point Laplacian (unit spacing). ``replicate`` clamps rows at top and bottom."""
    if boundary == "periodic":
        up, down = np.roll(e, -1, axis=0), np.roll(e, 1, axis=0)
    elif boundary == "replicate":
        up = np.concatenate([e[1:], e[-1:]], axis=0)
        down = np.concatenate([e[:1], e[:-1]], axis=0)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return up + down + np.roll(e, -1, axis=1) + np.roll(e, 1, axis=1) - 4.0 * e


def sharpness_of(e: np.ndarray, boundary: str = "periodic") -> float:
    lap = laplacian(e, boundary)
    return float((lap * lap).mean())


def sharpness(f: Field, boundary: str = "periodic", rho_min: float = RHO_MIN) -> float:
    """Mean squared Laplacian of the kinetic energy density."""
    return sharpness_of(energy_density(f, rho_min), boundary)


def straightness(path, batched: bool = False):
    """Mean squared deviation of segment velocities from the chord velocity.

    ``path`` is a list of ``(t, x)``. Zero iff the points lie on a line and are
    traversed at constant speed. With ``batched=True`` axis 0 of each state
    indexes independent paths and one value per path is returned.
    """
    if len(path) < 3:
        raise ValueError(f"straightness needs at least 3 points, got {len(path)}")
    ts = np.array([float(t) for t, _ in path])
    xs = np.stack([np.asarray(x, dtype=np.float64) for _, x in path])
    chord = (xs[-1] - xs[0]) / (ts[-1] - ts[0])
    dt = np.diff(ts).reshape((-1,) + (1,) * (xs.ndim - 1))
    seg = np.diff(xs, axis=0) / dt
    dev = (seg - chord) ** 2
    if batched:
        per_seg = dev.reshape(dev.shape[0], dev.shape[1], -1).sum(axis=2)
        return per_seg.mean(axis=0)
    return float(dev.reshape(dev.shape[0], -1).sum(axis=1).mean())


METRIC_COLUMNS = ("step", "ke_error", "E_real", "E_pred", "sharp_real", "sharp_pred")


def evaluate_rollout(real: Trajectory, pred: Trajectory, boundary: str = "periodic") -> list[dict]:
    """One row per step comparing a predicted trajectory against the reference."""
    if len(real) != len(pred):
        raise ValueError(f"trajectory lengths differ: {len(real)} vs {len(pred)}")
    rows = []
    for k, (r, p) in enumerate(zip(real.states, pred.states)):
        rows.append({
            "step": k,
            "ke_error": ke_error(r, p),
            "E_real": kinetic_energy(r),
            "E_pred": kinetic_energy(p),
            "sharp_real": sharpness(r, boundary),
            "sharp_pred": sharpness(p, boundary),
        })
    return rows


def average_tables(tables: list[list[dict]]) -> list[dict]:
    """Entrywise mean of equally long metric tables."""
    if not tables:
        raise ValueError("no tables to average")
    n = len(tables[0])
    if any(len(t) != n for t in tables):
        raise ValueError("metric tables have different lengths")
    out = []
    for k in range(n):
        row = {"step": tables[0][k]["step"]}
        for col in METRIC_COLUMNS[1:]:
            row[col] = float(np.mean([t[k][col] for t in tables]))
        out.append(row)
    return out
