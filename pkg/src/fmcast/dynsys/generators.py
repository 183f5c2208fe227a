"""Desk-scale synthetic systems.

``spectral_flow``   periodic 2D incompressible flow (vorticity form) carrying a
                    passive density, optionally with random solenoidal forcing.
``rotating_blob``   Gaussian density bump in rigid rotation; exactly
                    deterministic and known in closed form.
``sliced_buoyancy`` 2D buoyancy-driven mixing (heavy fluid over light) of which
                    only a band of columns is observed, so observed transitions
                    are stochastic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import PHYSICAL, Field, Trajectory, augment

KINDS = ("spectral_flow", "rotating_blob", "sliced_buoyancy")


class UnstableStepError(FloatingPointError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    resolution: int = 32
    width: int | None = None  # hidden width (sliced_buoyancy); defaults to resolution
    band: int | None = None  # observed column band (sliced_buoyancy); defaults to resolution
    noise_scale: float = 0.0
    inner_substeps: int = 8
    viscosity: float = 0.02
    dt_sim: float = 0.1
    steps_per_turn: int = 16  # rotating_blob: steps per full revolution
    density_ratio: float = 3.0  # sliced_buoyancy: heavy / light
    cfl_max: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        for n in (self.resolution, self.hidden_width, self.observed_width):
            if n < 2 or n & (n - 1):
                raise ValueError(f"grid sizes must be powers of two, got {n}")
        if self.observed_width > self.hidden_width:
            raise ValueError("observed band wider than the hidden domain")
        if self.noise_scale < 0 or self.viscosity < 0 or self.dt_sim <= 0 or self.inner_substeps < 1:
            raise ValueError(f"invalid generator parameters: {self}")

    @property
    def hidden_width(self) -> int:
        return self.width or self.resolution

    @property
    def observed_width(self) -> int:
        if self.kind == "sliced_buoyancy":
            return self.band or self.resolution
        return self.hidden_width

    @property
    def augmented(self) -> bool:
        return self.kind == "sliced_buoyancy"

    @classmethod
    def default(cls, kind: str, **overrides) -> "GeneratorSpec":
        base = {
            "spectral_flow": dict(resolution=32, viscosity=0.02, dt_sim=0.1, inner_substeps=8),
            "rotating_blob": dict(resolution=32, dt_sim=1.0, inner_substeps=1, viscosity=0.0),
            "sliced_buoyancy": dict(resolution=16, width=64, band=16, viscosity=2e-3, dt_sim=0.15,
                                    inner_substeps=6),
        }[kind]
        base.update(overrides)
        return cls(kind=kind, **base)


# ---------------------------------------------------------------------------
# pseudo-spectral machinery


class _Spectral:
    """Periodic grid of ny x nx cells on [0, ly) x [0, lx) with 2/3-rule dealiasing."""

    def __init__(self, ny: int, nx: int, ly: float, lx: float):
        self.ny, self.nx = ny, nx
        self.dy, self.dx = ly / ny, lx / nx
        ky = 2 * np.pi * np.fft.fftfreq(ny, d=self.dy)
        kx = 2 * np.pi * np.fft.rfftfreq(nx, d=self.dx)
        self.kx, self.ky = np.meshgrid(kx, ky)
        self.k2 = self.kx**2 + self.ky**2
        self.inv_k2 = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
        ny_cut, nx_cut = ny // 3, nx // 3
        iy = np.abs(np.fft.fftfreq(ny, d=1.0 / ny))
        ix = np.fft.rfftfreq(nx, d=1.0 / nx)
        self.dealias = (iy[:, None] <= ny_cut) & (ix[None, :] <= nx_cut)

    def fft(self, f):
        return np.fft.rfft2(f)

    def ifft(self, fh):
        return np.fft.irfft2(fh, s=(self.ny, self.nx))

    def velocity(self, w_hat):
        psi = w_hat * self.inv_k2
        u = self.ifft(1j * self.ky * psi)
        v = self.ifft(-1j * self.kx * psi)
        return u, v

    def advection(self, f_hat, u, v):
        f_hat = f_hat * self.dealias
        fx = self.ifft(1j * self.kx * f_hat)
        fy = self.ifft(1j * self.ky * f_hat)
        return -self.fft(u * fx + v * fy) * self.dealias

    def random_field(self, rng, k_lo: float, k_hi: float):
        """Smooth zero-mean random field with wavenumbers |k| (in grid units) in [k_lo, k_hi]."""
        k_grid = np.sqrt((self.kx * self.dx * self.nx / (2 * np.pi)) ** 2
                         + (self.ky * self.dy * self.ny / (2 * np.pi)) ** 2)
        band = (k_grid >= k_lo) & (k_grid <= k_hi)
        noise = rng.standard_normal((self.ny, self.nx))
        f = self.ifft(self.fft(noise) * band)
        return f / (np.abs(f).max() + 1e-300)


def _check_cfl(spec: GeneratorSpec, grid: _Spectral, u, v, dt: float) -> None:
    c = dt * max(np.abs(u).max() / grid.dx, np.abs(v).max() / grid.dy)
    if not np.isfinite(c) or c > spec.cfl_max:
        raise UnstableStepError(f"CFL number {c:.3g} exceeds {spec.cfl_max} (dt={dt:.3g})")


def _if_rk2(grid: _Spectral, fields_hat, rhs, decay, dt):
    """Integrating-factor Heun step: exact diffusion, second-order explicit rhs."""
    n0 = rhs(fields_hat)
    pred = [decay * (f + dt * n) for f, n in zip(fields_hat, n0)]
    n1 = rhs(pred)
    return [decay * f + 0.5 * dt * (decay * a + b) for f, a, b in zip(fields_hat, n0, n1)]


# ---------------------------------------------------------------------------
# spectral_flow


def _spectral_flow(spec: GeneratorSpec, length: int, rng: np.random.Generator, seed_meta) -> Trajectory:
    n = spec.resolution
    grid = _Spectral(n, n, 2 * np.pi, 2 * np.pi)
    w = grid.random_field(rng, 2.0, 4.0)
    w_hat = grid.fft(w)
    u, v = grid.velocity(w_hat)
    w_hat *= 1.0 / max(np.sqrt(u**2 + v**2).max(), 1e-12)  # peak speed 1
    s_hat = grid.fft(0.25 * grid.random_field(rng, 1.0, 3.0))

    dt = spec.dt_sim / spec.inner_substeps
    decay = np.exp(-spec.viscosity * grid.k2 * dt)

    def rhs(fs):
        uu, vv = grid.velocity(fs[0])
        return [grid.advection(fs[0], uu, vv), grid.advection(fs[1], uu, vv)]

    def observe(k):
        uu, vv = grid.velocity(w_hat)
        rho = 1.0 + grid.ifft(s_hat)
        return Field(np.stack([rho, rho * uu, rho * vv]), PHYSICAL, k * spec.dt_sim)

    states = [observe(0)]
    for k in range(1, length):
        for _ in range(spec.inner_substeps):
            uu, vv = grid.velocity(w_hat)
            _check_cfl(spec, grid, uu, vv, dt)
            w_hat, s_hat = _if_rk2(grid, [w_hat, s_hat], rhs, decay, dt)
            if spec.noise_scale > 0:
                w_hat = w_hat + spec.noise_scale * np.sqrt(dt) * grid.fft(grid.random_field(rng, 2.0, 4.0))
        states.append(observe(k))
    return Trajectory(states, spec.dt_sim, {"generator": spec.kind, "seed": seed_meta})


# ---------------------------------------------------------------------------
# rotating_blob


def blob_state(spec: GeneratorSpec, params: dict, k: int) -> Field:
    """Closed-form blob state after ``k`` rotation steps."""
    n = spec.resolution
    c = -1.0 + (np.arange(n) + 0.5) * 2.0 / n
    x, y = np.meshgrid(c, c)  # rows are y, columns are x
    omega = 2 * np.pi / spec.steps_per_turn / spec.dt_sim
    angle = params["angle"] + omega * k * spec.dt_sim
    cx, cy = params["radius"] * np.cos(angle), params["radius"] * np.sin(angle)
    rho = 0.1 + params["amplitude"] * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * params["width"] ** 2))
    return Field(np.stack([rho, -omega * y * rho, omega * x * rho]), PHYSICAL, k * spec.dt_sim)


def blob_params(rng: np.random.Generator) -> dict:
    return {
        "radius": rng.uniform(0.3, 0.5),
        "angle": rng.uniform(0, 2 * np.pi),
        "width": rng.uniform(0.12, 0.2),
        "amplitude": rng.uniform(0.5, 1.0),
    }


def _rotating_blob(spec, length, rng, seed_meta) -> Trajectory:
    params = blob_params(rng)
    states = [blob_state(spec, params, k) for k in range(length)]
    return Trajectory(states, spec.dt_sim, {"generator": spec.kind, "seed": seed_meta, **params})


# ---------------------------------------------------------------------------
# sliced_buoyancy


@dataclass
class BuoyancyState:
    w_hat: np.ndarray
    c_hat: np.ndarray


def _buoyancy_grid(spec: GeneratorSpec) -> _Spectral:
    h, w = spec.resolution, spec.hidden_width
    return _Spectral(h, w, 1.0, w / h)


def buoyancy_interface(spec: GeneratorSpec, rng: np.random.Generator, n_modes: int = 6) -> np.ndarray:
    """Random interface displacement per hidden column."""
    w = spec.hidden_width
    x = (np.arange(w) + 0.5) / w
    eta = np.zeros(w)
    for k in range(1, n_modes + 1):
        eta += rng.normal(0, 0.02 / k) * np.cos(2 * np.pi * k * x + rng.uniform(0, 2 * np.pi))
    return eta


def buoyancy_initial(spec: GeneratorSpec, eta: np.ndarray) -> BuoyancyState:
    """Heavy fluid above y=1/2+eta(x), light below; at rest."""
    grid = _buoyancy_grid(spec)
    h = spec.resolution
    y = (np.arange(h) + 0.5) / h
    thickness = 1.5 / h
    upper = 0.5 * (1 + np.tanh((y[:, None] - 0.5 - eta[None, :]) / thickness))
    # periodic in y: the heavy layer ends at the top where it meets the light bottom (stably)
    top = 0.5 * (1 - np.tanh((y[:, None] - 1.0 + 0.5 / h) / thickness)) if h > 2 else 1.0
    c = np.clip(upper * top, 0.0, 1.0)
    return BuoyancyState(np.zeros_like(grid.fft(c)), grid.fft(c))


def _observe_buoyancy(spec, grid, state: BuoyancyState, k: int) -> Field:
    u, v = grid.velocity(state.w_hat)
    c = np.clip(grid.ifft(state.c_hat), 0.0, 1.0)
    rho = 1.0 + (spec.density_ratio - 1.0) * c
    band = slice(0, spec.observed_width)
    obs = np.stack([rho[:, band], (rho * u)[:, band], (rho * v)[:, band]])
    return Field(obs, PHYSICAL, k * spec.dt_sim)


def simulate_buoyancy(spec: GeneratorSpec, state: BuoyancyState, length: int, rng=None) -> list[Field]:
    """Observed (non-augmented) fields for ``length`` frames starting at ``state``."""
    grid = _buoyancy_grid(spec)
    dt = spec.dt_sim / spec.inner_substeps
    decay = np.exp(-spec.viscosity * grid.k2 * dt)
    gravity = 1.0
    atwood = (spec.density_ratio - 1.0) / (spec.density_ratio + 1.0)

    def rhs(fs):
        w_hat, c_hat = fs
        u, v = grid.velocity(w_hat)
        torque = -2.0 * atwood * gravity * 1j * grid.kx * c_hat
        return [grid.advection(w_hat, u, v) + torque, grid.advection(c_hat, u, v)]

    w_hat, c_hat = state.w_hat, state.c_hat
    frames = [_observe_buoyancy(spec, grid, BuoyancyState(w_hat, c_hat), 0)]
    for k in range(1, length):
        for _ in range(spec.inner_substeps):
            u, v = grid.velocity(w_hat)
            _check_cfl(spec, grid, u, v, dt)
            w_hat, c_hat = _if_rk2(grid, [w_hat, c_hat], rhs, decay, dt)
            if spec.noise_scale > 0 and rng is not None:
                w_hat = w_hat + spec.noise_scale * np.sqrt(dt) * grid.fft(grid.random_field(rng, 2.0, 4.0))
        frames.append(_observe_buoyancy(spec, grid, BuoyancyState(w_hat, c_hat), k))
    return frames


def _sliced_buoyancy(spec, length, rng, seed_meta) -> Trajectory:
    state = buoyancy_initial(spec, buoyancy_interface(spec, rng))
    frames = simulate_buoyancy(spec, state, length, rng)
    tau_max = (length - 1) * spec.dt_sim
    states = [augment(f, f.sim_time, tau_max) for f in frames]
    return Trajectory(states, spec.dt_sim, {"generator": spec.kind, "seed": seed_meta})


# ---------------------------------------------------------------------------


def generate(spec: GeneratorSpec, n_traj: int, length: int, rng: np.random.Generator | int) -> list[Trajectory]:
    """``n_traj`` trajectories of ``length`` frames; trajectory i uses its own child seed."""
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    if length < 2:
        raise ValueError(f"trajectories need at least 2 states, got length {length}")
    seq = np.random.SeedSequence(rng) if isinstance(rng, (int, np.integer)) else \
        np.random.SeedSequence(int(rng.integers(2**63)))
    build = {"spectral_flow": _spectral_flow, "rotating_blob": _rotating_blob,
             "sliced_buoyancy": _sliced_buoyancy}[spec.kind]
    out = []
    for i, child in enumerate(seq.spawn(n_traj)):
        out.append(build(spec, length, np.random.default_rng(child), (seq.entropy, i)))
    return out


def with_overrides(spec: GeneratorSpec, **kw) -> GeneratorSpec:
    return replace(spec, **kw)
