"""Langevin model family and its explicit integrators.

The system is ``dx = y dt``, ``dy = a(x, y) dt + sigma dB`` with
``a(x, y) = -gamma*y - V'(x)``.  Every supported potential has a force of the
form ``V'(x) = k3*x**3 + k1*x``, which is what the compiled kernels consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import ConfigError, InsufficientDataError
from .rng import as_generator

CHUNK_STEPS = 1 << 18


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Quadratic:
    """``V(x) = alpha x^2 / 2``."""

    alpha: float
    kind = "quadratic"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Quadratic potential needs alpha > 0")

    def force_coefficients(self):
        return self.alpha, 0.0

    def drift2(self):
        return self.alpha


@dataclass(frozen=True)
class DoubleWell:
    """``V(x) = beta x^4 / 4 - alpha x^2 / 2``."""

    alpha: float
    beta: float
    kind = "doublewell"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("DoubleWell potential needs alpha, beta > 0")

    def force_coefficients(self):
        return -self.alpha, self.beta

    def to_kramers(self) -> "KramersForm":
        if self.alpha != 1.0:
            raise ValueError("only alpha = 1 double wells have a Kramers form")
        return KramersForm(beta=self.beta ** -0.5)


@dataclass(frozen=True)
class KramersForm:
    """``V(x) = x^4 / (4 beta^2) - x^2 / 2``; wells sit at ``x = +-beta``."""

    beta: float
    kind = "kramers"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("KramersForm potential needs beta > 0")

    def force_coefficients(self):
        return -1.0, self.beta ** -2

    def to_double_well(self) -> DoubleWell:
        return DoubleWell(alpha=1.0, beta=self.beta ** -2)

    def drift2(self):
        return self.beta


PotentialSpec = Quadratic | DoubleWell | KramersForm


def force(potential: PotentialSpec, x):
    """V'(x)."""
    k1, k3 = potential.force_coefficients()
    return k3 * x ** 3 + k1 * x


def force_slope(potential: PotentialSpec, x):
    """V''(x)."""
    k1, k3 = potential.force_coefficients()
    return 3.0 * k3 * x ** 2 + k1


def potential_energy(potential: PotentialSpec, x):
    k1, k3 = potential.force_coefficients()
    return 0.25 * k3 * x ** 4 + 0.5 * k1 * x ** 2


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LangevinParams:
    gamma: float
    potential: PotentialSpec
    sigma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def temperature(self) -> float:
        return self.sigma ** 2 / (2.0 * self.gamma)

    @property
    def family(self) -> str:
        return self.potential.kind


@dataclass(frozen=True)
class PhaseState:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("phase state must be finite")


@dataclass(frozen=True)
class NoisePair:
    w: float
    z: float


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_steps: int
    seed: int = 0
    initial: PhaseState = field(default_factory=lambda: PhaseState(0.5, 0.5))
    scheme: str = "IT2"
    burn_in: float = 0.0  # time units integrated and discarded before recording

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if int(self.n_steps) < 1:
            problems.append("n_steps must be >= 1")
        if self.scheme not in ("EM", "IT2"):
            problems.append(f"unknown scheme {self.scheme!r}")
        if self.burn_in < 0:
            problems.append("burn_in must be >= 0")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class ObservationSeries:
    """Positions ``x_{nh}``, ``n = 1..N``."""

    h: float
    values: np.ndarray

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("observation spacing h must be positive")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("observation values must be one-dimensional")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def prefix(self, n: int) -> "ObservationSeries":
        return ObservationSeries(self.h, self.values[:n])

    def halves(self) -> tuple["ObservationSeries", "ObservationSeries"]:
        mid = len(self) // 2
        return ObservationSeries(self.h, self.values[:mid]), ObservationSeries(self.h, self.values[mid:])

    def to_csv(self, path) -> None:
        write_series_csv(path, self)

    @classmethod
    def from_csv(cls, path) -> "ObservationSeries":
        return read_series_csv(path)


def write_series_csv(path, obs: ObservationSeries) -> None:
    n = np.arange(1, len(obs) + 1)
    with open(path, "w") as fh:
        fh.write("n,t,x\n")
        for k, xk in zip(n.tolist(), obs.values.tolist()):
            fh.write(f"{k},{k * obs.h:.17g},{xk:.17g}\n")


def read_series_csv(path) -> ObservationSeries:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] == 0:
        raise InsufficientDataError(f"{path}: no observations")
    n, t, x = data[:, 0], data[:, 1], data[:, 2]
    if data.shape[0] > 1:
        h = (t[-1] - t[0]) / (n[-1] - n[0])
    else:
        h = t[0] / n[0]
    return ObservationSeries(float(h), x)


# --------------------------------------------------------------------------
# Drift, noise and single steps
# --------------------------------------------------------------------------


def drift_a(params: LangevinParams, state: PhaseState) -> float:
    return -params.gamma * state.y - force(params.potential, state.x)


def noise_from_normals(sigma, h, xi, eta):
    """Map standard normals to ``(sigma dB, sigma int_0^h B dt)`` increments."""
    w = sigma * math.sqrt(h) * xi
    z = sigma * 0.5 * h ** 1.5 * (xi + eta / math.sqrt(3.0))
    return w, z


def sample_noise_pair(sigma: float, h: float, rng) -> NoisePair:
    xi, eta = as_generator(rng).standard_normal(2)
    w, z = noise_from_normals(sigma, h, xi, eta)
    return NoisePair(float(w), float(z))


def sample_noise_pairs(sigma: float, h: float, size: int, rng):
    """Vectorised :func:`sample_noise_pair`; returns arrays ``(w, z)``."""
    normals = as_generator(rng).standard_normal((size, 2))
    return noise_from_normals(sigma, h, normals[:, 0], normals[:, 1])


@numba.njit(cache=True)
def _em_core(x, y, dt, gamma, k1, k3, w):
    dv = k3 * x * x * x + k1 * x
    return x + y * dt, y + dt * (-gamma * y - dv) + w


@numba.njit(cache=True)
def _it2_core(x, y, dt, gamma, k1, k3, w, z):
    # a_y = -gamma and a_yy = 0 for the whole family
    dv = k3 * x * x * x + k1 * x
    d2v = 3.0 * k3 * x * x + k1
    g = 1.0 - 0.5 * gamma * dt
    x_new = x + dt * g * y - 0.5 * dt * dt * dv + z
    y_new = (
        y * (1.0 - gamma * dt + 0.5 * gamma * gamma * dt * dt - 0.5 * dt * dt * d2v)
        - dt * g * dv
        + w
        - gamma * z
    )
    return x_new, y_new


def step_em(params: LangevinParams, state: PhaseState, dt: float, noise: NoisePair) -> PhaseState:
    k1, k3 = params.potential.force_coefficients()
    x, y = _em_core(state.x, state.y, dt, params.gamma, k1, k3, noise.w)
    return PhaseState(x, y)


def step_it2(params: LangevinParams, state: PhaseState, dt: float, noise: NoisePair) -> PhaseState:
    k1, k3 = params.potential.force_coefficients()
    x, y = _it2_core(state.x, state.y, dt, params.gamma, k1, k3, noise.w, noise.z)
    return PhaseState(x, y)


@numba.njit(cache=True)
def _integrate(x, y, dt, gamma, k1, k3, it2, w, z, xs, ys):
    """Advance ``len(w)`` steps, writing positions (and velocities) after each."""
    for i in range(w.shape[0]):
        if it2:
            x, y = _it2_core(x, y, dt, gamma, k1, k3, w[i], z[i])
        else:
            x, y = _em_core(x, y, dt, gamma, k1, k3, w[i])
        xs[i] = x
        ys[i] = y
    return x, y


@numba.njit(cache=True)
def _integrate_ensemble(x, y, dt, gamma, k1, k3, it2, w, z, stride, out):
    """Members in parallel arrays; ``w, z`` have shape (n_steps, members).

    ``out[k, j]`` receives member j's position after ``(k + 1) * stride`` steps.
    """
    n_steps, members = w.shape
    for j in range(members):
        xj = x[j]
        yj = y[j]
        for i in range(n_steps):
            if it2:
                xj, yj = _it2_core(xj, yj, dt, gamma, k1, k3, w[i, j], z[i, j])
            else:
                xj, yj = _em_core(xj, yj, dt, gamma, k1, k3, w[i, j])
            if (i + 1) % stride == 0:
                out[(i + 1) // stride - 1, j] = xj


def obs_stride(obs_h: float, dt: float) -> int:
    ratio = obs_h / dt
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"observation spacing {obs_h!r} is not an integer multiple of dt {dt!r}")
    return stride


class Trajectory:
    """Driver that integrates in fixed-size chunks from one random stream."""

    def __init__(self, params: LangevinParams, config: SimConfig):
        self.params = params
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.x = float(config.initial.x)
        self.y = float(config.initial.y)
        self._k1, self._k3 = params.potential.force_coefficients()

    def advance(self, n_steps: int, on_chunk=None) -> None:
        cfg = self.config
        it2 = cfg.scheme == "IT2"
        done = 0
        normals = np.empty((CHUNK_STEPS, 2))
        xs = np.empty(CHUNK_STEPS)
        ys = np.empty(CHUNK_STEPS)
        while done < n_steps:
            m = min(CHUNK_STEPS, n_steps - done)
            self.rng.standard_normal(out=normals[:m])
            w, z = noise_from_normals(self.params.sigma, cfg.dt, normals[:m, 0], normals[:m, 1])
            self.x, self.y = _integrate(
                self.x, self.y, cfg.dt, self.params.gamma, self._k1, self._k3, it2,
                w, z, xs[:m], ys[:m],
            )
            if on_chunk is not None:
                on_chunk(done, xs[:m], ys[:m])
            done += m


def simulate_observations(
    params: LangevinParams, config: SimConfig, obs_hs: Sequence[float], keep_path: bool = False
):
    """Integrate once and observe x at several spacings.

    Returns ``(path, [ObservationSeries, ...])`` where ``path`` is an
    ``(n_steps, 2)`` array of recorded states or ``None``.
    """
    strides = [obs_stride(h, config.dt) for h in obs_hs]
    traj = Trajectory(params, config)
    burn_steps = int(round(config.burn_in / config.dt))
    if burn_steps:
        traj.advance(burn_steps)

    n_steps = int(config.n_steps)
    collected = [np.empty(n_steps // s) for s in strides]
    path = np.empty((n_steps, 2)) if keep_path else None

    def record(offset, xs, ys):
        m = xs.size
        for s, dest in zip(strides, collected):
            # global step index i (0-based) is recorded when (i + 1) % s == 0
            first = (-(offset + 1)) % s
            picks = xs[first::s]
            start = (offset + first + 1) // s - 1
            dest[start:start + picks.size] = picks
        if path is not None:
            path[offset:offset + m, 0] = xs
            path[offset:offset + m, 1] = ys

    traj.advance(n_steps, record)
    return path, [ObservationSeries(h, v) for h, v in zip(obs_hs, collected)]


def simulate_and_observe(params: LangevinParams, config: SimConfig, obs_h: float, keep_path: bool = False):
    """Integrate ``config.n_steps`` steps and record every ``obs_h/dt``-th position."""
    path, (obs,) = simulate_observations(params, config, [obs_h], keep_path=keep_path)
    return path, obs
