"""Closed-form results for the linear Langevin equation.

``dx = y dt, dy = (-gamma y - alpha x) dt + sigma dB`` observed at spacing
``h`` is a stationary Gaussian AR(2)-type sequence; this module provides its
exact one-step law, autocovariance, the equivalent invertible ARMA(2,1), and
the inverse map back to ``(gamma, alpha, sigma)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import DegeneracyError, InvalidRootError, NonCausalError
from .rng import as_generator
from .sde_sim import LangevinParams, PhaseState, Quadratic


@dataclass(frozen=True)
class Propagator2:
    a11: float
    a12: float
    a21: float
    a22: float
    eigen_kind: str  # "DistinctReal" | "ComplexPair" | "Repeated"
    lambda1: complex
    lambda2: complex

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])


@dataclass(frozen=True)
class ArmaEquiv:
    a1: float
    a2: float
    theta1: float
    sigma_w: float

    def to_spec(self) -> "ArmaSpec":
        return ArmaSpec(phi=(self.a1, self.a2), theta=(self.theta1,), sigma_w2=self.sigma_w ** 2)


@dataclass(frozen=True)
class ArmaSpec:
    """``X_n - sum phi_k X_{n-k} = W_n + sum theta_j W_{n-j}``, ``Var W = sigma_w2``."""

    phi: tuple
    theta: tuple
    sigma_w2: float

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if not self.sigma_w2 > 0:
            raise ValueError("sigma_w2 must be positive")

    def is_causal(self) -> bool:
        if not self.phi:
            return True
        # roots of 1 - phi_1 z - ... - phi_p z^p
        coeffs = [-c for c in reversed(self.phi)] + [1.0]
        return bool(np.all(np.abs(np.roots(coeffs)) > 1.0))


def _eigen(gamma: float, alpha: float):
    """Return (kind, mu, w) with eigenvalues mu +- w (real) or mu +- i w."""
    disc = gamma * gamma - 4.0 * alpha
    mu = -0.5 * gamma
    if disc > 0:
        return "DistinctReal", mu, 0.5 * math.sqrt(disc)
    if disc < 0:
        return "ComplexPair", mu, 0.5 * math.sqrt(-disc)
    return "Repeated", mu, 0.0


def _exp_coeffs(kind: str, mu: float, w: float, t: float):
    """``e^{At} = c0 I + c1 A`` written in real form."""
    e = math.exp(mu * t)
    if kind == "ComplexPair":
        s = math.sin(w * t) / w
        return e * (math.cos(w * t) - mu * s), e * s
    if kind == "DistinctReal":
        s = math.sinh(w * t) / w
        return e * (math.cosh(w * t) - mu * s), e * s
    return e * (1.0 - mu * t), e * t


def propagator(gamma: float, alpha: float, h: float) -> Propagator2:
    """Closed-form ``e^{Ah}`` for ``A = [[0, 1], [-alpha, -gamma]]``."""
    kind, mu, w = _eigen(gamma, alpha)
    c0, c1 = _exp_coeffs(kind, mu, w, h)
    if kind == "ComplexPair":
        l1, l2 = complex(mu, w), complex(mu, -w)
    else:
        l1, l2 = complex(mu + w), complex(mu - w)
    return Propagator2(
        a11=c0, a12=c1, a21=-alpha * c1, a22=c0 - gamma * c1,
        eigen_kind=kind, lambda1=l1, lambda2=l2,
    )


def discrete_noise_cov(gamma: float, alpha: float, sigma: float, h: float) -> np.ndarray:
    """Covariance of the exact one-step noise ``(W_1, W_2)``, by adaptive quadrature."""
    kind, mu, w = _eigen(gamma, alpha)

    def column(s):
        c0, c1 = _exp_coeffs(kind, mu, w, s)
        return c1, c0 - gamma * c1  # second column of e^{As}

    def entry(i, j):
        f = lambda s: column(s)[i] * column(s)[j]
        val, _ = integrate.quad(f, 0.0, h, epsabs=0.0, epsrel=1e-10, limit=200)
        return val

    c11, c12, c22 = entry(0, 0), entry(0, 1), entry(1, 1)
    return sigma ** 2 * np.array([[c11, c12], [c12, c22]])


def exact_linear_step(gamma, alpha, sigma, h, state: PhaseState, rng, size=None):
    """Sample the exact transition over ``h``.

    With ``size`` given, returns an array ``(size, 2)`` of independent draws
    from the same starting state; otherwise a :class:`PhaseState`.
    """
    rng = as_generator(rng)
    mean = propagator(gamma, alpha, h).matrix @ np.array([state.x, state.y])
    cov = discrete_noise_cov(gamma, alpha, sigma, h)
    chol = _psd_cholesky(cov)
    if size is None:
        x, y = mean + chol @ rng.standard_normal(2)
        return PhaseState(float(x), float(y))
    return mean + rng.standard_normal((size, 2)) @ chol.T


def exact_linear_chain(gamma, alpha, sigma, h, n_steps, rng, start=None) -> np.ndarray:
    """Exact discrete-time path of length ``n_steps``; stationary start by default."""
    rng = as_generator(rng)
    prop = propagator(gamma, alpha, h).matrix
    chol = _psd_cholesky(discrete_noise_cov(gamma, alpha, sigma, h))
    if start is None:
        var_x = sigma ** 2 / (2 * gamma * alpha)
        var_y = sigma ** 2 / (2 * gamma)
        state = rng.standard_normal(2) * np.sqrt([var_x, var_y])
    else:
        state = np.array([start.x, start.y], dtype=float)
    shocks = rng.standard_normal((n_steps, 2)) @ chol.T
    out = np.empty((n_steps, 2))
    for n in range(n_steps):
        state = prop @ state + shocks[n]
        out[n] = state
    return out


def _psd_cholesky(cov: np.ndarray) -> np.ndarray:
    if not np.any(cov):
        return np.zeros_like(cov)
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def stationary_autocov(gamma, alpha, sigma, h, max_lag) -> np.ndarray:
    """``E[x_{kh} x_{(k+j)h}]`` for ``j = 0..max_lag`` under stationarity."""
    g0 = sigma ** 2 / (2.0 * alpha * gamma)
    t = h * np.arange(max_lag + 1)
    disc = gamma * gamma - 4.0 * alpha
    if disc < 0:
        w = 0.5 * math.sqrt(-disc)
        r = np.exp(-0.5 * gamma * t) * (np.cos(w * t) + gamma / (2.0 * w) * np.sin(w * t))
    elif disc > 0:
        root = math.sqrt(disc)
        l1, l2 = 0.5 * (-gamma + root), 0.5 * (-gamma - root)
        r = (l1 * np.exp(l2 * t) - l2 * np.exp(l1 * t)) / (l1 - l2)
    else:
        l0 = -0.5 * gamma
        r = np.exp(l0 * t) * (1.0 - l0 * t)
    return g0 * r


def arma21_equiv(gamma, alpha, sigma, h) -> ArmaEquiv:
    """Invertible ARMA(2,1) with the same law as the observed positions."""
    prop = propagator(gamma, alpha, h)
    a1 = prop.a11 + prop.a22
    a2 = -math.exp(-gamma * h)
    g0, g1, g2 = (float(v) for v in stationary_autocov(gamma, alpha, sigma, h, 2))
    lhs0 = g0 - g1 * a1 - g2 * a2  # sigma_w^2 (1 + theta^2 + theta a1)
    lhs1 = g1 * (1.0 - a2) - g0 * a1  # sigma_w^2 theta
    if lhs1 == 0.0:
        raise DegeneracyError("lag-one moment equation vanishes; MA part is degenerate")
    c = lhs0 / lhs1
    disc = (c - a1) ** 2 - 4.0
    if disc < 0:
        raise DegeneracyError(f"no real invertible MA root: (c - a1)^2 - 4 = {disc!r}")
    # theta^2 + (a1 - c) theta + 1 = 0; roots multiply to 1, keep the inner one
    sq = math.sqrt(disc)
    theta = 0.5 * (c - a1 - sq) if c - a1 >= 0 else 0.5 * (c - a1 + sq)
    sigma_w2 = lhs1 / theta
    return ArmaEquiv(a1=a1, a2=a2, theta1=theta, sigma_w=math.sqrt(sigma_w2))


def psi_weights(phi: Sequence[float], theta: Sequence[float], n: int) -> np.ndarray:
    """Causal MA(infinity) weights ``psi_0..psi_{n-1}``."""
    p, q = len(phi), len(theta)
    th = [1.0] + list(theta)
    psi = np.zeros(n)
    for j in range(n):
        acc = th[j] if j <= q else 0.0
        for k in range(1, min(j, p) + 1):
            acc += phi[k - 1] * psi[j - k]
        psi[j] = acc
    return psi


def arma_autocov(spec: ArmaSpec, max_lag: int) -> np.ndarray:
    """Autocovariance ``gamma(0..max_lag)`` of a causal ARMA(p, q)."""
    if not spec.is_causal():
        raise NonCausalError("AR polynomial has a root inside the closed unit disk")
    phi, theta = spec.phi, spec.theta
    p, q = len(phi), len(theta)
    r = max(p, q + 1)
    psi = psi_weights(phi, theta, q + 1)
    th = [1.0] + list(theta)
    rhs = np.array([
        spec.sigma_w2 * sum(th[j] * psi[j - k] for j in range(k, q + 1)) for k in range(r)
    ])
    # gamma(k) - sum phi_i gamma(|k - i|) = rhs_k for k < r (gamma is even)
    size = max(r, p + 1)
    mat = np.zeros((size, size))
    vec = np.zeros(size)
    for k in range(size):
        mat[k, k] += 1.0
        for i in range(1, p + 1):
            mat[k, abs(k - i)] -= phi[i - 1]
        vec[k] = rhs[k] if k < r else 0.0
    base = np.linalg.solve(mat, vec)
    out = np.zeros(max_lag + 1)
    n_base = min(size, max_lag + 1)
    out[:n_base] = base[:n_base]
    for k in range(size, max_lag + 1):
        out[k] = sum(phi[i - 1] * out[k - i] for i in range(1, p + 1))
    return out


def sde_from_arma(equiv: ArmaEquiv, h: float) -> LangevinParams:
    """Recover the linear Langevin parameters from ARMA(2,1) coefficients."""
    a1, a2 = equiv.a1, equiv.a2
    if not (-1.0 < a2 < 0.0):
        raise InvalidRootError(f"a2 = {a2!r} is outside (-1, 0)")
    gamma = -math.log(-a2) / h
    # phi(z) = 1 - a1 z - a2 z^2 has roots zeta_i with 1/zeta_i = exp(lambda_i h)
    inv_roots = np.roots([1.0, -a1, -a2])  # z^2 - a1 z - a2: roots are 1/zeta_i
    l1, l2 = (cmath.log(complex(r)) / h for r in inv_roots)
    if abs(inv_roots[0].imag) > 0:
        alpha = abs(l1) ** 2
    else:
        if np.any(inv_roots.real <= 0):
            raise InvalidRootError("negative real root cannot come from a Langevin propagator")
        alpha = (l1 * l2).real
    if not (l1.real < 0 and l2.real < 0) or not alpha > 0:
        raise InvalidRootError("roots do not correspond to a damped oscillator")
    g0 = arma_autocov(equiv.to_spec(), 0)[0]
    sigma = math.sqrt(2.0 * gamma * alpha * g0)
    return LangevinParams(gamma=gamma, potential=Quadratic(alpha), sigma=sigma)
