"""Contrast estimation of Langevin parameters from observed positions.

The velocity is replaced by forward differences and the velocity equation is
discretised with a drift lagged one step behind the increment.  Residuals

    r_n = yhat_{n+2} - yhat_{n+1} + h (gamma yhat_n + V'(x_n))

are affine in the drift parameters (``gamma`` and ``alpha`` or ``beta^-2``),
so the contrast is minimised exactly: least squares for the drift, then the
closed-form profile value of ``sigma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, EstimateOutOfDomainError, InsufficientDataError
from .sde_sim import KramersForm, LangevinParams, ObservationSeries, Quadratic

FAMILIES = ("quadratic", "kramers")


@dataclass(frozen=True)
class ContrastTheta:
    gamma: float
    drift2: float  # alpha (quadratic) or beta (kramers)
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class ContrastFit:
    theta: ContrastTheta
    residual_sum: float
    n_used: int
    family: str
    h: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.theta.sigma2)

    def to_params(self) -> LangevinParams:
        th = self.theta
        potential = Quadratic(th.drift2) if self.family == "quadratic" else KramersForm(th.drift2)
        return LangevinParams(gamma=th.gamma, potential=potential, sigma=math.sqrt(th.sigma2))

    def csv_row(self) -> str:
        th = self.theta
        return (
            f"{self.family},{self.h:.17g},{th.gamma:.17g},{th.drift2:.17g},"
            f"{th.sigma2:.17g},{self.residual_sum:.17g},{self.n_used}"
        )


CSV_HEADER = "family,h,gamma,drift2,sigma2,residual_sum,n_used"


def write_fits_csv(path, fits) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for fit in fits:
            fh.write(fit.csv_row() + "\n")


def _family(family) -> str:
    kind = getattr(family, "kind", family)
    kind = {"linear": "quadratic"}.get(kind, kind)
    if kind not in FAMILIES:
        raise ValueError(f"contrast estimation supports {FAMILIES}, got {family!r}")
    return kind


def _values(obs) -> tuple[np.ndarray, float]:
    return np.asarray(obs.values, dtype=float), float(obs.h)


def velocity_proxy(obs: ObservationSeries) -> np.ndarray:
    x, h = _values(obs)
    if x.size < 2:
        raise InsufficientDataError("velocity proxy needs at least 2 observations")
    return np.diff(x) / h


def _regression(obs, family):
    """Return ``(d, u, v)`` with ``r = d + gamma*u + kappa*v`` for n = 1..N-3."""
    x, h = _values(obs)
    if x.size < 4:
        raise InsufficientDataError("contrast needs at least 4 observations")
    yhat = np.diff(x) / h
    n = x.size - 3
    xn = x[:n]
    d = yhat[2:n + 2] - yhat[1:n + 1]
    u = h * yhat[:n]
    if family == "quadratic":
        v = h * xn
    else:
        d = d - h * xn
        v = h * xn ** 3
    return d, u, v


def contrast_value(theta: ContrastTheta, family, obs: ObservationSeries) -> float:
    family = _family(family)
    d, u, v = _regression(obs, family)
    kappa = theta.drift2 if family == "quadratic" else theta.drift2 ** -2
    r = d + theta.gamma * u + kappa * v
    h = float(obs.h)
    return float(1.5 * np.dot(r, r) / (h * theta.sigma2) + r.size * math.log(theta.sigma2))


def fit_contrast(obs: ObservationSeries, family) -> ContrastFit:
    """Global minimiser of the contrast for the given potential family."""
    family = _family(family)
    d, u, v = _regression(obs, family)
    h = float(obs.h)
    design = np.column_stack([u, v])
    gram = design.T @ design
    scale = np.sqrt(np.diag(gram))
    if not np.all(scale > 0) or np.linalg.cond(gram / np.outer(scale, scale)) > 1e12:
        raise DegenerateDataError("contrast normal equations are singular")
    coef, *_ = np.linalg.lstsq(design, -d, rcond=None)
    gamma, kappa = (float(c) for c in coef)
    r = d + design @ coef
    rss = float(np.dot(r, r))
    n_used = r.size
    sigma2 = 1.5 * rss / (h * n_used)
    if not sigma2 > 0:
        raise DegenerateDataError("zero residuals: sigma^2 estimate vanishes")
    if family == "kramers":
        if not kappa > 0:
            raise EstimateOutOfDomainError("beta^-2 estimate is not positive", kappa)
        drift2 = kappa ** -0.5
    else:
        drift2 = kappa
    return ContrastFit(ContrastTheta(gamma, drift2, sigma2), rss, n_used, family, h)
