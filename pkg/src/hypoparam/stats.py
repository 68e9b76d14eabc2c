"""Long-run statistics: histogram PDF, autocorrelation, Kramers x-marginal."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DegenerateDataError, InsufficientDataError
from .sde_sim import KramersForm, LangevinParams, potential_energy

DEFAULT_BINS = 81
DEFAULT_MAX_LAG = 200


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    densities: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("bin_left,bin_right,density\n")
            for lo, hi, d in zip(self.bin_edges[:-1], self.bin_edges[1:], self.densities):
                fh.write(f"{lo:.17g},{hi:.17g},{d:.17g}\n")


@dataclass(frozen=True)
class AcfCurve:
    values: np.ndarray  # lags 0..L
    h: float = 1.0

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.values.size)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("lag,t,acf\n")
            for k, v in enumerate(self.values):
                fh.write(f"{k},{k * self.h:.17g},{v:.17g}\n")


def _series(series):
    return np.asarray(getattr(series, "values", series), dtype=float), float(getattr(series, "h", 1.0))


def empirical_pdf(series, n_bins: int = DEFAULT_BINS, value_range=None) -> Histogram:
    """Density-normalised equal-width histogram over ``[min, max]`` (or ``value_range``)."""
    x, _ = _series(series)
    if x.size < 10 * n_bins:
        raise InsufficientDataError(f"{x.size} points are too few for {n_bins} bins")
    lo, hi = (x.min(), x.max()) if value_range is None else value_range
    if not hi > lo:
        raise DegenerateDataError("series has zero range")
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    densities = counts / (counts.sum() * np.diff(edges))
    return Histogram(edges, densities)


def empirical_acf(series, max_lag: int = DEFAULT_MAX_LAG) -> AcfCurve:
    x, h = _series(series)
    if x.size <= 10 * max_lag:
        raise InsufficientDataError(f"{x.size} points are too few for {max_lag} lags")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise DegenerateDataError("constant series has no autocorrelation")
    n = d.size
    values = np.array([np.dot(d[:n - k], d[k:]) for k in range(max_lag + 1)]) / denom
    return AcfCurve(values, h)


def kramers_stationary_pdf_x(params: LangevinParams, grid) -> np.ndarray:
    """Stationary x-marginal ``~ exp(-(2 gamma / sigma^2) V(x))`` evaluated on ``grid``."""
    if not isinstance(params.potential, KramersForm):
        raise TypeError("expects a KramersForm potential")
    grid = np.asarray(grid, dtype=float)
    inv_temp = 2.0 * params.gamma / params.sigma ** 2
    pot = params.potential
    v_min = -0.25 * pot.beta ** 2  # V at the well bottoms

    def unnorm(x):
        return np.exp(-inv_temp * (potential_energy(pot, x) - v_min))

    well = pot.beta
    # split at the well bottoms so quad sees both peaks
    z = math.fsum(
        integrate.quad(unnorm, a, b, epsabs=0.0, epsrel=1e-11, limit=400)[0]
        for a, b in ((-np.inf, -well), (-well, 0.0), (0.0, well), (well, np.inf))
    )
    dens = unnorm(grid) / z
    peak = unnorm(np.array([well]))[0] / z
    if grid.size and max(dens[0], dens[-1]) > 1e-6 * peak:
        warnings.warn("grid too narrow: boundary density exceeds 1e-6 of the peak", RuntimeWarning)
    return dens
