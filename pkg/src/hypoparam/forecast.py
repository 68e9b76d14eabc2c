"""Ensemble forecasts from held-out data pieces and their RMSE curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dt_estimator import DIVERGENCE_GUARD, NarmaModel, _run_ensemble, window_shocks
from .errors import ConfigError, InsufficientDataError
from .rng import as_generator, stream
from .sde_sim import LangevinParams, _integrate_ensemble, noise_from_normals, obs_stride

PIECE_BATCH = 64


@dataclass(frozen=True)
class SdePredictor:
    params: LangevinParams
    scheme: str = "IT2"
    dt_solve: float = 1.0 / 64


@dataclass(frozen=True)
class NarmaPredictor:
    model: NarmaModel


@dataclass(frozen=True)
class ForecastConfig:
    n_pieces: int
    ensemble_size: int
    horizon: int
    init_len: int = 5

    def __post_init__(self):
        problems = []
        if self.n_pieces < 1:
            problems.append("n_pieces must be >= 1")
        if self.ensemble_size < 1:
            problems.append("ensemble_size must be >= 1")
        if self.init_len < 2:
            problems.append("init_len must be >= 2")
        if self.horizon <= self.init_len:
            problems.append("horizon must exceed init_len")
        if problems:
            raise ConfigError(problems)


@dataclass
class RmseCurve:
    values: np.ndarray  # RMSE(kh), k = 1..K
    h: float
    config: ForecastConfig
    diverged_members: int = 0
    pieces_used: int = 0

    @property
    def lead_times(self) -> np.ndarray:
        return self.h * np.arange(1, self.values.size + 1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,t,rmse\n")
            for k, (t, v) in enumerate(zip(self.lead_times, self.values), 1):
                fh.write(f"{k},{t:.17g},{v:.17g}\n")


def write_wide_csv(path, curves: dict) -> None:
    """Combined file ``k,t,rmse_<name>...`` for curves sharing a config."""
    names = list(curves)
    first = curves[names[0]]
    with open(path, "w") as fh:
        fh.write("k,t," + ",".join(f"rmse_{n}" for n in names) + "\n")
        for k, t in enumerate(first.lead_times, 1):
            vals = ",".join(f"{curves[n].values[k - 1]:.17g}" for n in names)
            fh.write(f"{k},{t:.17g},{vals}\n")


def _member_mean(forecasts: np.ndarray) -> np.ndarray:
    if not np.isnan(forecasts).any():
        return forecasts.mean(axis=-1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(forecasts, axis=-1)


def default_init_len(model: NarmaModel) -> int:
    return 2 * max(model.spec.p, model.spec.q) + 1


def make_pieces(obs, config: ForecastConfig) -> np.ndarray:
    """Non-overlapping windows; piece ``i`` holds observations ``K i + 1 .. K i + K``."""
    x = np.asarray(getattr(obs, "values", obs), dtype=float)
    k, n0 = config.horizon, config.n_pieces
    if x.size < k * (n0 + 1):
        raise InsufficientDataError(
            f"{x.size} observations hold at most {max(0, x.size // k - 1)} pieces of length {k}, {n0} requested"
        )
    starts = k * np.arange(1, n0 + 1)
    return np.stack([x[s:s + k] for s in starts])


def _sde_batch(pred: SdePredictor, pieces, h, config, rngs):
    stride = obs_stride(h, pred.dt_solve)
    m, k, n_ens = config.init_len, config.horizon, config.ensemble_size
    n_steps = (k - m) * stride
    k1, k3 = pred.params.potential.force_coefficients()
    it2 = pred.scheme == "IT2"
    out = np.empty((len(pieces), k, n_ens))
    buf = np.empty((k - m, n_ens))
    for i, (piece, rng) in enumerate(zip(pieces, rngs)):
        normals = rng.standard_normal((n_steps, n_ens, 2))
        w, z = noise_from_normals(pred.params.sigma, pred.dt_solve, normals[..., 0], normals[..., 1])
        x0 = np.full(n_ens, piece[m - 1])
        y0 = np.full(n_ens, (piece[m - 1] - piece[m - 2]) / h)
        _integrate_ensemble(x0, y0, pred.dt_solve, pred.params.gamma, k1, k3, it2,
                            np.ascontiguousarray(w), np.ascontiguousarray(z), stride, buf)
        out[i, :m] = piece[:m, None]
        out[i, m:] = buf
    return out, 0


def _narma_batch(pred: NarmaPredictor, pieces, config, rngs):
    model = pred.model
    m, k, n_ens = config.init_len, config.horizon, config.ensemble_size
    _, a1, a2, b, c, mu = model._kernel_args()
    code = model.spec.code
    out = np.empty((len(pieces), k, n_ens))
    buf = np.empty((n_ens, k - m))
    bad = np.empty(n_ens, dtype=np.int64)
    diverged = 0
    for i, (piece, rng) in enumerate(zip(pieces, rngs)):
        window = np.ascontiguousarray(piece[:m])
        shocks = model.c0 * rng.standard_normal((n_ens, k - m))
        _run_ensemble(window, window_shocks(model, window), shocks, code, a1, a2, b, c, mu,
                      DIVERGENCE_GUARD, buf, bad)
        flagged = bad >= 0
        diverged += int(flagged.sum())
        out[i, :m] = piece[:m, None]
        out[i, m:] = buf.T
        out[i, m:, flagged] = np.nan
    return out, diverged


def _forecast_batch(predictor, pieces, h, config, rngs):
    if isinstance(predictor, SdePredictor):
        return _sde_batch(predictor, pieces, h, config, rngs)
    if isinstance(predictor, NarmaPredictor):
        return _narma_batch(predictor, pieces, config, rngs)
    raise TypeError(f"unsupported predictor {type(predictor).__name__}")


def ensemble_forecast(predictor, piece, config: ForecastConfig, rng, h: float = None) -> np.ndarray:
    """Forecast matrix ``X[k, j]`` (``k = 1..K`` rows, members in columns).

    Rows ``k <= m`` repeat the observed initial window.  Diverged NARMA
    members are returned as NaN columns.  ``h`` is required for SDE
    predictors.
    """
    piece = np.asarray(piece, dtype=float)
    if piece.size < config.horizon:
        raise InsufficientDataError("piece shorter than the forecast horizon")
    if isinstance(predictor, SdePredictor) and h is None:
        raise ValueError("SDE predictors need the observation spacing h")
    out, _ = _forecast_batch(predictor, piece[None, :config.horizon], h, config, [as_generator(rng)])
    return out[0]


def rmse_curve(forecasts, pieces, config: ForecastConfig, h: float, diverged: int = 0) -> RmseCurve:
    """RMSE of the ensemble-mean forecast against the data, per lead time.

    ``forecasts`` is ``(N0, K, N_ens)`` (NaN marks excluded members) or the
    ensemble means ``(N0, K)``.
    """
    forecasts = np.asarray(forecasts, dtype=float)
    pieces = np.asarray(pieces, dtype=float)
    if forecasts.shape[0] != pieces.shape[0] or forecasts.shape[1] != config.horizon:
        raise ValueError("forecasts and pieces disagree with the forecast config")
    if forecasts.ndim == 3:
        means = _member_mean(forecasts)
    else:
        means = forecasts.copy()
    m = config.init_len
    # initial rows are the data themselves; averaging copies can leave rounding noise
    means[:, :m] = np.where(np.isfinite(means[:, :m]), pieces[:, :m], means[:, :m])
    err = means - pieces[:, :config.horizon]
    ok = np.all(np.isfinite(err), axis=1)
    values = np.sqrt(np.mean(err[ok] ** 2, axis=0)) if ok.any() else np.full(config.horizon, np.nan)
    return RmseCurve(values, h, config, diverged, int(ok.sum()))


def forecast_experiment(obs, predictors: dict, config: ForecastConfig, seed: int = 0) -> dict:
    """Run every predictor on the same pieces with independent shock streams.

    ``predictors`` maps names to predictors; piece ``i`` of predictor number
    ``p`` draws from ``stream(seed, p, i)``.
    """
    h = float(obs.h)
    pieces = make_pieces(obs, config)
    curves = {}
    for p_idx, (name, pred) in enumerate(predictors.items()):
        if isinstance(pred, SdePredictor):
            obs_stride(h, pred.dt_solve)
        means = np.empty((len(pieces), config.horizon))
        diverged = 0
        for lo in range(0, len(pieces), PIECE_BATCH):
            batch = pieces[lo:lo + PIECE_BATCH]
            rngs = [stream(seed, p_idx, i) for i in range(lo, lo + len(batch))]
            out, d = _forecast_batch(pred, batch, h, config, rngs)
            diverged += d
            means[lo:lo + len(batch)] = _member_mean(out)
        curves[name] = rmse_curve(means, pieces, config, h, diverged)
    return curves
