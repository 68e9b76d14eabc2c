"""Experiment runners: replicated fits, consistency scans and end-to-end pipelines.

All randomness flows through :func:`hypoparam.rng.derive_seed`.  Dataset
``i`` of a run with base seed ``s`` integrates from ``derive_seed(s, i)``;
fits and forecasts draw from streams keyed by ``(i, role)``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .ct_estimator import fit_contrast
from .dt_estimator import NarmaModel, NarmaSpec, fit_narma, simulate_narma, stability_probe
from .errors import ConfigError, HypoparamError, InstabilityError
from .forecast import ForecastConfig, NarmaPredictor, SdePredictor, forecast_experiment
from .linear_analytic import arma21_equiv
from .rng import derive_seed, stream
from .sde_sim import ObservationSeries, SimConfig, simulate_observations
from .stats import Histogram, empirical_acf, empirical_pdf, kramers_stationary_pdf_x

# stream roles under (seed, dataset, role)
FIT_KEY = 1
FORECAST_KEY = 2
LONGRUN_KEY = 3
PROBE_KEY = 4

TABLE_SPACINGS = (1.0 / 32, 1.0 / 16, 1.0 / 8)
CONSISTENCY_FRACTIONS = (1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0)
STABILITY_HORIZON = 10 ** 5
STABILITY_RUNS = 5


def dataset_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    return derive_seed(base_seed, index)


def _int_seed(base_seed: int, *keys: int) -> int:
    return int(derive_seed(base_seed, *keys).generate_state(1, np.uint64)[0] >> np.uint64(1))


def simulate_dataset(cfg: ExperimentConfig, index: int = 0, hs=None) -> list:
    """Observation series of dataset ``index`` at every spacing in ``hs``."""
    hs = [cfg.h] if hs is None else list(hs)
    sim = cfg.sim_config(seed=dataset_seed(cfg["sim.seed"], index))
    _, series = simulate_observations(cfg.params(), sim, hs)
    return series


# --------------------------------------------------------------------------
# Per-dataset fits
# --------------------------------------------------------------------------


def narma_spec(cfg: ExperimentConfig) -> NarmaSpec:
    return NarmaSpec(cfg["fit.structure"], q=cfg["fit.q"])


def parameter_names(cfg: ExperimentConfig) -> list:
    if cfg["fit.method"] == "ct":
        return ["gamma", "alpha" if cfg.family == "linear" else "beta", "sigma"]
    spec = narma_spec(cfg)
    return (
        [f"a{i}" for i in range(1, spec.p + 1)]
        + [f"b{i}" for i in range(1, spec.n_nonlinear + 1)]
        + [f"c{i}" for i in range(1, spec.q + 1)]
        + ["mu", "c0"]
    )


def narma_vector(model: NarmaModel) -> list:
    return [*model.a, *model.b, *model.c, model.mu, model.c0]


def fit_series(cfg: ExperimentConfig, obs: ObservationSeries, rng=None) -> list:
    """Parameter vector in :func:`parameter_names` order."""
    if cfg["fit.method"] == "ct":
        fit = fit_contrast(obs, cfg.family)
        return [fit.theta.gamma, fit.theta.drift2, fit.sigma]
    model = fit_narma(narma_spec(cfg), obs, restarts=cfg["fit.restarts"], rng=rng)
    return narma_vector(model)


def _replicate_task(args):
    cfg, index, hs, seed = args
    base = cfg["sim.seed"]
    out = []
    try:
        sim = cfg.sim_config(seed=seed if seed is not None else dataset_seed(base, index))
        _, series = simulate_observations(cfg.params(), sim, hs)
    except HypoparamError as exc:
        return [(None, f"{type(exc).__name__}: {exc}")] * len(hs)
    for j, obs in enumerate(series):
        try:
            out.append((fit_series(cfg, obs, rng=stream(base, index, FIT_KEY, j)), None))
        except HypoparamError as exc:
            out.append((None, f"{type(exc).__name__}: {exc}"))
    return out


# --------------------------------------------------------------------------
# Replicates
# --------------------------------------------------------------------------


@dataclass
class ReplicateReport:
    """Mean and standard deviation of each parameter across datasets."""

    method: str
    family: str
    h: float
    names: list
    estimates: np.ndarray  # (n_ok, n_params)
    n_datasets: int
    failures: list = field(default_factory=list)  # (dataset index, message)
    config_text: str = ""

    @property
    def means(self) -> np.ndarray:
        return self.estimates.mean(axis=0) if len(self.estimates) else np.full(len(self.names), np.nan)

    @property
    def stds(self) -> np.ndarray:
        if len(self.estimates) < 2:
            return np.full(len(self.names), np.nan)
        return self.estimates.std(axis=0, ddof=1)

    def summary(self) -> dict:
        return {n: (float(m), float(s)) for n, m, s in zip(self.names, self.means, self.stds)}


REPLICATE_HEADER = "method,family,h,parameter,mean,std,n_used,n_failed"


def write_replicate_csv(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write(REPLICATE_HEADER + "\n")
        for rep in reports:
            for name, mean, std in zip(rep.names, rep.means, rep.stds):
                fh.write(
                    f"{rep.method},{rep.family},{rep.h:.17g},{name},{mean:.17g},{std:.17g},"
                    f"{len(rep.estimates)},{len(rep.failures)}\n"
                )


def replicate_across(cfg: ExperimentConfig, hs, workers: int = 1, seeds=None) -> list:
    """One :class:`ReplicateReport` per spacing; each dataset is integrated once.

    ``seeds`` overrides the derived per-dataset seeds (one entry per dataset).
    """
    n = cfg["replicate.n_datasets"]
    if n < 2:
        raise ConfigError(["replicate.n_datasets must be >= 2"])
    if seeds is not None and len(seeds) != n:
        raise ConfigError(["seeds must list one entry per dataset"])
    hs = list(hs)
    tasks = [(cfg, i, hs, None if seeds is None else seeds[i]) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_task, tasks))
    else:
        results = [_replicate_task(t) for t in tasks]
    names = parameter_names(cfg)
    reports = []
    for j, h in enumerate(hs):
        good, failed = [], []
        for i, per_h in enumerate(results):
            vec, err = per_h[j]
            if err is None:
                good.append(vec)
            else:
                failed.append((i, err))
        est = np.array(good, dtype=float).reshape(len(good), len(names))
        reports.append(ReplicateReport(cfg["fit.method"], cfg.family, h, names, est, n, failed, cfg.to_text()))
    return reports


def replicate_estimators(cfg: ExperimentConfig, workers: int = 1, seeds=None) -> ReplicateReport:
    return replicate_across(cfg, [cfg.h], workers, seeds)[0]


# --------------------------------------------------------------------------
# Consistency scan
# --------------------------------------------------------------------------


@dataclass
class ConsistencyCell:
    spec: NarmaSpec
    fraction: float
    n_obs: int
    names: list
    values: list | None
    error: str | None = None


@dataclass
class ConsistencyTable:
    cells: list

    def oscillation(self) -> list:
        """``(spec, name, max_f |v_f - v_1| / |v_1|)`` per coefficient."""
        rows = []
        by_spec = {}
        for cell in self.cells:
            by_spec.setdefault(cell.spec, []).append(cell)
        for spec, cells in by_spec.items():
            full = [c for c in cells if c.fraction == 1.0 and c.values is not None]
            if not full:
                continue
            ref = full[0]
            for k, name in enumerate(ref.names):
                devs = [abs(c.values[k] - ref.values[k]) for c in cells if c.values is not None]
                denom = abs(ref.values[k])
                rows.append((spec, name, max(devs) / denom if denom > 0 else math.inf))
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("structure,q,fraction,n_obs,parameter,value,status\n")
            for c in self.cells:
                if c.values is None:
                    fh.write(f"{c.spec.structure},{c.spec.q},{c.fraction:.17g},{c.n_obs},,,failed: {c.error}\n")
                    continue
                for name, v in zip(c.names, c.values):
                    fh.write(f"{c.spec.structure},{c.spec.q},{c.fraction:.17g},{c.n_obs},{name},{v:.17g},ok\n")

    def write_oscillation_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("structure,q,parameter,relative_oscillation\n")
            for spec, name, osc in self.oscillation():
                fh.write(f"{spec.structure},{spec.q},{name},{osc:.17g}\n")


def _spec_names(spec: NarmaSpec) -> list:
    return (
        [f"a{i}" for i in range(1, spec.p + 1)]
        + [f"b{i}" for i in range(1, spec.n_nonlinear + 1)]
        + [f"c{i}" for i in range(1, spec.q + 1)]
        + ["mu", "c0"]
    )


def consistency_scan(obs: ObservationSeries, specs, fractions=CONSISTENCY_FRACTIONS,
                     restarts: int = 5, seed: int = 0) -> ConsistencyTable:
    """Fit each spec on the leading ``fraction`` of ``obs``."""
    cells = []
    for s_idx, spec in enumerate(specs):
        for f_idx, frac in enumerate(fractions):
            n = int(round(frac * len(obs)))
            try:
                model = fit_narma(spec, obs.prefix(n), restarts=restarts, rng=stream(seed, FIT_KEY, s_idx, f_idx))
                cells.append(ConsistencyCell(spec, frac, n, _spec_names(spec), narma_vector(model)))
            except HypoparamError as exc:
                cells.append(ConsistencyCell(spec, frac, n, _spec_names(spec), None, f"{type(exc).__name__}: {exc}"))
    return ConsistencyTable(cells)


# --------------------------------------------------------------------------
# End-to-end pipelines
# --------------------------------------------------------------------------


def ct_pipeline(cfg: ExperimentConfig, first_half: ObservationSeries) -> SdePredictor:
    """Continuous-time approach: estimate, then integrate with the explicit solver."""
    fit = fit_contrast(first_half, cfg.family)
    return SdePredictor(fit.to_params(), cfg["sim.scheme"], cfg["forecast.dt_solve"])


def true_predictor(cfg: ExperimentConfig) -> SdePredictor:
    return SdePredictor(cfg.params(), cfg["sim.scheme"], cfg["forecast.dt_solve"])


@dataclass
class Candidate:
    spec: NarmaSpec
    model: NarmaModel | None
    stable: bool
    score: float  # sup-norm PDF gap + sup-norm ACF gap; inf when unusable
    note: str = ""


def default_candidates(family: str) -> list:
    if family == "linear":
        return [NarmaSpec("ARMA", 1)]
    return [NarmaSpec(s, q) for s, q in (("M1", 0), ("M2", 0), ("M3", 0), ("M2", 1), ("M3", 1), ("M4", 1))]


def _stats_gap(reference: np.ndarray, sample: np.ndarray, h: float, n_bins: int, max_lag: int) -> float:
    lo = min(reference.min(), sample.min())
    hi = max(reference.max(), sample.max())
    ref_pdf = empirical_pdf(reference, n_bins, (lo, hi)).densities
    smp_pdf = empirical_pdf(sample, n_bins, (lo, hi)).densities
    ref_acf = empirical_acf(reference, max_lag).values
    smp_acf = empirical_acf(sample, max_lag).values
    return float(np.abs(ref_pdf - smp_pdf).max() + np.abs(ref_acf - smp_acf).max())


def select_structure(cfg: ExperimentConfig, data: ObservationSeries, candidates=None, seed: int = 0):
    """Fit candidate structures, drop unstable ones, rank by long-run statistics.

    Returns ``(best, candidates)``; ``best`` is ``None`` when nothing survives.
    """
    candidates = default_candidates(cfg.family) if candidates is None else candidates
    results = []
    n_bins, max_lag = cfg["stats.n_bins"], cfg["stats.max_lag"]
    for idx, spec in enumerate(candidates):
        try:
            model = fit_narma(spec, data, restarts=cfg["fit.restarts"], rng=stream(seed, FIT_KEY, idx))
        except HypoparamError as exc:
            results.append(Candidate(spec, None, False, math.inf, f"fit failed: {exc}"))
            continue
        probe = stability_probe(model, STABILITY_HORIZON, STABILITY_RUNS, stream(seed, PROBE_KEY, idx))
        if not probe.stable:
            results.append(Candidate(spec, model, False, math.inf, f"{probe.diverged_count} of {probe.n_realizations} runs diverged"))
            continue
        try:
            run = simulate_narma(model, len(data), data.values[:spec.p], stream(seed, LONGRUN_KEY, idx))
        except InstabilityError as exc:
            results.append(Candidate(spec, model, False, math.inf, f"long run diverged at step {exc.step}"))
            continue
        score = _stats_gap(data.values, run, data.h, n_bins, max_lag)
        results.append(Candidate(spec, model, True, score))
    usable = [c for c in results if c.stable]
    best = min(usable, key=lambda c: c.score) if usable else None
    return best, results


def forecast_pipeline(cfg: ExperimentConfig, index: int = 0, narma_model: NarmaModel | None = None):
    """Simulate, fit both approaches on the first half, forecast the second.

    Returns ``(curves, context)`` where ``curves`` maps ``true``,
    ``est_sde`` and ``narma`` to RMSE curves.
    """
    cfg.validate(forecasting=True)
    (obs,) = simulate_dataset(cfg, index)
    first, second = obs.halves()
    est = ct_pipeline(cfg, first)
    if narma_model is None:
        narma_model = fit_narma(narma_spec(cfg), first, restarts=cfg["fit.restarts"],
                                rng=stream(cfg["sim.seed"], index, FIT_KEY))
    predictors = {
        "true": true_predictor(cfg),
        "est_sde": est,
        "narma": NarmaPredictor(narma_model),
    }
    fc = ForecastConfig(cfg["forecast.N0"], cfg["forecast.N_ens"], cfg.horizon, cfg["forecast.m"])
    curves = forecast_experiment(second, predictors, fc, seed=_int_seed(cfg["sim.seed"], index, FORECAST_KEY))
    return curves, {"est_params": est.params, "narma": narma_model, "obs": obs}


def long_run_statistics(cfg: ExperimentConfig, index: int = 0, narma_model: NarmaModel | None = None):
    """PDF and ACF of the data, the estimated SDE and the NARMA model.

    The models are fitted on the first half of the data and run for as many
    observations as the data hold.  Returns ``(pdfs, acfs, notes)``.
    """
    (obs,) = simulate_dataset(cfg, index)
    first, _ = obs.halves()
    base = cfg["sim.seed"]
    est = ct_pipeline(cfg, first).params
    if narma_model is None:
        narma_model = fit_narma(narma_spec(cfg), first, restarts=cfg["fit.restarts"],
                                rng=stream(base, index, FIT_KEY))
    n = len(obs)
    h = cfg.h
    runs = {"data": obs.values}
    notes = []
    dt = cfg["forecast.dt_solve"]
    sim = SimConfig(dt=dt, n_steps=int(round(n * h / dt)), seed=derive_seed(base, index, LONGRUN_KEY, 0),
                    initial=cfg.sim_config().initial, scheme=cfg["sim.scheme"], burn_in=cfg["sim.burn_in"])
    _, (est_obs,) = simulate_observations(est, sim, [h])
    runs["est_sde"] = est_obs.values
    try:
        runs["narma"] = simulate_narma(narma_model, n, obs.values[:narma_model.spec.p],
                                       stream(base, index, LONGRUN_KEY, 1))
    except InstabilityError as exc:
        notes.append(f"narma long run diverged at step {exc.step}")
    lo = min(v.min() for v in runs.values())
    hi = max(v.max() for v in runs.values())
    pdfs = {k: empirical_pdf(v, cfg["stats.n_bins"], (lo, hi)) for k, v in runs.items()}
    acfs = {k: empirical_acf(ObservationSeries(h, v), cfg["stats.max_lag"]) for k, v in runs.items()}
    if cfg.family == "kramers":
        edges = pdfs["data"].bin_edges
        with warnings.catch_warnings():
            # the data range, not the grid, bounds these bins
            warnings.simplefilter("ignore", RuntimeWarning)
            dens = kramers_stationary_pdf_x(cfg.params(), pdfs["data"].centers)
        pdfs["analytic"] = Histogram(edges, dens)
    return pdfs, acfs, notes


def t_values(cfg: ExperimentConfig, hs=TABLE_SPACINGS) -> list:
    """Analytic ARMA(2,1) coefficients ``(h, a1, a2, theta1, sigma_w)``."""
    p = cfg.params()
    alpha = p.potential.alpha
    rows = []
    for h in hs:
        eq = arma21_equiv(p.gamma, alpha, p.sigma, h)
        rows.append((h, eq.a1, eq.a2, eq.theta1, eq.sigma_w))
    return rows
