import numpy as np
import pytest

from hypoparam.config import ExperimentConfig
from hypoparam.ct_estimator import fit_contrast
from hypoparam.dt_estimator import NarmaSpec
from hypoparam.errors import ConfigError
from hypoparam.experiments import (
    consistency_scan, dataset_seed, fit_series, forecast_pipeline, parameter_names, replicate_across,
    replicate_estimators, select_structure, simulate_dataset, t_values, write_replicate_csv,
)
from hypoparam.linear_analytic import arma21_equiv

SHORT = ["sim.T=200", "sim.burn_in=10", "replicate.n_datasets=3"]


def _cfg(*extra):
    return ExperimentConfig.load(overrides=[*SHORT, *extra])


def test_datasets_are_reproducible_and_distinct():
    cfg = _cfg()
    (a,), (b,) = simulate_dataset(cfg, 0), simulate_dataset(cfg, 0)
    (c,) = simulate_dataset(cfg, 1)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert len(a) == cfg.n_obs


def test_parameter_names():
    assert parameter_names(_cfg()) == ["gamma", "beta", "sigma"]
    assert parameter_names(_cfg("model.family=linear")) == ["gamma", "alpha", "sigma"]
    names = parameter_names(_cfg("fit.method=narma", "fit.structure=M3"))
    assert names == ["a1", "a2", "b1", "b2", "b3", "mu", "c0"]


def test_identical_seeds_give_zero_spread(tmp_path):
    cfg = _cfg("replicate.n_datasets=2")
    seed = dataset_seed(0, 0)
    (rep,) = replicate_across(cfg, [cfg.h], seeds=[seed, seed])
    assert np.all(rep.stds == 0.0)
    (obs,) = simulate_dataset(cfg, 0)
    np.testing.assert_array_equal(rep.means, fit_series(cfg, obs))
    write_replicate_csv(tmp_path / "r.csv", [rep])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "method,family,h,parameter,mean,std,n_used,n_failed"
    assert lines[1].startswith("ct,kramers,0.03125,gamma,") and lines[1].endswith(",0,2,0")


def test_replicate_needs_two_datasets():
    with pytest.raises(ConfigError):
        replicate_estimators(_cfg("replicate.n_datasets=1"))


def test_replicate_across_shares_one_trajectory():
    cfg = _cfg()
    coarse, fine = replicate_across(cfg, [1 / 8, 1 / 32])
    assert coarse.h == 1 / 8 and fine.h == 1 / 32
    for i in range(3):
        series = simulate_dataset(cfg, i, [1 / 8])[0]
        np.testing.assert_allclose(coarse.estimates[i], fit_series(cfg, series), rtol=1e-12)


def test_parallel_replicates_match_serial():
    cfg = _cfg()
    serial = replicate_estimators(cfg)
    parallel = replicate_estimators(cfg, workers=2)
    np.testing.assert_array_equal(serial.estimates, parallel.estimates)


def test_failed_datasets_are_recorded():
    # a record this short cannot support the cubic drift fit
    cfg = _cfg("sim.T=0.5", "obs.h=1/8", "fit.method=narma", "fit.structure=M3")
    rep = replicate_estimators(cfg)
    assert len(rep.failures) == 3 and len(rep.estimates) == 0
    assert np.all(np.isnan(rep.means))


def test_consistency_scan_and_oscillation(tmp_path):
    cfg = _cfg("sim.T=2000", "obs.h=1/8")
    (obs,) = simulate_dataset(cfg, 0)
    table = consistency_scan(obs, [NarmaSpec("M2"), NarmaSpec("M3")], fractions=(0.5, 1.0))
    assert len(table.cells) == 4
    osc = table.oscillation()
    assert len(osc) == 6 + 7
    a1 = [o for o in osc if o[0] == NarmaSpec("M2") and o[1] == "a1"][0][2]
    assert 0 <= a1 < 0.01
    table.write_oscillation_csv(tmp_path / "osc.csv")
    assert (tmp_path / "osc.csv").read_text().startswith("structure,q,parameter,relative_oscillation\n")


def test_t_values_use_closed_form():
    rows = t_values(_cfg("model.family=linear"), hs=[1 / 32])
    ref = arma21_equiv(0.5, 4.0, 1.0, 1 / 32)
    assert rows == [(1 / 32, ref.a1, ref.a2, ref.theta1, ref.sigma_w)]


def test_select_structure_prefers_stable_model():
    cfg = _cfg("sim.T=4096", "obs.h=1/8")
    (obs,) = simulate_dataset(cfg, 0)
    best, cands = select_structure(cfg, obs, [NarmaSpec("M1"), NarmaSpec("M3")])
    assert len(cands) == 2
    assert best is not None and best.stable and np.isfinite(best.score)


def test_forecast_pipeline_small():
    cfg = _cfg("sim.T=400", "obs.h=1/8", "forecast.N0=10", "forecast.K=16", "forecast.N_ens=4")
    curves, ctx = forecast_pipeline(cfg, 0)
    assert list(curves) == ["true", "est_sde", "narma"]
    for curve in curves.values():
        assert curve.values.shape == (16,)
        assert np.all(curve.values[:5] == 0.0)
    first, _ = ctx["obs"].halves()
    assert ctx["est_params"] == fit_contrast(first, "kramers").to_params()
