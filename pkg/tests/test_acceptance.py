"""Acceptance criteria, one test each, at the stated tolerances and default seed 0.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
lists one PASS/FAIL line per criterion.
"""

import math
import os

import numpy as np
import pytest

from hypoparam.cli import main
from hypoparam.config import ExperimentConfig
from hypoparam.dt_estimator import NarmaSpec, fit_narma, least_squares_fit, conditional_nll, NarmaModel
from hypoparam.experiments import TABLE_SPACINGS, forecast_pipeline, replicate_across, simulate_dataset
from hypoparam.ct_estimator import fit_contrast
from hypoparam.linear_analytic import (
    arma21_equiv, arma_autocov, exact_linear_step, sde_from_arma, stationary_autocov,
)
from hypoparam.sde_sim import (
    LangevinParams, NoisePair, PhaseState, Quadratic, sample_noise_pairs, step_em, step_it2,
)
from hypoparam.stats import empirical_acf, empirical_pdf

WORKERS = max(1, min(4, os.cpu_count() or 1))


def _cfg(*overrides):
    return ExperimentConfig.load(overrides=list(overrides))


def test_criterion_1_arma_t_values():
    table = {
        1 / 32: (1.9806, 0.9845, 0.2681, 0.0043),
        1 / 16: (1.9539, 0.9692, 0.2684, 0.0121),
        1 / 8: (1.8791, 0.9394, 0.2698, 0.0336),
    }
    for h, want in table.items():
        eq = arma21_equiv(0.5, 4.0, 1.0, h)
        got = (eq.a1, -eq.a2, eq.theta1, eq.sigma_w)
        print(f"h={h}: {got}")
        for g, w in zip(got, want):
            assert abs(g - w) <= 5e-5


def test_criterion_2_arma_autocov_oracle():
    for gamma in (0.1, 0.5, 2.0):
        for alpha in (0.5, 4.0, 10.0):
            for sigma in (0.5, 1.0):
                for h in (1 / 32, 1 / 8, 0.5):
                    eq = arma21_equiv(gamma, alpha, sigma, h)
                    got = arma_autocov(eq.to_spec(), 10)
                    ref = stationary_autocov(gamma, alpha, sigma, h, 10)
                    assert np.abs(got - ref).max() <= 1e-8


def test_criterion_3_ct_bias_linear():
    cfg = _cfg("model.family=linear", "fit.method=ct")
    reports = replicate_across(cfg, TABLE_SPACINGS, workers=WORKERS)
    for rep, want in zip(reports, (0.7313, 0.9538, 1.3493)):
        gamma = rep.summary()["gamma"][0]
        print(f"h={rep.h}: mean gamma {gamma:.4f} vs {want}")
        assert not rep.failures
        assert abs(gamma - want) <= 0.05


def test_criterion_4_ct_bias_kramers():
    cfg = _cfg("model.family=kramers", "fit.method=ct")
    reports = replicate_across(cfg, TABLE_SPACINGS, workers=WORKERS)
    gammas = [rep.summary()["gamma"][0] for rep in reports]
    betas = [rep.summary()["beta"][0] for rep in reports]
    print(f"mean gamma {gammas}, mean beta {betas}")
    for g, want in zip(gammas, (0.8726, 1.2049, 1.7003)):
        assert abs(g - want) <= 0.05
    for b, want in zip(betas, (0.3501, 0.3662, 0.4225)):
        assert abs(b - want) <= 0.01


def test_criterion_5_m3_fit_kramers():
    cfg = _cfg("sim.T=2^15", "obs.h=1/32")
    (obs,) = simulate_dataset(cfg, 0)
    model = fit_narma(NarmaSpec("M3", 0), obs)
    print(f"a1 {model.a[0]:.5f}, -a2 {-model.a[1]:.5f}")
    assert abs(model.a[0] - 1.9906) <= 0.005
    assert abs(-model.a[1] - 0.9896) <= 0.005


def test_criterion_6_rmse_ordering():
    cfg = _cfg("sim.T=2^15", "obs.h=1/8", "forecast.N0=1000", "forecast.N_ens=20", "forecast.K=80",
               "forecast.m=5", "fit.structure=M3", "fit.q=0")
    curves, _ = forecast_pipeline(cfg, 0)
    true = curves["true"].values
    dev_narma = np.abs(curves["narma"].values - true).max()
    dev_sde = np.abs(curves["est_sde"].values - true).max()
    plateau = true[-10:].mean()
    print(f"narma dev {dev_narma:.4f}, est-sde dev {dev_sde:.4f}, plateau {plateau:.4f}")
    assert dev_narma < dev_sde
    assert dev_narma <= 0.1 * plateau


def test_criterion_7_small_h():
    cfg = _cfg("sim.T=512", "obs.h=1/1024", "sim.dt=2^-15")
    (obs,) = simulate_dataset(cfg, 0)
    assert len(obs) == 2 ** 19
    fit = fit_contrast(obs, "kramers")
    got = (fit.theta.gamma, fit.theta.drift2, fit.sigma)
    print(f"gamma, beta, sigma = {got}")
    for g, want in zip(got, (0.5, 1 / math.sqrt(10), 1.0)):
        assert abs(g - want) <= 0.05


def test_criterion_8_property_suite(tmp_path):
    # noise-pair moments at 1e6 draws
    sigma, h, n = 1.0, 1 / 32, 10 ** 6
    w, z = sample_noise_pairs(sigma, h, n, np.random.default_rng(0))
    for prod, target in ((w * w, h), (z * z, h ** 3 / 3), (w * z, h ** 2 / 2)):
        assert abs(prod.mean() - target) <= 3 * prod.std() / math.sqrt(n)

    # one-step means against the exact linear step
    lin = LangevinParams(0.5, Quadratic(4.0), 1.0)
    start = PhaseState(1.0, 0.5)
    exact = exact_linear_step(0.5, 4.0, 1.0, h, start, np.random.default_rng(1), size=10 ** 5)
    se = exact.std(axis=0) / math.sqrt(len(exact))
    for step, order in ((step_em, 2), (step_it2, 3)):
        s = step(lin, start, h, NoisePair(0.0, 0.0))
        assert np.all(np.abs(np.array([s.x, s.y]) - exact.mean(axis=0)) <= 4 * se + 10 * h ** order)

    # q = 0 least squares is the conditional likelihood optimum
    x = simulate_dataset(_cfg("sim.T=2000", "obs.h=1/8"), 0)[0]
    coef = least_squares_fit(NarmaSpec("M3"), x)
    model = fit_narma(NarmaSpec("M3"), x)
    np.testing.assert_allclose([*model.a, *model.b, model.mu], coef, rtol=1e-10, atol=1e-12)
    assert model.nll == pytest.approx(conditional_nll(model, x), rel=1e-10)
    bumped = NarmaModel(model.spec, model.a, model.b, model.c, model.mu + 1e-6, model.c0)
    assert conditional_nll(bumped, x) > conditional_nll(model, x)

    # linear SDE -> ARMA -> SDE identity
    for h in TABLE_SPACINGS:
        back = sde_from_arma(arma21_equiv(0.5, 4.0, 1.0, h), h)
        assert abs(back.gamma - 0.5) <= 1e-6
        assert abs(back.potential.alpha - 4.0) <= 1e-6
        assert abs(back.sigma - 1.0) <= 1e-6

    # histogram normalization and ACF(0)
    hist = empirical_pdf(x, 81)
    assert abs(float(np.sum(hist.densities * hist.widths)) - 1.0) <= 1e-12
    assert empirical_acf(x, 50).values[0] == 1.0

    # byte-identical reruns end to end
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["fit-narma", "--set", "sim.T=500", "--set", "obs.h=1/8", "--out", str(out)]) == 0
        outs.append(out)
    for f in ("narma_model.txt", "stability.csv", "manifest.txt"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
