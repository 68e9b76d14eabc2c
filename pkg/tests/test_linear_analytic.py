import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm, solve_continuous_lyapunov
from scipy.signal import lfilter

from hypoparam.errors import DegeneracyError, InvalidRootError, NonCausalError
from hypoparam.linear_analytic import (
    ArmaEquiv, ArmaSpec, arma21_equiv, arma_autocov, discrete_noise_cov, exact_linear_chain,
    exact_linear_step, propagator, psi_weights, sde_from_arma, stationary_autocov,
)
from hypoparam.sde_sim import PhaseState

GRID = list(itertools.product((0.25, 0.5, 1.0), (1.0, 4.0), (1 / 32, 1 / 8)))


def _a(gamma, alpha):
    return np.array([[0.0, 1.0], [-alpha, -gamma]])


@pytest.mark.parametrize("gamma,alpha", [(0.5, 4.0), (3.0, 1.0), (2.0, 1.0)])
def test_propagator_matches_expm(gamma, alpha):
    # complex pair, distinct real and repeated eigenvalues
    for h in (1 / 32, 0.3, 2.0):
        p = propagator(gamma, alpha, h)
        np.testing.assert_allclose(p.matrix, expm(_a(gamma, alpha) * h), rtol=1e-12, atol=1e-14)
        assert p.a11 * p.a22 - p.a12 * p.a21 == pytest.approx(math.exp(-gamma * h), rel=1e-12)
        for lam in (p.lambda1, p.lambda2):
            assert abs(lam * lam + gamma * lam + alpha) < 1e-12


def test_propagator_kinds_and_examples():
    assert propagator(0.5, 4.0, 0.1).eigen_kind == "ComplexPair"
    assert propagator(3.0, 1.0, 0.1).eigen_kind == "DistinctReal"
    assert propagator(2.0, 1.0, 0.1).eigen_kind == "Repeated"
    assert propagator(0.5, 4.0, 1 / 32).matrix.trace() == pytest.approx(1.9806, abs=5e-5)
    p = propagator(0.5, 4.0, 1 / 8)
    assert np.linalg.det(p.matrix) == pytest.approx(0.939413, abs=1e-6)
    np.testing.assert_allclose(propagator(0.5, 4.0, 1e-12).matrix, np.eye(2), atol=1e-11)


@pytest.mark.parametrize("gamma,alpha,sigma,h", [(0.5, 4.0, 1.0, 1 / 32), (3.0, 1.0, 0.7, 0.5), (2.0, 1.0, 1.0, 1.0)])
def test_noise_cov_matches_lyapunov_closed_form(gamma, alpha, sigma, h):
    # Sigma(h) = Sigma_inf - e^{Ah} Sigma_inf e^{Ah}^T
    a = _a(gamma, alpha)
    q = np.array([[0.0, 0.0], [0.0, sigma ** 2]])
    s_inf = solve_continuous_lyapunov(a, -q)
    e = expm(a * h)
    np.testing.assert_allclose(discrete_noise_cov(gamma, alpha, sigma, h), s_inf - e @ s_inf @ e.T, rtol=1e-8, atol=1e-14)


def test_noise_cov_limits():
    assert not np.any(discrete_noise_cov(0.5, 4.0, 0.0, 0.1))
    h = 1e-5
    assert discrete_noise_cov(0.5, 4.0, 1.3, h)[1, 1] / h == pytest.approx(1.69, rel=1e-4)
    cov = discrete_noise_cov(0.5, 4.0, 1.0, 1 / 32)
    assert np.all(np.linalg.eigvalsh(cov) >= 0)


def test_noise_cov_monte_carlo():
    rng = np.random.default_rng(3)
    draws = exact_linear_step(0.5, 4.0, 1.0, 1 / 32, PhaseState(0.2, -0.1), rng, size=10 ** 6)
    np.testing.assert_allclose(np.cov(draws.T), discrete_noise_cov(0.5, 4.0, 1.0, 1 / 32), rtol=0.01)


def test_exact_step_deterministic_without_noise():
    s = exact_linear_step(0.5, 4.0, 0.0, 0.1, PhaseState(1.0, 0.0), 0)
    ref = expm(_a(0.5, 4.0) * 0.1) @ [1.0, 0.0]
    assert (s.x, s.y) == pytest.approx(tuple(ref), rel=1e-12)


def test_exact_chain_stationary_moments():
    path = exact_linear_chain(0.5, 4.0, 1.0, 1 / 32, 10 ** 6, np.random.default_rng(4))
    x = path[:, 0]
    assert x.var() == pytest.approx(0.25, rel=0.02)
    lag1 = np.mean((x[:-1] - x.mean()) * (x[1:] - x.mean()))
    assert lag1 == pytest.approx(stationary_autocov(0.5, 4.0, 1.0, 1 / 32, 1)[1], rel=0.02)


def test_stationary_autocov_examples():
    g = stationary_autocov(0.5, 4.0, 1.0, 1 / 32, 4000)
    assert g[0] == pytest.approx(0.25)
    assert abs(g[-1]) < 1e-6
    rep = stationary_autocov(2.0, 1.0, 1.0, 1.0, 1)
    assert rep[1] == pytest.approx(0.25 * math.exp(-1) * 2, rel=1e-12)


@pytest.mark.parametrize("gamma,alpha", [(0.5, 4.0), (3.0, 1.0), (2.0, 1.0)])
def test_stationary_autocov_matches_matrix_oracle(gamma, alpha):
    # E[x_0 x_t] = (e^{At} Sigma_inf)_{11}
    a = _a(gamma, alpha)
    s_inf = solve_continuous_lyapunov(a, -np.array([[0.0, 0.0], [0.0, 1.0]]))
    g = stationary_autocov(gamma, alpha, 1.0, 0.2, 20)
    ref = [(expm(a * 0.2 * j) @ s_inf)[0, 0] for j in range(21)]
    np.testing.assert_allclose(g, ref, rtol=1e-10, atol=1e-14)


def test_autocov_satisfies_ar2_recursion():
    for gamma, alpha, h in GRID:
        eq = arma21_equiv(gamma, alpha, 1.0, h)
        g = stationary_autocov(gamma, alpha, 1.0, h, 12)
        resid = g[2:] - eq.a1 * g[1:-1] - eq.a2 * g[:-2]
        assert np.max(np.abs(resid)) < 1e-12 * g[0]


@pytest.mark.parametrize("h,expected", [
    (1 / 32, (1.9806, 0.9845, 0.2681, 0.0043)),
    (1 / 16, (1.9539, 0.9692, 0.2684, 0.0121)),
    (1 / 8, (1.8791, 0.9394, 0.2698, 0.0336)),
])
def test_t_values(h, expected):
    eq = arma21_equiv(0.5, 4.0, 1.0, h)
    got = (eq.a1, -eq.a2, eq.theta1, eq.sigma_w)
    assert got == pytest.approx(expected, abs=5e-5)


def test_equivalence_grid():
    for gamma, alpha, h in GRID:
        eq = arma21_equiv(gamma, alpha, 1.0, h)
        assert abs(eq.theta1) < 1
        assert -1 < eq.a2 < 0 and eq.sigma_w > 0
        np.testing.assert_allclose(
            arma_autocov(eq.to_spec(), 10), stationary_autocov(gamma, alpha, 1.0, h, 10), rtol=0, atol=1e-8,
        )
        back = sde_from_arma(eq, h)
        assert (back.gamma, back.potential.alpha, back.sigma) == pytest.approx((gamma, alpha, 1.0), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.3, 6.0), st.floats(0.2, 3.0), st.sampled_from([1 / 64, 1 / 32, 1 / 16, 1 / 8]))
def test_equivalence_property(gamma, alpha, sigma, h):
    try:
        eq = arma21_equiv(gamma, alpha, sigma, h)
    except DegeneracyError:
        return
    g = stationary_autocov(gamma, alpha, sigma, h, 10)
    np.testing.assert_allclose(arma_autocov(eq.to_spec(), 10), g, rtol=1e-7, atol=1e-12)


def test_arma_autocov_white_noise_and_defining_equation():
    g = arma_autocov(ArmaSpec((), (), 2.0), 5)
    np.testing.assert_array_equal(g, [2.0, 0, 0, 0, 0, 0])
    spec = ArmaSpec((1.2, -0.5), (0.4,), 1.5)
    g = arma_autocov(spec, 3)
    phi1, phi2, th = 1.2, -0.5, 0.4
    assert g[0] - phi1 * g[1] - phi2 * g[2] == pytest.approx(1.5 * (1 + th * th + th * phi1), rel=1e-12)


def test_arma_autocov_matches_psi_sum():
    # gamma(k) = sigma^2 sum_j psi_j psi_{j+k}
    spec = ArmaSpec((0.5, 0.2, -0.1), (0.3, -0.2), 0.8)
    psi = psi_weights(spec.phi, spec.theta, 4000)
    ref = [0.8 * np.dot(psi[: len(psi) - k], psi[k:]) for k in range(8)]
    np.testing.assert_allclose(arma_autocov(spec, 7), ref, rtol=1e-10)


def test_arma_autocov_matches_simulation():
    spec = ArmaSpec((1.2, -0.5), (0.4,), 1.0)
    rng = np.random.default_rng(8)
    n = 10 ** 7
    w = rng.standard_normal(n + 1)
    x = lfilter([1.0, 0.4], [1.0, -1.2, 0.5], w)[1000:]
    x = x - x.mean()
    sample = [np.dot(x[: x.size - k], x[k:]) / x.size for k in range(4)]
    np.testing.assert_allclose(sample, arma_autocov(spec, 3), rtol=0.02)


def test_non_causal_rejected():
    with pytest.raises(NonCausalError):
        arma_autocov(ArmaSpec((1.5,), (), 1.0), 3)


def test_sde_from_arma_errors_and_gamma():
    eq = arma21_equiv(0.5, 4.0, 1.0, 1 / 8)
    assert sde_from_arma(eq, 1 / 8).gamma == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(InvalidRootError):
        sde_from_arma(ArmaEquiv(1.0, 0.5, 0.2, 0.1), 0.1)
    with pytest.raises(InvalidRootError):
        sde_from_arma(ArmaEquiv(-1.5, -0.56, 0.2, 0.1), 0.1)
