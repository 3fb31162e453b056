import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import cholesky, solve_continuous_are, solve_continuous_lyapunov

from driftfilter.errors import ConfigError
from driftfilter.filters import gamma_R
from driftfilter.matops import loewner_leq, psd_sqrt, spectral_norm
from driftfilter.model import MarketModel
from driftfilter.riccati import (are_residual, is_detectable, is_stabilizable, is_stable,
                                 lyapunov_fixed_point, lyapunov_flow, model_detectable,
                                 model_stabilizable, newton_step, solve_are)

from helpers import ex6_model, random_model
from oracles import scalar_riccati_limit

seeds = st.integers(0, 2**32 - 1)


def scipy_are(m):
    # filter Riccati 0 = -alpha g - g alpha + bbT - g S g is the CARE with A = -alpha, B = chol(S)^T
    B = cholesky(m.S, lower=True)
    return solve_continuous_are(-m.alpha, B, m.bbT, np.eye(m.d))


def test_stability_examples():
    m = ex6_model()
    assert model_stabilizable(m) and model_detectable(m)
    tau = psd_sqrt(m.S)
    assert is_stable(-(m.alpha + tau))
    assert is_stable(-(m.bbT + m.alpha))
    z = MarketModel([[0.0]], [[0.0]], [0.0], [[1.0]], [[0.0]])
    assert not model_detectable(z)
    assert not is_stable(np.zeros((1, 1)))


def test_pbh_fallback():
    A = np.array([[1.0, 0.0], [0.0, -1.0]])
    assert is_stabilizable(A, np.array([[1.0], [0.0]]))
    assert not is_stabilizable(A, np.array([[0.0], [1.0]]))
    assert is_detectable(np.array([[1.0, 0.0]]), A)
    assert not is_detectable(np.array([[0.0, 1.0]]), A)


def test_are_example_61():
    m = ex6_model()
    sol = solve_are(m)
    assert sol.residual_norm <= 1e-9
    assert sol.uniqueness_gap <= 1e-7
    assert spectral_norm(sol.gamma_inf - scipy_are(m)) <= 1e-12
    assert are_residual(m, sol.gamma_inf) == pytest.approx(sol.residual_norm, abs=1e-15)
    d = sol.to_dict()
    assert set(d) >= {"gamma_inf", "residual_norm", "uniqueness_gap"}


def test_are_scalar_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b, s = rng.uniform(0.1, 3), rng.uniform(0.05, 2), rng.uniform(0.05, 1)
        m = MarketModel([[a]], [[b]], [0.0], [[s]], [[0.1]])
        assert solve_are(m).gamma_inf[0, 0] == pytest.approx(scalar_riccati_limit(a, b, s), abs=1e-10)


def test_are_zero_noise_solution():
    m = MarketModel([[1.0]], [[0.0]], [0.0], [[1.0]], [[0.0]])
    assert are_residual(m, np.zeros((1, 1))) == 0.0
    with pytest.raises(ConfigError):
        solve_are(m)


def test_newton_step_fixed_point():
    m = ex6_model()
    g = solve_are(m).gamma_inf
    assert spectral_norm(newton_step(m, g) - g) <= 1e-12


def test_riccati_path_converges_monotonically():
    m = ex6_model(T=9.0)
    g_inf = solve_are(m).gamma_inf
    p = gamma_R(m, grid_step=0.01)
    dist = np.array([spectral_norm(g - g_inf) for g in p.values])
    assert dist[-1] <= 1e-9
    tail = dist[p.grid >= 1.0]
    assert np.all(np.diff(tail) <= 1e-15)


def test_lyapunov_fixed_point_and_flow():
    m = ex6_model()
    lf = lyapunov_fixed_point(m)
    ref = solve_continuous_lyapunov(-m.alpha, -m.bbT)
    assert spectral_norm(lf - ref) <= 1e-13
    assert np.trace(m.alpha @ lf) == pytest.approx(0.5 * np.trace(m.bbT), rel=1e-12)
    assert spectral_norm(lyapunov_flow(m, lf, 3.0) - lf) <= 1e-13
    a, b = 0.6, 0.9
    sc = MarketModel([[a]], [[b]], [0.0], [[1.0]], [[0.0]])
    assert lyapunov_fixed_point(sc)[0, 0] == pytest.approx(b * b / (2 * a))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_lyapunov_flow_limit(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    t = 50.0 / np.linalg.eigvalsh(m.alpha)[0]
    g0 = m.Sigma0 * rng.uniform(0, 10)
    assert spectral_norm(lyapunov_flow(m, g0, t) - lyapunov_fixed_point(m)) <= 1e-7


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_are_properties(seed):
    m = random_model(np.random.default_rng(seed))
    sol = solve_are(m)
    assert sol.residual_norm <= 1e-9
    assert sol.uniqueness_gap <= 1e-7
    ref = scipy_are(m)
    assert spectral_norm(sol.gamma_inf - ref) <= 1e-8 * max(1.0, spectral_norm(ref))
    assert loewner_leq(sol.gamma_inf, lyapunov_fixed_point(m), 1e-9)
