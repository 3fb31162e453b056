import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftfilter.asymptotics import (build_periodic_gamma, decay_experiment, limit_cycle,
                                     monotonicity_report, periodic_construction,
                                     periodicity_defect, propagator, trace_envelope)
from driftfilter.config import load_config
from driftfilter.errors import ConfigError, ConvergenceError
from driftfilter.filters import bayes_update, covariance_path
from driftfilter.matops import loewner_leq, spectral_norm
from driftfilter.model import ExpertSchedule, MarketModel, drift_cov
from driftfilter.riccati import lyapunov_fixed_point, solve_are

from helpers import GAMMA6, ex6_model, random_model, random_spd
from oracles import noise_closed_form, scalar_cycle_bisect

seeds = st.integers(0, 2**32 - 1)


def _expm_sym(a, t):
    w, v = np.linalg.eigh(a)
    return (v * np.exp(t * w)) @ v.T


def test_decay_baseline_and_ordering():
    m = ex6_model()
    ds = decay_experiment(m, 1.0, [0, 10, 100], GAMMA6)
    assert ds.norms_E[0] == pytest.approx(spectral_norm(drift_cov(m, 1.0)), rel=1e-10)
    assert ds.strictly_decreasing
    assert np.all(ds.norms_C <= ds.norms_E + 1e-12)
    assert ds.reference == pytest.approx(spectral_norm(m.Sigma0))
    assert [r[0] for r in ds.rows()] == [0, 10, 100]
    with pytest.raises(ConfigError):
        decay_experiment(m, 1.0, [10, 5], GAMMA6)
    with pytest.raises(ConfigError):
        decay_experiment(m, 2.0, [10], GAMMA6)


def test_decay_scalar_recursion():
    a, b, gam, T = 0.9, 0.6, 0.5, 1.0
    m = MarketModel([[a]], [[b]], [0.0], [[0.3]], [[0.4]], T=T)
    Ns = [1, 4, 16, 64]
    ds = decay_experiment(m, T, Ns, [[gam]])
    for N, got in zip(Ns, ds.norms_E):
        g, D = 0.4, T / N
        e = np.exp(-2 * a * D)
        for _ in range(N):
            g = gam * g / (g + gam)
            g = e * g + b * b * (1 - e) / (2 * a)
        assert got == pytest.approx(g, rel=1e-12)


def test_cycle_fixed_point_consistency():
    m = ex6_model()
    for regime in ("E", "C"):
        cyc = limit_cycle(m, regime, 0.1, GAMMA6)
        assert cyc.converged
        assert spectral_norm(bayes_update(cyc.U, cyc.Gamma)[0] - cyc.L) <= 1e-7
        prop = propagator(m, regime, cyc.rk_step)
        assert spectral_norm(prop(cyc.L, cyc.Delta) - cyc.U) <= 1e-7
        np.testing.assert_allclose(cyc.cycle[0], cyc.L)
        assert spectral_norm(cyc.cycle[-1] - cyc.U) <= 1e-7
        assert len(cyc.profile()) == cyc.h.size


def test_cycle_useless_experts():
    m = ex6_model()
    e = limit_cycle(m, "E", 0.5, 1e9 * np.eye(3))
    stat = lyapunov_fixed_point(m)
    assert spectral_norm(e.L - stat) <= 1e-8 and spectral_norm(e.U - stat) <= 1e-8
    c = limit_cycle(m, "C", 0.5, 1e9 * np.eye(3))
    g_inf = solve_are(m).gamma_inf
    assert spectral_norm(c.U - g_inf) <= 1e-8


def test_cycle_from_zero_is_comparable():
    m = ex6_model(Sigma0=np.zeros((3, 3)))
    cyc = limit_cycle(m, "E", 0.25, GAMMA6)
    assert cyc.comparable and cyc.converged


def test_cycle_raises_when_budget_exhausted():
    with pytest.raises(ConvergenceError):
        limit_cycle(ex6_model(), "E", 0.1, GAMMA6, max_cycles=2)


@pytest.mark.parametrize("regime", ["E", "C"])
def test_scalar_cycle_matches_bisection(regime):
    a, b, s, gam, D = 0.7, 0.5, 0.4, 0.3, 0.8
    m = MarketModel([[a]], [[b]], [0.0], [[s]], [[0.2]], T=1.0)
    L, U = scalar_cycle_bisect(a, b * b, gam, D, regime, s * s)
    cyc = limit_cycle(m, regime, D, [[gam]], rk_step=1e-4)
    assert cyc.L[0, 0] == pytest.approx(L, abs=1e-9)
    assert cyc.U[0, 0] == pytest.approx(U, abs=1e-9)


def test_periodic_construction_E_closed_form():
    cfg = load_config("example45.json")
    m = cfg.model
    pc = periodic_construction(m, "E", 1.0)
    E = _expm_sym(m.alpha, -1.0)
    U = E @ m.Sigma0 @ E + noise_closed_form(m.alpha, m.bbT, 1.0)
    G = np.linalg.inv(np.linalg.inv(m.Sigma0) - np.linalg.inv(U))
    assert spectral_norm(pc.U - U) <= 1e-10
    assert spectral_norm(pc.Gamma - G) <= 1e-9 * spectral_norm(G)
    assert periodicity_defect(m, "E", 1.0, pc.Gamma, pc.U) <= 1e-6


def test_periodic_construction_rejects_non_increasing_flow():
    for name in ("example46.json", "example49.json"):
        cfg = load_config(name)
        with pytest.raises(ConfigError):
            build_periodic_gamma(cfg.model, "C", cfg.Delta)


def test_periodic_construction_scalar_monotone():
    m = MarketModel([[0.5]], [[0.7]], [0.0], [[0.3]], [[0.05]], T=5.0)
    for regime in ("E", "C"):
        pc = periodic_construction(m, regime, 1.0)
        assert pc.Gamma[0, 0] > 0
        assert periodicity_defect(m, regime, 1.0, pc.Gamma, pc.U) <= 1e-8
        cyc = limit_cycle(m.replace(Sigma0=pc.U), regime, 1.0, pc.Gamma)
        assert np.all(np.diff(cyc.cycle[:, 0, 0]) >= -1e-12)


def test_constructed_C_trace_dip():
    cfg = load_config("trace_dip_c.json")
    m = cfg.model
    pc = periodic_construction(m, "C", 1.0)
    assert periodicity_defect(m, "C", 1.0, pc.Gamma, pc.U) <= 1e-6
    cyc = limit_cycle(m.replace(Sigma0=pc.U), "C", 1.0, pc.Gamma)
    rep = monotonicity_report(cyc)
    assert rep.trace_dip > 1e-3
    assert not rep.trace_law
    assert rep.initial_trace_slope < 0


def test_gamma_proportional_C_cycle_is_loewner_monotone():
    m = ex6_model()
    # with Gamma = c U the update gives L = U c / (1 + c); find U by iterating that map
    c = 2.0
    g_inf = solve_are(m).gamma_inf
    U = g_inf.copy()
    prop = propagator(m, "C", 0.5 / 200)
    for _ in range(400):
        U = prop(U * c / (1 + c), 0.5)
    cyc = limit_cycle(m.replace(Sigma0=U), "C", 0.5, c * U)
    rep = monotonicity_report(cyc)
    assert rep.gamma_proportional
    assert rep.predictions.get("loewner_nondecreasing")
    for g0, g1 in zip(cyc.cycle[:-1], cyc.cycle[1:]):
        assert loewner_leq(g0, g1, 1e-8)


def test_trace_envelope_uses_left_limits():
    m = ex6_model(T=3.0)
    s = ExpertSchedule.spaced(0.5, 3.0, GAMMA6)
    p = covariance_path(m, s, "E", grid_step=0.01)
    lo, hi = trace_envelope(p, 1.0)
    # dates 1.5, 2.0 and 2.5 lie inside the window; the left limit at 1.0 does not
    inside = [np.trace(g) for g in p.left_values[3:]]
    assert hi == pytest.approx(max(inside), rel=1e-15)
    assert lo == pytest.approx(min(np.trace(g) for g in p.values[p.grid >= 1.0]), rel=1e-15)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_E_cycle_trace_law(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    D = float(rng.uniform(0.1, 1.0))
    cyc = limit_cycle(m, "E", D, random_spd(rng, m.d, 0.05, 1.0))
    tr = np.trace(cyc.cycle, axis1=1, axis2=2)
    assert tr.min() >= tr[0] - 1e-6
    rep = monotonicity_report(cyc)
    assert rep.trace_law


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_E_cycle_scalar_alpha_norm_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    base = random_model(rng, d)
    m = base.replace(alpha=float(rng.uniform(0.2, 3.0)) * np.eye(d))
    cyc = limit_cycle(m, "E", float(rng.uniform(0.1, 1.0)), random_spd(rng, d, 0.05, 1.0))
    norms = np.array([spectral_norm(g) for g in cyc.cycle])
    assert np.all(np.diff(norms) >= -1e-8)
    assert monotonicity_report(cyc).norm_nondecreasing
