"""Log-utility portfolio optimization under partial information.

The optimal fraction of wealth in the stocks is ``pi* = S (mu_hat - r 1)``
with ``S = (sigma sigma^T)^{-1}``: the full-information rule with the drift
replaced by its filter.  The optimal expected log terminal wealth is

``V^H(x0) = log x0 + int [r - (r 1)^T S m + (r 1)^T S (r 1) / 2] dt
+ 1/2 int tr(S (Sigma_t + m_t m_t^T)) dt - 1/2 int tr(S gamma^H_t) dt``,

so the regimes differ only through the last integral.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import simpson

from .errors import ConfigError
from .filters import REGIMES, covariance_path, filter_path
from .model import ExpertSchedule, drift_cov_path, drift_mean, make_grid, simulate_paths

__all__ = [
    "ValueReport",
    "WealthPath",
    "MonteCarloResult",
    "optimal_strategy",
    "value_integrals",
    "value_function",
    "efficiency",
    "value_report",
    "value_table",
    "simulate_wealth",
    "monte_carlo",
]


def optimal_strategy(mu_hat, r_t, model):
    """Optimal log-utility portfolio ``(sigma sigma^T)^{-1} (mu_hat - r 1)``.

    Parameters
    ----------
    mu_hat : array_like, shape (..., d)
        Filter values.
    r_t : float or array_like, shape (...)
        Short rate at the same times.
    model : MarketModel
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    excess = mu_hat - np.asarray(r_t, dtype=float)[..., None]
    return np.linalg.solve(model.ssT, excess[..., None])[..., 0]


def _piecewise_simpson(path, integrand):
    """Integrate ``integrand(values)`` over each smooth piece of a path."""
    total = 0.0
    for t, vals in path.segments():
        total += simpson(integrand(vals), x=t)
    return float(total)


def _model_integrals(model, grid):
    """Regime independent pieces of the value function on ``grid``."""
    S = model.S
    m = drift_mean(model, grid)
    Sig = drift_cov_path(model, grid)
    r = model.r(grid)
    one = np.ones(model.d)
    s1 = S @ one
    interest = r - r * (m @ s1) + 0.5 * r * r * (one @ s1)
    second = np.einsum("ij,nji->n", S, Sig) + np.einsum("ni,ij,nj->n", m, S, m)
    return float(simpson(interest, x=grid)), float(0.5 * simpson(second, x=grid))


def value_integrals(model, path):
    """The three additive pieces of the value function for a covariance path.

    Returns
    -------
    tuple of float
        ``(interest, moment, filter)`` where the value function is
        ``log x0 + interest + moment - filter``.
    """
    interest, moment = _model_integrals(model, path.grid)
    S = model.S
    filt = 0.5 * _piecewise_simpson(path, lambda v: np.einsum("ij,nji->n", S, v))
    return interest, moment, filt


def value_function(model, schedule, regime, x0=1.0, grid=None, grid_step=None, rk_step=None):
    """Optimal expected log terminal wealth ``V^H(x0)``.

    Parameters
    ----------
    model : MarketModel
    schedule : ExpertSchedule or None
    regime : {"R", "E", "C", "F"}
    x0 : float
        Initial capital, positive.
    grid, grid_step, rk_step
        Passed to :func:`driftfilter.filters.covariance_path`.
    """
    if not x0 > 0:
        raise ConfigError("initial capital must be positive", "params.x0")
    path = covariance_path(model, schedule, regime, grid, grid_step, rk_step)
    a, b, c = value_integrals(model, path)
    return math.log(x0) + a + b - c


def efficiency(model, schedule, regime, grid=None, grid_step=None, rk_step=None, rtol=1e-9):
    """Efficiency ``rho^H = exp(-1/2 int tr(S gamma^H) dt)``.

    The value is cross-checked against ``exp(V^H(1) - V^F(1))``, the
    inverse of the capital the fully informed investor needs to match the
    regime-H investor starting with one unit.
    """
    path = covariance_path(model, schedule, regime, grid, grid_step, rk_step)
    a, b, c = value_integrals(model, path)
    rho = math.exp(-c)
    full = covariance_path(model, None, "F", path.grid)
    vf = sum(value_integrals(model, full)[:2])
    alt = math.exp((a + b - c) - vf)
    if abs(rho - alt) > rtol * rho:
        raise ArithmeticError("efficiency formulas disagree")
    return rho


@dataclass
class ValueReport:
    """Value functions and efficiencies for one expert count.

    Attributes
    ----------
    x0 : float
    N : int
    values : dict
        Regime -> ``V^H(x0)``.
    efficiencies : dict
        Regime -> ``rho^H``.
    integrals : dict
        Regime -> ``(interest, moment, filter)`` pieces.
    """

    x0: float
    N: int
    values: dict = field(default_factory=dict)
    efficiencies: dict = field(default_factory=dict)
    integrals: dict = field(default_factory=dict)

    def to_dict(self):
        return {"x0": self.x0, "N": self.N, "values": self.values,
                "efficiencies": self.efficiencies,
                "integrals": {k: list(v) for k, v in self.integrals.items()}}


def value_report(model, schedule, x0=1.0, regimes=REGIMES, grid=None, grid_step=None,
                 rk_step=None, paths=None):
    """Value functions and efficiencies of several regimes on a common grid.

    Parameters
    ----------
    paths : dict, optional
        Precomputed covariance paths per regime, reused when given.
    """
    if not x0 > 0:
        raise ConfigError("initial capital must be positive", "params.x0")
    if schedule is None:
        schedule = ExpertSchedule.empty(model.d)
    paths = dict(paths or {})
    rep = ValueReport(float(x0), schedule.N)
    for H in regimes:
        if H not in paths:
            paths[H] = covariance_path(model, schedule, H, grid, grid_step, rk_step)
        a, b, c = value_integrals(model, paths[H])
        rep.integrals[H] = (a, b, c)
        rep.values[H] = math.log(x0) + a + b - c
    if "F" in rep.values:
        vf1 = rep.values["F"] - math.log(x0)
        for H in regimes:
            rho = math.exp(-rep.integrals[H][2])
            alt = math.exp(rep.values[H] - math.log(x0) - vf1)
            if abs(rho - alt) > 1e-9 * rho:
                raise ArithmeticError(f"efficiency formulas disagree for regime {H}")
            rep.efficiencies[H] = rho
    return rep


def value_table(model, Gamma, Ns, x0=1.0, steps_per_interval=50, rk_step=None, callback=None):
    """Value functions for equidistant experts ``t_k = k T / N``.

    For each ``N`` the grid has ``steps_per_interval`` steps between
    consecutive information dates.  The regimes R and F do not depend on
    ``N``; they are evaluated once on the grid of ``N = 0``.

    Returns
    -------
    list of ValueReport
        One report per ``N`` holding regimes E and C, plus R and F.
    """
    reports = []
    base = None
    for N in Ns:
        sched = ExpertSchedule.equidistant(N, model.T, Gamma)
        step = model.T / max(N, 1) / steps_per_interval
        grid, _ = make_grid(model.T, sched.dates, step)
        rep = value_report(model, sched, x0, ("E", "C", "F"), grid=grid, rk_step=rk_step)
        if base is None:
            base_grid, _ = make_grid(model.T, (), model.T / steps_per_interval)
            base = value_report(model, None, x0, ("R", "F"), grid=base_grid, rk_step=rk_step)
        for key in ("values", "efficiencies", "integrals"):
            getattr(rep, key)["R"] = getattr(base, key)["R"]
        reports.append(rep)
        if callback is not None:
            callback(rep)
    return reports


@dataclass(eq=False)
class WealthPath:
    """Wealth of the optimal strategy along simulated paths.

    Attributes
    ----------
    grid : ndarray
    X : ndarray, shape (..., n)
        Wealth at each grid point.
    pi : ndarray, shape (..., n, d)
        Strategy at each grid point (applied over the following step).
    regime : str
    log_terminal : ndarray or float
        ``log X_T``.
    """

    grid: np.ndarray
    X: np.ndarray
    pi: np.ndarray
    regime: str
    log_terminal: object


def simulate_wealth(model, schedule, path, regime, x0=1.0, filt=None):
    """Wealth generated by the optimal strategy of a regime.

    The log-wealth is advanced by the exact log increment
    ``(pi^T (mu - r 1) + r - |sigma^T pi|^2 / 2) h + pi^T sigma dW`` on the
    simulation grid, with the same Brownian increments as the returns.

    Parameters
    ----------
    filt : FilterPath, optional
        Precomputed filter for ``path``.
    """
    if not x0 > 0:
        raise ConfigError("initial capital must be positive", "params.x0")
    if filt is None:
        filt = filter_path(model, schedule, path, regime)
    if filt.grid.shape != path.grid.shape or np.any(filt.grid != path.grid):
        raise ConfigError("filter and path grids differ", "grid")
    grid = path.grid
    h = np.diff(grid)
    r = model.r(grid)
    pi = optimal_strategy(filt.mu_hat, r, model)
    p = pi[..., :-1, :]
    excess = path.mu[..., :-1, :] - r[:-1, None]
    sp = p @ model.sigma
    drift = np.sum(p * excess, axis=-1) + r[:-1] - 0.5 * np.sum(sp * sp, axis=-1)
    noise = np.sum(sp * path.dW, axis=-1)
    logx = math.log(x0) + np.concatenate(
        [np.zeros(drift.shape[:-1] + (1,)), np.cumsum(drift * h + noise, axis=-1)], axis=-1)
    return WealthPath(grid, np.exp(logx), pi, regime, logx[..., -1])


@dataclass
class MonteCarloResult:
    """Summary statistics of a Monte Carlo run.

    Attributes
    ----------
    n_paths : int
    times : ndarray
        Evaluation times for second moments.
    log_wealth_mean, log_wealth_se : dict
        Regime -> sample mean and standard error of ``log X_T``.
    second_moment, second_moment_se : dict
        Regime -> arrays of shape ``(len(times), d, d)`` with the sample
        mean of ``mu_hat mu_hat^T`` and its entrywise standard error.
    gammas : dict
        Regime -> covariance at ``times`` (right-continuous values).
    """

    n_paths: int
    times: np.ndarray
    log_wealth_mean: dict
    log_wealth_se: dict
    second_moment: dict
    second_moment_se: dict
    gammas: dict


def monte_carlo(model, schedule, regimes=("R", "E", "C"), n_paths=10000, grid_step=1e-3,
                seed=0, times=(), x0=1.0, chunk=1000):
    """Simulate paths, run the filters and the optimal strategies.

    Paths are generated in chunks of ``chunk``.  The seed of chunk ``j`` is
    the ``j``-th child of ``numpy.random.SeedSequence(seed).spawn``, so
    results do not depend on how chunks are scheduled.
    """
    grid, _ = make_grid(model.T, schedule.dates, grid_step, min_substeps=1, even=False)
    tidx = []
    for t in times:
        i = int(np.argmin(np.abs(grid - t)))
        if abs(grid[i] - t) > 1e-12:
            raise ConfigError(f"time {t} is not on the simulation grid", "times")
        tidx.append(i)
    covs = {H: covariance_path(model, schedule if H in ("E", "C") else None, H, grid)
            for H in regimes}
    n_chunks = int(math.ceil(n_paths / chunk))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    d = model.d
    s1 = {H: 0.0 for H in regimes}
    s2 = {H: 0.0 for H in regimes}
    m1 = {H: np.zeros((len(tidx), d, d)) for H in regimes}
    m2 = {H: np.zeros((len(tidx), d, d)) for H in regimes}
    done = 0
    for j, child in enumerate(children):
        M = min(chunk, n_paths - done)
        batch = simulate_paths(model, schedule, M, seed=child, grid=grid)
        for H in regimes:
            filt = filter_path(model, schedule, batch, H, covs[H])
            w = simulate_wealth(model, schedule, batch, H, x0, filt)
            s1[H] += float(np.sum(w.log_terminal))
            s2[H] += float(np.sum(w.log_terminal ** 2))
            for q, i in enumerate(tidx):
                mm = np.einsum("pi,pj->pij", filt.mu_hat[:, i], filt.mu_hat[:, i])
                m1[H][q] += mm.sum(axis=0)
                m2[H][q] += (mm ** 2).sum(axis=0)
        done += M
    n = float(n_paths)
    mean, se, sm, sm_se = {}, {}, {}, {}
    for H in regimes:
        mean[H] = s1[H] / n
        se[H] = math.sqrt(max(s2[H] / n - mean[H] ** 2, 0.0) / (n - 1))
        sm[H] = m1[H] / n
        sm_se[H] = np.sqrt(np.maximum(m2[H] / n - sm[H] ** 2, 0.0) / (n - 1))
    gam = {H: np.array([covs[H].values[i] for i in tidx]).reshape(len(tidx), d, d)
           for H in regimes}
    return MonteCarloResult(n_paths, np.asarray(times, dtype=float), mean, se, sm, sm_se, gam)
