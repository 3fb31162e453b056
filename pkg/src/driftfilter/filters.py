"""Conditional mean and covariance of the drift under four information
regimes.

``R``
    returns only (Kalman-Bucy filter, Riccati covariance),
``E``
    expert opinions only (Lyapunov propagation plus Bayesian updates),
``C``
    returns and expert opinions combined,
``F``
    full observation of the drift (zero covariance).

Covariance paths store right-continuous values on the grid; the values
just before each information date are kept separately as left limits.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import ConfigError, NotPSDError, NumericError
from .matops import is_pd, psd_clip
from .model import ExpertSchedule, _StepCache, date_indices, make_grid

__all__ = [
    "REGIMES",
    "CovariancePath",
    "FilterPath",
    "bayes_update",
    "riccati_rhs",
    "rk4_step",
    "covariance_path",
    "gamma_R",
    "gamma_E",
    "gamma_C",
    "gamma_F",
    "filter_path",
]

REGIMES = ("R", "E", "C", "F")


@dataclass(eq=False)
class CovariancePath:
    """Trajectory of the conditional covariance ``gamma^H_t``.

    Attributes
    ----------
    grid : ndarray, shape (n,)
    values : ndarray, shape (n, d, d)
        Right-continuous values (post-update at information dates).
    regime : str
    date_index : ndarray of int, shape (N,)
        Grid index of each information date where an update was applied.
    left_values : ndarray, shape (N, d, d)
        ``gamma_{t_k-}`` before each update.
    update_weights : ndarray, shape (N, d, d)
        ``Lambda_k = Gamma_k (gamma_{t_k-} + Gamma_k)^{-1}``.
    breaks : ndarray of int
        Grid indices of the breakpoints (0, dates, T) that delimit the
        smooth pieces of the path.
    """

    grid: np.ndarray
    values: np.ndarray
    regime: str
    date_index: np.ndarray
    left_values: np.ndarray
    update_weights: np.ndarray
    breaks: np.ndarray

    @property
    def left_limits(self):
        """Mapping ``t_k -> gamma_{t_k-}``."""
        return {float(self.grid[i]): self.left_values[k] for k, i in enumerate(self.date_index)}

    def at(self, t, side="right"):
        """Value at a grid time ``t``; ``side="left"`` gives the left limit."""
        i = int(np.searchsorted(self.grid, t))
        if i >= self.grid.size or not math.isclose(self.grid[i], t, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"t={t} is not a grid point")
        if side == "left":
            hit = np.flatnonzero(self.date_index == i)
            if hit.size:
                return self.left_values[hit[0]]
        return self.values[i]

    def segments(self):
        """Smooth pieces between breakpoints.

        Yields
        ------
        t : ndarray
            Grid times of the piece, both endpoints included.
        vals : ndarray
            Values on the piece; the right endpoint holds the left limit
            when it is an information date.
        """
        lookup = {int(i): k for k, i in enumerate(self.date_index)}
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            vals = self.values[a:b + 1].copy()
            if int(b) in lookup:
                vals[-1] = self.left_values[lookup[int(b)]]
            yield self.grid[a:b + 1], vals


@dataclass(eq=False)
class FilterPath:
    """Realization of the filter ``mu_hat^H`` along a simulated path.

    Attributes
    ----------
    grid : ndarray
    mu_hat : ndarray, shape (..., n, d)
        Right-continuous filter values.
    regime : str
    source : SimulationPath
    update_weights : ndarray, shape (N, d, d)
    left_limits : ndarray, shape (..., N, d)
        Filter values just before each update.
    """

    grid: np.ndarray
    mu_hat: np.ndarray
    regime: str
    source: object
    update_weights: np.ndarray
    left_limits: np.ndarray


def bayes_update(gamma_minus, Gamma):
    """Fuse a prior covariance with an expert opinion.

    Parameters
    ----------
    gamma_minus : ndarray, shape (d, d)
        Prior (pre-update) covariance, PSD.
    Gamma : ndarray, shape (d, d)
        Expert covariance, PD.

    Returns
    -------
    gamma_plus : ndarray
        ``Lambda gamma_minus = Gamma - Gamma (gamma_minus + Gamma)^{-1} Gamma``.
    Lambda : ndarray
        Weight on the prior mean, ``Gamma (gamma_minus + Gamma)^{-1}``.

    Examples
    --------
    >>> bayes_update(np.array([[0.2]]), np.array([[0.8]]))[0]
    array([[0.16]])
    """
    try:
        c = cho_factor(gamma_minus + Gamma)
    except LinAlgError:
        if not is_pd(Gamma):
            raise ConfigError("expert covariance must be positive definite", "Gamma") from None
        raise NumericError("prior plus expert covariance is not positive definite") from None
    Lam = cho_solve(c, Gamma).T
    gp = Lam @ gamma_minus
    return 0.5 * (gp + gp.T), Lam


def riccati_rhs(alpha, bbT, S, g):
    """``-alpha g - g alpha + bbT - g S g`` for symmetric ``alpha`` and ``g``."""
    A = alpha @ g
    return bbT - A - A.T - g @ S @ g


def rk4_step(alpha, bbT, S, g, h):
    """One classical Runge-Kutta step of the Riccati flow, symmetrized."""
    k1 = riccati_rhs(alpha, bbT, S, g)
    k2 = riccati_rhs(alpha, bbT, S, g + 0.5 * h * k1)
    k3 = riccati_rhs(alpha, bbT, S, g + 0.5 * h * k2)
    k4 = riccati_rhs(alpha, bbT, S, g + h * k3)
    out = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return 0.5 * (out + out.T)


class _RiccatiPropagator:
    """Fixed-step RK4 integration with symmetrization and PSD clipping."""

    def __init__(self, model, max_step, quadratic=True):
        self.alpha = np.asarray(model.alpha)
        self.bbT = model.bbT
        self.S = model.S if quadratic else np.zeros_like(model.S)
        self.max_step = max_step

    def __call__(self, g, h):
        n = max(1, int(math.ceil(h / self.max_step - 1e-9)))
        hs = h / n
        alpha, bbT, S = self.alpha, self.bbT, self.S
        for _ in range(n):
            g = rk4_step(alpha, bbT, S, g, hs)
            if not np.all(np.isfinite(g)):
                raise NumericError(
                    f"Riccati integration diverged; retry with a step below {hs / 4:.3g}")
            w0 = np.linalg.eigvalsh(g)[0]
            if w0 < 0.0:
                try:
                    g = psd_clip(g)
                except NotPSDError:
                    raise NumericError(
                        f"Riccati integration lost positivity; retry with a step below {hs / 4:.3g}"
                    ) from None
        return g


class _LyapunovPropagator:
    """Exact propagation ``e^{-alpha h} g e^{-alpha h} + Q(h)``."""

    def __init__(self, model):
        self.cache = _StepCache(model)

    def __call__(self, g, h):
        E, Q = self.cache(h)
        out = E @ g @ E + Q
        return 0.5 * (out + out.T)


def _default_rk_step(grid, breaks):
    pieces = np.diff(np.asarray(grid)[breaks])
    return float(min(np.min(np.diff(grid)), np.min(pieces) / 200.0))


def _resolve_grid(model, schedule, grid, grid_step):
    dates = schedule.dates if schedule is not None else np.zeros(0)
    if grid is None:
        step = grid_step if grid_step is not None else model.T / 1000.0
        return make_grid(model.T, dates, step)
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must start at 0 and increase strictly", "grid")
    idx = date_indices(grid, dates)
    breaks = np.unique(np.concatenate([[0], idx, [grid.size - 1]])).astype(int)
    return grid, breaks


def covariance_path(model, schedule=None, regime="C", grid=None, grid_step=None, rk_step=None):
    """Conditional covariance path for one information regime.

    Parameters
    ----------
    model : MarketModel
    schedule : ExpertSchedule, optional
        Ignored for regimes ``R`` and ``F``.  ``None`` means no experts.
    regime : {"R", "E", "C", "F"}
    grid : array_like, optional
        Time grid starting at 0 and containing every information date.
    grid_step : float, optional
        Step used to build a grid when ``grid`` is not given
        (default ``T / 1000``).
    rk_step : float, optional
        Maximal Runge-Kutta step for regimes R and C.  Defaults to the
        smaller of the grid step and 1/200 of the shortest inter-date
        interval.

    Returns
    -------
    CovariancePath

    Notes
    -----
    The update at ``t_0 = 0`` is applied to the prior ``gamma_{0-} = Sigma0``,
    so the value stored at ``t = 0`` is the post-update covariance.
    """
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}", "regime")
    if schedule is None or regime in ("R", "F"):
        schedule = ExpertSchedule.empty(model.d)
    schedule.check_model(model)
    grid, breaks = _resolve_grid(model, schedule, grid, grid_step)
    d, n = model.d, grid.size
    didx = date_indices(grid, schedule.dates)
    values = np.zeros((n, d, d))
    left = np.zeros((schedule.N, d, d))
    weights = np.zeros((schedule.N, d, d))
    if regime == "F":
        return CovariancePath(grid, values, regime, didx, left, weights, breaks)

    if regime == "E":
        prop = _LyapunovPropagator(model)
    else:
        if rk_step is None:
            rk_step = _default_rk_step(grid, breaks)
        prop = _RiccatiPropagator(model, rk_step)

    update_at = {int(i): k for k, i in enumerate(didx)}
    g = np.array(model.Sigma0)
    for i in range(n):
        if i:
            g = prop(g, grid[i] - grid[i - 1])
        k = update_at.get(i)
        if k is not None:
            left[k] = g
            g, weights[k] = bayes_update(g, schedule.gammas[k])
        values[i] = g
    return CovariancePath(grid, values, regime, didx, left, weights, breaks)


def gamma_R(model, grid=None, grid_step=None, rk_step=None):
    """Covariance of the return-only filter (Riccati flow from ``Sigma0``)."""
    return covariance_path(model, None, "R", grid, grid_step, rk_step)


def gamma_E(model, schedule, grid=None, grid_step=None):
    """Covariance of the expert-only filter."""
    return covariance_path(model, schedule, "E", grid, grid_step)


def gamma_C(model, schedule, grid=None, grid_step=None, rk_step=None):
    """Covariance of the combined filter."""
    return covariance_path(model, schedule, "C", grid, grid_step, rk_step)


def gamma_F(model, grid=None, grid_step=None):
    """Zero covariance of the fully informed investor."""
    return covariance_path(model, None, "F", grid, grid_step)


def filter_path(model, schedule, path, regime, cov=None):
    """Run the filter for one regime along simulated paths.

    Regimes R and C integrate the filter SDE
    ``dmu_hat = alpha (delta - mu_hat) dt + gamma S (dR - mu_hat dt)`` by
    Euler-Maruyama on the path grid, driven by the simulated return
    increments.  Regime E propagates the conditional mean in closed form.
    At each information date ``mu_hat = Lambda mu_hat_- + (I - Lambda) Z``.

    Parameters
    ----------
    model : MarketModel
    schedule : ExpertSchedule
    path : SimulationPath
        Single path or batch; batches are processed in a vectorized way.
    regime : {"R", "E", "C", "F"}
    cov : CovariancePath, optional
        Precomputed covariance path on ``path.grid``.

    Returns
    -------
    FilterPath
    """
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}", "regime")
    grid = path.grid
    mu = path.mu
    batch = mu.shape[:-2]
    d = model.d
    if regime == "F":
        return FilterPath(grid, mu.copy(), regime, path, np.zeros((0, d, d)),
                          np.zeros(batch + (0, d)))
    sched = schedule if regime in ("E", "C") else None
    if cov is None:
        cov = covariance_path(model, sched, regime, grid=grid)
    if cov.grid.shape != grid.shape or np.any(cov.grid != grid):
        raise ConfigError("covariance path grid does not match the simulation grid", "grid")
    if regime in ("E", "C") and not np.array_equal(cov.date_index, path.date_index):
        raise ConfigError("information dates of path and covariance differ", "schedule")

    n = grid.size
    steps = np.diff(grid)
    update_at = {int(i): k for k, i in enumerate(cov.date_index)}
    N = cov.date_index.size
    out = np.empty(batch + (n, d))
    left = np.empty(batch + (N, d))
    eye = np.eye(d)
    delta = model.delta
    alpha = np.asarray(model.alpha)
    S = model.S
    cache = _StepCache(model) if regime == "E" else None

    m = np.broadcast_to(model.m0, batch + (d,)).copy()
    for i in range(n):
        if i:
            h = steps[i - 1]
            if regime == "E":
                E, _ = cache(h)
                m = delta + (m - delta) @ E
            else:
                gain = S @ cov.values[i - 1]
                m = m + ((delta - m) @ alpha) * h + (path.dR[..., i - 1, :] - m * h) @ gain
        k = update_at.get(i)
        if k is not None:
            left[..., k, :] = m
            Lam = cov.update_weights[k]
            m = m @ Lam.T + path.Z[..., k, :] @ (eye - Lam).T
        out[..., i, :] = m
    return FilterPath(grid, out, regime, path, cov.update_weights, left)
