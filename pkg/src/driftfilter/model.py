"""Market model with an Ornstein-Uhlenbeck drift, closed-form drift moments
and simulation of drift, return and expert-opinion paths.

The drift follows ``dmu = alpha (delta - mu) dt + beta dB`` and the returns
``dR = mu dt + sigma dW``.  Experts deliver ``Z_k = mu(t_k) + Gamma_k^{1/2} eps_k``
at deterministic dates ``t_k``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from .errors import ConfigError
from .matops import as_sym, is_pd, min_eig, psd_eps, psd_sqrt, spectral_norm

__all__ = [
    "InterestRate",
    "MarketModel",
    "ExpertSchedule",
    "SimulationPath",
    "RelativeView",
    "gauss_legendre_noise",
    "noise_integral",
    "drift_mean",
    "drift_cov",
    "drift_cov_path",
    "make_grid",
    "date_indices",
    "simulate_path",
    "simulate_paths",
    "relative_to_absolute",
]


@dataclass(frozen=True)
class InterestRate:
    """Deterministic short rate, constant or piecewise linear in time.

    Parameters
    ----------
    times : sequence of float
        Knots in increasing order.  A single knot means a constant rate.
    values : sequence of float
        Rate at each knot.  Outside the knots the rate is held flat.
    """

    times: tuple = (0.0,)
    values: tuple = (0.0,)

    def __post_init__(self):
        times = tuple(float(t) for t in np.atleast_1d(self.times))
        values = tuple(float(v) for v in np.atleast_1d(self.values))
        if len(times) != len(values) or not times:
            raise ConfigError("times and values must have equal, nonzero length", "model.r")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("knots must be strictly increasing", "model.r")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, r):
        return cls((0.0,), (float(r),))

    @property
    def is_constant(self):
        return len(set(self.values)) == 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.times) == 1:
            return np.full_like(t, self.values[0])
        return np.interp(t, self.times, self.values)

    def to_dict(self):
        if self.is_constant:
            return self.values[0]
        return {"times": list(self.times), "values": list(self.values)}


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Static parameters of the market.

    Parameters
    ----------
    alpha : array_like, shape (d, d)
        Symmetric mean-reversion matrix.
    beta : array_like, shape (d, d)
        Volatility of the drift.
    delta : array_like, shape (d,)
        Long-run mean of the drift.
    sigma : array_like, shape (d, m)
        Volatility of the returns.  ``sigma sigma^T`` must be positive definite.
    Sigma0 : array_like, shape (d, d)
        Covariance of the initial drift (PSD).
    m0 : array_like, shape (d,), optional
        Mean of the initial drift.  Defaults to ``delta``.
    r : float or InterestRate
        Short rate.
    T : float
        Investment horizon in years.

    Notes
    -----
    The constructor enforces shapes, symmetry of ``alpha``, positive
    definiteness of ``sigma sigma^T``, ``Sigma0 >= 0`` and ``T > 0``.  The
    stronger standing assumptions (``alpha`` and ``beta beta^T`` positive
    definite) are reported by :meth:`assumption_violations` and enforced
    by :meth:`require_assumptions`, so degenerate models such as
    ``beta = 0`` remain available for testing.
    """

    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    Sigma0: np.ndarray
    m0: np.ndarray = None
    r: InterestRate = field(default_factory=InterestRate)
    T: float = 1.0

    def __post_init__(self):
        def setf(name, value):
            object.__setattr__(self, name, value)

        try:
            alpha = as_sym(self.alpha, "alpha", atol=1e-10 * (1 + np.max(np.abs(self.alpha))))
        except ValueError as exc:
            raise ConfigError(str(exc), "model.alpha") from None
        d = alpha.shape[0]
        beta = np.atleast_2d(np.array(self.beta, dtype=float))
        if beta.shape != (d, d):
            raise ConfigError(f"must have shape ({d}, {d})", "model.beta")
        delta = np.array(self.delta, dtype=float).reshape(-1)
        if delta.shape != (d,):
            raise ConfigError(f"must have length {d}", "model.delta")
        sigma = np.atleast_2d(np.array(self.sigma, dtype=float))
        if sigma.shape[0] != d:
            raise ConfigError(f"must have {d} rows", "model.sigma")
        try:
            Sigma0 = as_sym(self.Sigma0, "Sigma0", atol=1e-10 * (1 + np.max(np.abs(self.Sigma0))))
        except ValueError as exc:
            raise ConfigError(str(exc), "model.Sigma0") from None
        if Sigma0.shape != (d, d):
            raise ConfigError(f"must have shape ({d}, {d})", "model.Sigma0")
        m0 = delta.copy() if self.m0 is None else np.array(self.m0, dtype=float).reshape(-1)
        if m0.shape != (d,):
            raise ConfigError(f"must have length {d}", "model.m0")
        r = self.r if isinstance(self.r, InterestRate) else InterestRate.constant(self.r)
        if not (np.isfinite(self.T) and self.T > 0):
            raise ConfigError("horizon must be positive", "model.T")
        for name, arr in [("alpha", alpha), ("beta", beta), ("delta", delta),
                          ("sigma", sigma), ("Sigma0", Sigma0), ("m0", m0)]:
            if not np.all(np.isfinite(arr)):
                raise ConfigError("contains non-finite entries", f"model.{name}")
        if not is_pd(sigma @ sigma.T):
            raise ConfigError("sigma sigma^T must be positive definite", "model.sigma")
        if min_eig(Sigma0) < -psd_eps(Sigma0):
            raise ConfigError("must be positive semidefinite", "model.Sigma0")
        for name, arr in [("alpha", alpha), ("beta", beta), ("delta", delta),
                          ("sigma", sigma), ("Sigma0", Sigma0), ("m0", m0)]:
            arr.setflags(write=False)
            setf(name, arr)
        setf("r", r)
        setf("T", float(self.T))

    @property
    def d(self):
        """Number of stocks."""
        return self.alpha.shape[0]

    @property
    def m(self):
        """Dimension of the return Brownian motion."""
        return self.sigma.shape[1]

    @cached_property
    def bbT(self):
        """``beta beta^T``."""
        return as_sym(self.beta @ self.beta.T)

    @cached_property
    def ssT(self):
        """``sigma sigma^T``."""
        return as_sym(self.sigma @ self.sigma.T)

    @cached_property
    def S(self):
        """Precision of the return noise, ``(sigma sigma^T)^{-1}``."""
        return as_sym(np.linalg.solve(self.ssT, np.eye(self.d)))

    @cached_property
    def alpha_eig(self):
        """Eigenvalues and eigenvectors of ``alpha``."""
        return np.linalg.eigh(self.alpha)

    def expm_alpha(self, t):
        """``exp(-alpha t)``."""
        w, v = self.alpha_eig
        return (v * np.exp(-w * t)) @ v.T

    def assumption_violations(self):
        """List of ``(field, message)`` for violated standing assumptions."""
        out = []
        if not is_pd(self.alpha):
            out.append(("model.alpha", "must be symmetric positive definite"))
        if not is_pd(self.bbT):
            out.append(("model.beta", "beta beta^T must be positive definite"))
        return out

    def require_assumptions(self):
        """Raise :class:`ConfigError` unless ``alpha`` and ``beta beta^T`` are PD."""
        bad = self.assumption_violations()
        if bad:
            raise ConfigError(bad[0][1], bad[0][0])

    def replace(self, **changes):
        """Return a copy with some fields replaced."""
        kw = dict(alpha=self.alpha, beta=self.beta, delta=self.delta, sigma=self.sigma,
                  Sigma0=self.Sigma0, m0=self.m0, r=self.r, T=self.T)
        kw.update(changes)
        return MarketModel(**kw)


@dataclass(frozen=True, eq=False)
class ExpertSchedule:
    """Information dates and expert covariances.

    Attributes
    ----------
    dates : ndarray, shape (N,)
        Strictly increasing dates starting at 0.
    gammas : ndarray, shape (N, d, d)
        Positive definite expert covariances.
    """

    dates: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        dates = np.array(self.dates, dtype=float).reshape(-1)
        gammas = np.array(self.gammas, dtype=float)
        if dates.size == 0:
            d = gammas.shape[-1] if gammas.ndim == 3 else 0
            gammas = np.zeros((0, d, d))
        if gammas.ndim != 3 or gammas.shape[0] != dates.size or gammas.shape[1] != gammas.shape[2]:
            raise ConfigError("need one square covariance per date", "schedule.gammas")
        if dates.size:
            if dates[0] != 0.0:
                raise ConfigError("first information date must be 0", "schedule.dates")
            if np.any(np.diff(dates) <= 0):
                raise ConfigError("dates must be strictly increasing", "schedule.dates")
        for k in range(dates.size):
            try:
                g = as_sym(gammas[k], atol=1e-10 * (1 + np.max(np.abs(gammas[k]))))
            except ValueError:
                raise ConfigError("must be symmetric", f"schedule.gammas[{k}]") from None
            if not is_pd(g):
                raise ConfigError("must be positive definite", f"schedule.gammas[{k}]")
            gammas[k] = g
        dates.setflags(write=False)
        gammas.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "gammas", gammas)

    @classmethod
    def empty(cls, d):
        return cls(np.zeros(0), np.zeros((0, d, d)))

    @classmethod
    def equidistant(cls, N, T, Gamma):
        """``N`` experts at ``t_k = k T / N`` sharing covariance ``Gamma``."""
        Gamma = as_sym(Gamma)
        N = int(N)
        if N < 0:
            raise ConfigError("must be nonnegative", "schedule.N")
        dates = np.arange(N) * (T / N) if N else np.zeros(0)
        return cls(dates, np.broadcast_to(Gamma, (N,) + Gamma.shape).copy())

    @classmethod
    def spaced(cls, Delta, T, Gamma):
        """Experts at ``t_k = k Delta`` for all ``k Delta < T``."""
        if not Delta > 0:
            raise ConfigError("spacing must be positive", "schedule.Delta")
        Gamma = as_sym(Gamma)
        n = int(math.ceil(T / Delta - 1e-9))
        dates = np.arange(n) * Delta
        return cls(dates, np.broadcast_to(Gamma, (n,) + Gamma.shape).copy())

    @property
    def N(self):
        return self.dates.size

    def __len__(self):
        return self.dates.size

    def check_model(self, model):
        """Validate dimensions and dates against a model."""
        if self.N and self.gammas.shape[1] != model.d:
            raise ConfigError(f"expert covariances must be {model.d}x{model.d}", "schedule.gammas")
        if self.N and self.dates[-1] >= model.T:
            raise ConfigError("information dates must lie in [0, T)", "schedule.dates")


def _gl_panels(lam_sum, t, nodes, panels):
    """Composite Gauss-Legendre integral of ``exp(-lam_sum s)`` over [0, t]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, t, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return np.tensordot(ws, np.exp(-np.multiply.outer(s, lam_sum)), axes=1)


def gauss_legendre_noise(alpha, bbT, h, nodes=32):
    """Fixed-order Gauss-Legendre value of ``int_0^h e^{-alpha s} bbT e^{-alpha s} ds``.

    Used for the one-step transition covariance of the OU drift, where
    ``h`` is a short simulation step.
    """
    w, v = np.linalg.eigh(alpha)
    bt = v.T @ bbT @ v
    k = _gl_panels(np.add.outer(w, w), h, nodes, 1)
    out = v @ (bt * k) @ v.T
    return 0.5 * (out + out.T)


def noise_integral(alpha, bbT, t, nodes=64, rtol=1e-10, max_panels=4096):
    """Accumulated drift noise ``Q(t) = int_0^t e^{-alpha s} bbT e^{-alpha s} ds``.

    The integrand is evaluated in the eigenbasis of ``alpha``.  A composite
    Gauss-Legendre rule with ``nodes`` points per panel is refined by
    doubling the number of panels until two successive estimates agree to
    ``rtol`` relative.

    Parameters
    ----------
    alpha : ndarray, shape (d, d)
        Symmetric matrix.
    bbT : ndarray, shape (d, d)
        Symmetric PSD matrix.
    t : float
        Upper limit, ``t >= 0``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    d = alpha.shape[0]
    if t == 0:
        return np.zeros((d, d))
    w, v = np.linalg.eigh(alpha)
    bt = v.T @ bbT @ v
    lam = np.add.outer(w, w)
    panels = 1
    prev = _gl_panels(lam, t, nodes, panels)
    while True:
        panels *= 2
        cur = _gl_panels(lam, t, nodes, panels)
        scale = max(np.max(np.abs(cur)), np.finfo(float).tiny)
        if np.max(np.abs(cur - prev)) <= rtol * scale or panels >= max_panels:
            break
        prev = cur
    out = v @ (bt * cur) @ v.T
    return 0.5 * (out + out.T)


def drift_mean(model, t):
    """Unconditional mean ``m_t = delta + e^{-alpha t} (m0 - delta)``.

    ``t`` may be a scalar or an array; for an array the result has shape
    ``t.shape + (d,)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    w, v = model.alpha_eig
    c = v.T @ (model.m0 - model.delta)
    return model.delta + (np.exp(-np.multiply.outer(t, w)) * c) @ v.T


def drift_cov(model, t):
    """Unconditional covariance ``Sigma_t`` of the drift at a single time ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return model.Sigma0.copy()
    E = model.expm_alpha(t)
    out = E @ model.Sigma0 @ E + noise_integral(model.alpha, model.bbT, t)
    return 0.5 * (out + out.T)


class _StepCache:
    """Cache of ``(e^{-alpha h}, Q(h))`` keyed by the rounded step size."""

    def __init__(self, model, fixed_nodes=None):
        self.model = model
        self.fixed_nodes = fixed_nodes
        self._cache = {}

    def __call__(self, h):
        key = float(f"{h:.12e}")
        hit = self._cache.get(key)
        if hit is None:
            if self.fixed_nodes:
                Q = gauss_legendre_noise(self.model.alpha, self.model.bbT, key, self.fixed_nodes)
            else:
                Q = noise_integral(self.model.alpha, self.model.bbT, key)
            hit = (self.model.expm_alpha(key), Q)
            self._cache[key] = hit
        return hit


def drift_cov_path(model, grid):
    """``Sigma_t`` on a time grid starting at 0, by exact one-step propagation."""
    grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, model.d, model.d))
    cache = _StepCache(model)
    cur = drift_cov(model, grid[0])
    out[0] = cur
    for i, h in enumerate(np.diff(grid)):
        E, Q = cache(h)
        cur = E @ cur @ E + Q
        cur = 0.5 * (cur + cur.T)
        out[i + 1] = cur
    return out


def make_grid(T, dates=(), step=None, min_substeps=2, even=True):
    """Time grid on ``[0, T]`` containing every information date exactly.

    Each interval between consecutive breakpoints (dates, 0 and T) is cut
    into ``n = max(min_substeps, ceil(length / step))`` equal pieces,
    rounded up to an even count when ``even`` is set so that composite
    Simpson rules apply piecewise.

    Returns
    -------
    grid : ndarray
        Increasing time points.
    breaks : ndarray of int
        Grid indices of the breakpoints, in order.
    """
    if step is not None and not step > 0:
        raise ConfigError("grid step must be positive", "grid_step")
    dates = np.asarray(dates, dtype=float)
    if dates.size and (dates[0] < 0 or dates[-1] >= T):
        raise ConfigError("information date outside [0, T)", "schedule.dates")
    knots = np.unique(np.concatenate([[0.0], dates, [float(T)]]))
    pieces = [np.array([0.0])]
    breaks = [0]
    for a, b in zip(knots[:-1], knots[1:]):
        n = min_substeps if step is None else max(min_substeps, int(math.ceil((b - a) / step - 1e-9)))
        if even and n % 2:
            n += 1
        seg = np.linspace(a, b, n + 1)
        seg[-1] = b
        pieces.append(seg[1:])
        breaks.append(breaks[-1] + n)
    return np.concatenate(pieces), np.array(breaks)


def date_indices(grid, dates):
    """Indices of ``dates`` in ``grid``; raise if some date is not a grid point."""
    grid = np.asarray(grid)
    dates = np.asarray(dates, dtype=float)
    idx = np.searchsorted(grid, dates)
    ok = (idx < grid.size) & (grid[np.minimum(idx, grid.size - 1)] == dates)
    if not np.all(ok):
        raise ConfigError("information date is not a grid point", "grid")
    return idx


@dataclass(eq=False)
class SimulationPath:
    """Simulated drift, returns and expert views on a common grid.

    Arrays carry an optional leading path axis: ``mu`` has shape
    ``(n_grid, d)`` for one path or ``(M, n_grid, d)`` for a batch.

    Attributes
    ----------
    grid : ndarray, shape (n_grid,)
    mu : ndarray
        Drift at each grid point.
    dR : ndarray
        Return increments over each grid step.
    dW : ndarray
        Return Brownian increments over each grid step.
    date_index : ndarray of int
        Grid index of each information date.
    Z : ndarray
        Expert views, shape ``(..., N, d)``.
    seed : int or None
    """

    grid: np.ndarray
    mu: np.ndarray
    dR: np.ndarray
    dW: np.ndarray
    date_index: np.ndarray
    Z: np.ndarray
    seed: object = None

    @property
    def n_paths(self):
        return 1 if self.mu.ndim == 2 else self.mu.shape[0]

    def path(self, i):
        """Single path ``i`` of a batch."""
        if self.mu.ndim == 2:
            return self
        return SimulationPath(self.grid, self.mu[i], self.dR[i], self.dW[i],
                              self.date_index, self.Z[i], self.seed)


def simulate_paths(model, schedule, n_paths, grid_step=None, seed=None, grid=None):
    """Simulate a batch of independent paths.

    The drift uses the exact Gaussian OU transition over each grid step,
    with the step covariance from a 32-node Gauss-Legendre rule.  Returns
    use the Euler increment ``mu_t h + sigma (W_{t+h} - W_t)``.  Random
    numbers come from :func:`numpy.random.default_rng` seeded with
    ``seed``; the draw order is initial drift, drift noise, return noise,
    expert noise.

    Parameters
    ----------
    model : MarketModel
    schedule : ExpertSchedule
    n_paths : int
    grid_step : float, optional
        Target step; ignored when ``grid`` is given.
    seed : int, SeedSequence or None
    grid : array_like, optional
        Explicit grid which must contain every information date.
    """
    schedule.check_model(model)
    if grid is None:
        if grid_step is None:
            raise ConfigError("either grid or grid_step is required", "grid_step")
        grid, _ = make_grid(model.T, schedule.dates, grid_step, min_substeps=1, even=False)
    grid = np.asarray(grid, dtype=float)
    didx = date_indices(grid, schedule.dates)
    rng = np.random.default_rng(seed)
    d, m, M = model.d, model.m, int(n_paths)
    steps = np.diff(grid)
    n = steps.size

    xi0 = rng.standard_normal((M, d))
    xi_b = rng.standard_normal((M, n, d))
    xi_w = rng.standard_normal((M, n, m))
    eps = rng.standard_normal((M, schedule.N, d))

    mu = np.empty((M, n + 1, d))
    mu[:, 0] = model.m0 + xi0 @ psd_sqrt(model.Sigma0)
    cache = _StepCache(model, fixed_nodes=32)
    roots = {}
    for i, h in enumerate(steps):
        E, Q = cache(h)
        key = id(Q)
        if key not in roots:
            roots[key] = psd_sqrt(Q)
        mu[:, i + 1] = model.delta + (mu[:, i] - model.delta) @ E + xi_b[:, i] @ roots[key]
    dW = xi_w * np.sqrt(steps)[None, :, None]
    dR = mu[:, :-1] * steps[None, :, None] + dW @ model.sigma.T
    Z = np.empty((M, schedule.N, d))
    for k in range(schedule.N):
        Z[:, k] = mu[:, didx[k]] + eps[:, k] @ psd_sqrt(schedule.gammas[k])
    return SimulationPath(grid, mu, dR, dW, didx, Z, seed)


def simulate_path(model, schedule, grid_step=None, seed=None, grid=None):
    """Simulate one path; see :func:`simulate_paths`."""
    p = simulate_paths(model, schedule, 1, grid_step, seed, grid)
    return SimulationPath(p.grid, p.mu[0], p.dR[0], p.dW[0], p.date_index, p.Z[0], seed)


@dataclass
class RelativeView:
    """A relative expert view ``Q = P (mu + phi)`` with ``phi`` Gaussian.

    Attributes
    ----------
    P : ndarray, shape (l, d)
        Pick matrix of full row rank.
    Q : ndarray, shape (l,)
        View values.
    xi_cov : ndarray, shape (l, l)
        Covariance of the view noise ``xi = P phi``.
    phi_cov : ndarray, shape (d, d)
        Covariance of ``phi = P^T (P P^T)^{-1} xi``.  Singular when ``l < d``.
    absolute : ndarray, shape (d,)
        Minimum-norm point ``P^T (P P^T)^{-1} Q`` consistent with the view.
    """

    P: np.ndarray
    Q: np.ndarray
    xi_cov: np.ndarray
    phi_cov: np.ndarray
    absolute: np.ndarray

    @property
    def is_absolute(self):
        """True when the view can be fed to the filters (``P`` square)."""
        return self.P.shape[0] == self.P.shape[1]


def relative_to_absolute(P, Q, xi_cov):
    """Map a relative view onto drift space.

    Only absolute views (``P = I``) are consumed by the filters in this
    package; for square invertible ``P`` the equivalent absolute view has
    ``Z = P^{-1} Q`` and covariance ``phi_cov``.

    Raises
    ------
    ConfigError
        If ``P`` is rank deficient or shapes disagree.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_1d(np.asarray(Q, dtype=float))
    xi_cov = as_sym(xi_cov)
    l, d = P.shape
    if l > d or Q.shape != (l,) or xi_cov.shape != (l, l):
        raise ConfigError("inconsistent shapes for P, Q and view covariance", "views")
    if np.linalg.matrix_rank(P) < l:
        raise ConfigError("pick matrix must have full row rank", "views.P")
    K = P.T @ np.linalg.inv(P @ P.T)
    phi_cov = as_sym(K @ xi_cov @ K.T)
    return RelativeView(P, Q, xi_cov, phi_cov, K @ Q)
