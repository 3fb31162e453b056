"""Long-run behavior of the conditional covariance.

Covers the decay of the covariance as the number of equidistant experts
grows, limit cycles of the covariance under equidistant experts with a
constant covariance ``Gamma``, diagnostics of monotonicity and of the
trace within the limiting period, and the construction of expert
covariances that make the covariance exactly periodic.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError, ConvergenceError
from .filters import _LyapunovPropagator, _RiccatiPropagator, bayes_update, covariance_path, riccati_rhs
from .matops import as_sym, is_pd, loewner_leq, min_eig, spectral_norm
from .model import ExpertSchedule, make_grid

__all__ = [
    "DecaySeries",
    "LimitCycle",
    "PeriodicConstruction",
    "MonotonicityReport",
    "propagator",
    "decay_experiment",
    "limit_cycle",
    "periodic_construction",
    "build_periodic_gamma",
    "periodicity_defect",
    "monotonicity_report",
    "trace_envelope",
]


def propagator(model, regime, rk_step):
    """Return ``f(g, h)`` propagating a covariance over ``h`` without updates.

    Regime ``"E"`` uses the exact Lyapunov propagation, ``"C"`` and ``"R"``
    the RK4 Riccati integrator with steps no longer than ``rk_step``.
    """
    if regime == "E":
        return _LyapunovPropagator(model)
    if regime in ("C", "R"):
        return _RiccatiPropagator(model, rk_step)
    raise ConfigError(f"regime must be E or C, got {regime!r}", "regime")


@dataclass(eq=False)
class DecaySeries:
    """Norms of the covariance at time ``u`` for growing expert counts.

    Attributes
    ----------
    Ns : list of int
    u : float
    norms_E, norms_C : ndarray
        ``||gamma_u^{E,N}||`` and ``||gamma_u^{C,N}||``.
    bound_C : float
        Uniform bound ``||Gamma||`` on the expert covariances.
    reference : float
        ``||Sigma0||``, for relative thresholds.
    """

    Ns: list
    u: float
    norms_E: np.ndarray
    norms_C: np.ndarray
    bound_C: float
    reference: float

    @property
    def strictly_decreasing(self):
        """Whether both sequences decrease strictly in ``N``."""
        return bool(np.all(np.diff(self.norms_E) < 0) and np.all(np.diff(self.norms_C) < 0))

    def below(self, fraction):
        """Whether both final norms are below ``fraction * ||Sigma0||``."""
        lim = fraction * self.reference
        return bool(self.norms_E[-1] < lim and self.norms_C[-1] < lim)

    def rows(self):
        return [(n, e, c) for n, e, c in zip(self.Ns, self.norms_E, self.norms_C)]


def decay_experiment(model, u, Ns, Gamma, steps_per_interval=50, rk_step=None):
    """Covariance norms at time ``u`` with ``N`` equidistant experts on ``[0, T]``.

    Experts arrive at ``t_k = k T / N`` with covariance ``Gamma``.

    Parameters
    ----------
    model : MarketModel
    u : float
        Evaluation time in ``(0, T]``.
    Ns : sequence of int
        Increasing expert counts.
    Gamma : array_like
        Expert covariance.
    steps_per_interval : int
        Grid points per inter-date interval.
    rk_step : float, optional
        Runge-Kutta step for the combined regime; see
        :func:`driftfilter.filters.covariance_path`.
    """
    if not 0 < u <= model.T:
        raise ConfigError("evaluation time must lie in (0, T]", "params.u")
    Ns = [int(n) for n in Ns]
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigError("expert counts must be increasing", "params.Ns")
    Gamma = as_sym(Gamma)
    sub = model.replace(T=u)
    nE, nC = [], []
    for N in Ns:
        sched = ExpertSchedule.equidistant(N, model.T, Gamma)
        keep = sched.dates < u
        sched = ExpertSchedule(sched.dates[keep], sched.gammas[keep])
        step = model.T / max(N, 1) / steps_per_interval
        grid, _ = make_grid(u, sched.dates, step)
        nE.append(spectral_norm(covariance_path(sub, sched, "E", grid).values[-1]))
        nC.append(spectral_norm(covariance_path(sub, sched, "C", grid, rk_step=rk_step).values[-1]))
    return DecaySeries(Ns, float(u), np.array(nE), np.array(nC), spectral_norm(Gamma),
                       spectral_norm(model.Sigma0))


@dataclass(eq=False)
class LimitCycle:
    """Asymptotic one-period covariance trajectory under equidistant experts.

    Attributes
    ----------
    regime : str
    Delta : float
    Gamma : ndarray
    L : ndarray
        Limit of the post-update covariances.
    U : ndarray
        Limit of the pre-update covariances.
    h : ndarray
        Sample offsets in ``[0, Delta]``.
    cycle : ndarray, shape (len(h), d, d)
        ``G_h``, the propagation of ``L`` over ``h``; the last sample is the
        left limit at the next date.
    converged : bool
    iterations : int
    comparable : bool
        Whether ``gamma_{t_0-}`` and ``gamma_{t_1-}`` were Loewner
        comparable, the condition under which convergence is monotone.
    model : MarketModel
    rk_step : float
    """

    regime: str
    Delta: float
    Gamma: np.ndarray
    L: np.ndarray
    U: np.ndarray
    h: np.ndarray
    cycle: np.ndarray
    converged: bool
    iterations: int
    comparable: bool
    model: object = field(repr=False, default=None)
    rk_step: float = None

    def profile(self):
        """Rows ``(h, ||G_h||, tr G_h)``."""
        return [(float(h), spectral_norm(g), float(np.trace(g))) for h, g in zip(self.h, self.cycle)]


def _sample_period(prop, L, Delta, samples):
    h = np.linspace(0.0, Delta, samples)
    out = np.empty((samples,) + L.shape)
    g = L
    out[0] = g
    for i in range(1, samples):
        g = prop(g, h[i] - h[i - 1])
        out[i] = g
    return h, out


def limit_cycle(model, regime, Delta, Gamma, tol=1e-11, max_cycles=200000, samples=201,
                rk_step=None):
    """Iterate the one-period map until the pre-update covariance settles.

    Starting from ``gamma_{0-} = Sigma0``, each period applies the expert
    update and then propagates over ``Delta``.  Iteration stops when two
    successive pre-update covariances differ by at most ``tol`` in spectral
    norm.  Convergence is also attempted when the first two pre-update
    covariances are not Loewner comparable; ``comparable`` records this.

    Parameters
    ----------
    model : MarketModel
    regime : {"E", "C"}
    Delta : float
        Spacing of the information dates.
    Gamma : array_like
        Constant expert covariance (PD).
    tol : float
    max_cycles : int
    samples : int
        Number of sample points of ``G_h`` on ``[0, Delta]``.
    rk_step : float, optional
        Runge-Kutta step for regime C (default ``Delta / 200``).

    Raises
    ------
    ConvergenceError
        If ``max_cycles`` periods do not reach ``tol``.
    """
    Gamma = as_sym(Gamma)
    if not is_pd(Gamma):
        raise ConfigError("must be positive definite", "Gamma")
    if not Delta > 0:
        raise ConfigError("spacing must be positive", "Delta")
    if rk_step is None:
        rk_step = Delta / 200.0
    prop = propagator(model, regime, rk_step)
    g = np.array(model.Sigma0)
    comparable = None
    for it in range(1, max_cycles + 1):
        nxt = prop(bayes_update(g, Gamma)[0], Delta)
        if comparable is None:
            comparable = loewner_leq(g, nxt, 1e-12) or loewner_leq(nxt, g, 1e-12)
        diff = spectral_norm(nxt - g)
        g = nxt
        if diff <= tol:
            break
    else:
        raise ConvergenceError(f"no limit cycle after {max_cycles} periods (last change {diff:.3e})")
    U = g
    L = bayes_update(U, Gamma)[0]
    h, cyc = _sample_period(prop, L, Delta, samples)
    return LimitCycle(regime, float(Delta), Gamma, L, U, h, cyc, True, it, bool(comparable),
                      model, rk_step)


@dataclass(eq=False)
class PeriodicConstruction:
    """Expert covariance making the covariance periodic, with its cycle ends.

    Attributes
    ----------
    Gamma : ndarray
        ``(L^{-1} - U^{-1})^{-1}``.
    L : ndarray
        Post-update covariance, equal to the model's ``Sigma0``.
    U : ndarray
        ``Sigma0`` propagated over one period without updates.
    """

    Gamma: np.ndarray
    L: np.ndarray
    U: np.ndarray
    regime: str
    Delta: float


def periodic_construction(model, regime, Delta, rk_step=None):
    """Build ``Gamma`` so that the updates return the covariance to ``Sigma0``.

    The no-update flow ``g~`` starts at ``L = Sigma0`` and reaches
    ``U = g~(Delta)``.  With ``Gamma = (L^{-1} - U^{-1})^{-1}`` the update of
    ``U`` gives back ``L``, so the pre-update covariances are constant and
    the covariance is periodic with period ``Delta``.  Regime E uses the
    exact Lyapunov flow, regime C the full Riccati flow.

    Raises
    ------
    ConfigError
        If ``L`` or ``U`` is singular or ``U - L`` is not positive definite.
    """
    if rk_step is None:
        rk_step = Delta / 200.0
    prop = propagator(model, regime, rk_step)
    L = np.array(model.Sigma0)
    U = prop(L, Delta)
    if not is_pd(L):
        raise ConfigError("Sigma0 must be positive definite for the construction", "model.Sigma0")
    if not is_pd(U):
        raise ConfigError("propagated covariance is singular", "model")
    gap = min_eig(U - L)
    if gap <= 0:
        raise ConfigError(
            f"flow over one period is not increasing: min eigenvalue of U - L is {gap:.3e}",
            "model.Sigma0")
    inv = np.linalg.inv
    Gamma = as_sym(inv(as_sym(inv(L) - inv(U))))
    return PeriodicConstruction(Gamma, L, U, regime, float(Delta))


def build_periodic_gamma(model, regime, Delta, rk_step=None):
    """Expert covariance from :func:`periodic_construction`."""
    return periodic_construction(model, regime, Delta, rk_step).Gamma


def periodicity_defect(model, regime, Delta, Gamma, start, periods=10, rk_step=None):
    """Largest change of the pre-update covariance over ``periods`` periods.

    Parameters
    ----------
    start : ndarray
        Pre-update covariance at the first date.
    """
    if rk_step is None:
        rk_step = Delta / 200.0
    prop = propagator(model, regime, rk_step)
    g = np.array(start)
    worst = 0.0
    for _ in range(periods):
        nxt = prop(bayes_update(g, Gamma)[0], Delta)
        worst = max(worst, spectral_norm(nxt - g))
        g = nxt
    return worst


@dataclass
class MonotonicityReport:
    """Diagnostics of ``||G_h||`` and ``tr G_h`` over the limiting period.

    Attributes
    ----------
    norm_start, norm_end, norm_min : float
        ``||L||``, ``||U||`` and the minimum over the period.
    trace_start, trace_end, trace_min, trace_max : float
    norm_dip : float
        ``||L|| - min_h ||G_h||`` (positive means the norm decreases below
        its post-update value).
    trace_dip : float
        ``tr L - min_h tr G_h``.
    norm_nondecreasing : bool
        Whether ``||G_h||`` is non-decreasing in ``h`` within ``1e-8``.
    trace_law : bool
        Whether ``min tr = tr L`` and ``max tr = tr U`` within ``tol``.
    initial_trace_slope : float
        Derivative of ``tr G_h`` at ``h = 0``.
    alpha_scalar, ssT_scalar, gamma_proportional : bool
        Special structures ``alpha = a I``, ``sigma sigma^T = s I`` and
        ``Gamma = c U``.
    predictions : dict
        Monotonicity properties implied by the structures that hold.
    """

    norm_start: float
    norm_end: float
    norm_min: float
    trace_start: float
    trace_end: float
    trace_min: float
    trace_max: float
    norm_dip: float
    trace_dip: float
    norm_nondecreasing: bool
    trace_law: bool
    initial_trace_slope: float
    alpha_scalar: bool
    ssT_scalar: bool
    gamma_proportional: bool
    predictions: dict

    def to_dict(self):
        return dict(self.__dict__)


def _is_scalar_multiple(A, B, rtol=1e-9):
    """True if ``A = c B`` for some scalar ``c``."""
    c = np.trace(A) / np.trace(B)
    return bool(np.max(np.abs(A - c * B)) <= rtol * (1 + np.max(np.abs(A))))


def monotonicity_report(cycle, tol=1e-6):
    """Summarize monotonicity and trace behavior of a converged limit cycle."""
    if not cycle.converged:
        raise ConvergenceError("limit cycle has not converged")
    model = cycle.model
    norms = np.array([spectral_norm(g) for g in cycle.cycle])
    traces = np.trace(cycle.cycle, axis1=1, axis2=2)
    S = model.S if cycle.regime == "C" else np.zeros_like(model.S)
    slope = float(np.trace(riccati_rhs(model.alpha, model.bbT, S, cycle.L)))
    d = model.d
    alpha_scalar = _is_scalar_multiple(model.alpha, np.eye(d))
    ssT_scalar = _is_scalar_multiple(model.ssT, np.eye(d))
    gamma_prop = _is_scalar_multiple(cycle.Gamma, cycle.U)
    trace_law = bool(abs(traces.min() - np.trace(cycle.L)) <= tol
                     and abs(traces.max() - np.trace(cycle.U)) <= tol)
    predictions = {}
    if cycle.regime == "E":
        predictions["trace_law"] = True
        if alpha_scalar:
            predictions["norm_nondecreasing"] = True
    else:
        if ssT_scalar:
            predictions["trace_law"] = True
        if gamma_prop:
            predictions["loewner_nondecreasing"] = True
    return MonotonicityReport(
        norm_start=float(norms[0]), norm_end=float(norms[-1]), norm_min=float(norms.min()),
        trace_start=float(traces[0]), trace_end=float(traces[-1]),
        trace_min=float(traces.min()), trace_max=float(traces.max()),
        norm_dip=float(norms[0] - norms.min()), trace_dip=float(traces[0] - traces.min()),
        norm_nondecreasing=bool(np.all(np.diff(norms) >= -1e-8)),
        trace_law=trace_law, initial_trace_slope=slope,
        alpha_scalar=alpha_scalar, ssT_scalar=ssT_scalar, gamma_proportional=gamma_prop,
        predictions=predictions,
    )


def trace_envelope(path, t_from):
    """Minimum and maximum of ``tr gamma_t`` over ``t >= t_from``.

    Left limits at information dates inside the window are included, since
    the supremum of the trace is approached just before an update.
    """
    mask = path.grid >= t_from - 1e-12
    tr = list(np.trace(path.values[mask], axis1=1, axis2=2))
    for k, i in enumerate(path.date_index):
        if path.grid[i] > t_from + 1e-12:
            tr.append(np.trace(path.left_values[k]))
    return float(min(tr)), float(max(tr))
