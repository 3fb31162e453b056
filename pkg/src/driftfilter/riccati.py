"""Stationary analysis of the covariance flows.

Solves the algebraic Riccati equation
``-alpha g - g alpha + bbT - g S g = 0`` for the long-run covariance of the
return-only filter, checks stabilizability and detectability, and gives
the closed-form Lyapunov flow that governs the covariance between expert
dates when returns are not observed.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigError, ConvergenceError, NumericError
from .filters import riccati_rhs, rk4_step
from .matops import as_sym, min_eig, psd_clip, psd_sqrt, spectral_norm
from .model import noise_integral

__all__ = [
    "AreSolution",
    "are_residual",
    "is_stable",
    "is_stabilizable",
    "is_detectable",
    "model_stabilizable",
    "model_detectable",
    "newton_step",
    "solve_are",
    "lyapunov_flow",
    "lyapunov_fixed_point",
]


@dataclass
class AreSolution:
    """Result of :func:`solve_are`.

    Attributes
    ----------
    gamma_inf : ndarray
        Stabilizing PSD solution.
    residual_norm : float
        Spectral norm of the Riccati residual at ``gamma_inf``.
    iterations : int
        Runge-Kutta steps plus Newton corrections, summed over both starts.
    method : str
    uniqueness_gap : float
        Spectral-norm distance between the limits reached from ``Sigma0``
        and from the zero matrix.
    """

    gamma_inf: np.ndarray
    residual_norm: float
    iterations: int
    method: str
    uniqueness_gap: float

    def to_dict(self):
        return {
            "gamma_inf": self.gamma_inf.tolist(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "method": self.method,
            "uniqueness_gap": self.uniqueness_gap,
        }


def are_residual(model, g):
    """Spectral norm of ``-alpha g - g alpha + bbT - g S g``."""
    return spectral_norm(riccati_rhs(model.alpha, model.bbT, model.S, g))


def is_stable(A, tol=0.0):
    """True if every eigenvalue of ``A`` has real part below ``-tol``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return bool(np.max(np.linalg.eigvals(A).real) < -tol)


def _pbh_rank(M, tol=None):
    return np.linalg.matrix_rank(M, tol=tol)


def is_stabilizable(A, B, K=None):
    """Stabilizability of the pair ``(A, B)``.

    Parameters
    ----------
    A : ndarray, shape (n, n)
    B : ndarray, shape (n, k)
    K : ndarray, shape (k, n), optional
        Feedback witness.  When given, the pair is declared stabilizable
        iff ``A + B K`` is stable.  Otherwise the Popov-Belevitch-Hautus
        rank test ``rank [A - lambda I, B] = n`` is applied to every
        eigenvalue ``lambda`` with nonnegative real part.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError("shape mismatch between A and B")
    if K is not None:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape != (B.shape[1], n):
            raise ValueError("witness has the wrong shape")
        return is_stable(A + B @ K)
    for lam in np.linalg.eigvals(A):
        if lam.real >= 0 and _pbh_rank(np.hstack([A - lam * np.eye(n), B])) < n:
            return False
    return True


def is_detectable(C, A, L=None):
    """Detectability of the pair ``(C, A)``, the dual of stabilizability.

    With an observer witness ``L`` the test is whether ``A + L C`` is
    stable.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if C.shape[1] != A.shape[0]:
        raise ValueError("shape mismatch between C and A")
    return is_stabilizable(A.T, C.T, None if L is None else np.atleast_2d(L).T)


def model_stabilizable(model):
    """Stabilizability of ``(-alpha, tau)`` with ``tau = S^{1/2}``.

    The feedback ``K = -I`` gives ``-(alpha + tau)``, which is stable when
    ``alpha`` is positive definite.
    """
    tau = psd_sqrt(model.S)
    return is_stabilizable(-model.alpha, tau, -np.eye(model.d))


def model_detectable(model):
    """Detectability of ``(beta^T, -alpha)`` via the witness ``-(bbT + alpha)``."""
    return is_detectable(model.beta.T, -model.alpha, -model.beta)


def newton_step(model, g):
    """One Newton correction for the algebraic Riccati equation.

    Solves ``A X + X A^T = F(g)`` with ``A = alpha + g S`` through the
    Kronecker form of the Lyapunov operator and returns ``g + X``.
    """
    d = model.d
    F = riccati_rhs(model.alpha, model.bbT, model.S, g)
    A = model.alpha + g @ model.S
    eye = np.eye(d)
    K = np.kron(A, eye) + np.kron(eye, A)
    try:
        X = np.linalg.solve(K, F.ravel()).reshape(d, d)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular Lyapunov operator in Newton step: {exc}") from None
    out = g + X
    return 0.5 * (out + out.T)


def _flow_to_rest(model, g, tol, max_time):
    """Integrate the Riccati flow until ``||dg/dt|| <= tol`` or ``max_time``."""
    lam = min_eig(model.alpha)
    target = tol * lam
    t = 0.0
    steps = 0
    alpha, bbT, S = model.alpha, model.bbT, model.S
    # time scale of the quadratic term near its equilibrium
    quad = 2.0 * math.sqrt(spectral_norm(bbT) * spectral_norm(S))
    while True:
        F = riccati_rhs(alpha, bbT, S, g)
        if spectral_norm(F) <= target:
            return g, steps, True
        if t >= max_time:
            return g, steps, False
        rate = 2.0 * np.linalg.norm(alpha + g @ S, 2) + quad + 1e-12
        h = min(0.5 / rate, max_time - t, 1.0)
        g = rk4_step(alpha, bbT, S, g, h)
        if not np.all(np.isfinite(g)):
            raise NumericError("Riccati flow diverged")
        try:
            g = psd_clip(g, eps=1e-8 * (1 + spectral_norm(g)))
        except NumericError:
            raise NumericError("Riccati flow lost positivity") from None
        t += h
        steps += 1


def solve_are(model, tol=1e-9, max_time=None, unique_tol=1e-7, max_newton=8):
    """Stabilizing PSD solution of the algebraic Riccati equation.

    The Riccati flow is integrated with RK4 from ``Sigma0`` and,
    independently, from the zero matrix until the time derivative is below
    ``tol * lambda_min(alpha)``.  Each limit is then polished by Newton
    corrections (usually one or two) while they keep reducing the
    residual, aiming three orders of magnitude below ``tol``.

    Parameters
    ----------
    model : MarketModel
        Must satisfy the standing assumptions (``alpha`` and ``bbT`` PD).
    tol : float
        Absolute tolerance on the spectral norm of the residual.
    max_time : float, optional
        Horizon for each flow integration.  Defaults to
        ``200 / lambda_min(alpha)``.
    unique_tol : float
        Maximal allowed distance between the two limits.

    Returns
    -------
    AreSolution

    Raises
    ------
    ConvergenceError
        If the residual stays above ``tol`` or the two starts disagree.
    """
    model.require_assumptions()
    if not (model_stabilizable(model) and model_detectable(model)):
        raise ConfigError("model is not stabilizable and detectable", "model")
    lam = min_eig(model.alpha)
    if max_time is None:
        max_time = 200.0 / lam
    limits = []
    total = 0
    for g0 in (np.array(model.Sigma0), np.zeros((model.d, model.d))):
        g, steps, _ = _flow_to_rest(model, g0, tol, max_time)
        total += steps
        res = are_residual(model, g)
        for _ in range(max_newton):
            if res <= 1e-3 * tol:
                break
            g_new = newton_step(model, g)
            res_new = are_residual(model, g_new)
            total += 1
            if not res_new < res:
                break
            g, res = g_new, res_new
        if res > tol:
            raise ConvergenceError(
                f"Riccati residual {res:.3e} above {tol:.1e} after t={max_time:.3g}")
        limits.append(g)
    gap = spectral_norm(limits[0] - limits[1])
    if gap > unique_tol:
        raise ConvergenceError(f"limits from two starts differ by {gap:.3e}")
    g = limits[0]
    if min_eig(g) < -1e-10 * (1 + spectral_norm(g)):
        raise NumericError("Riccati solution is not positive semidefinite")
    return AreSolution(g, are_residual(model, g), total, "rk4-flow+newton", gap)


def lyapunov_flow(model, gamma0, t):
    """Covariance flow without observations, ``e^{-alpha t} gamma0 e^{-alpha t} + Q(t)``."""
    E = model.expm_alpha(t)
    out = E @ as_sym(gamma0) @ E + noise_integral(model.alpha, model.bbT, t)
    return 0.5 * (out + out.T)


def lyapunov_fixed_point(model):
    """Solution of ``alpha X + X alpha = bbT`` for PD ``alpha``.

    Computed in the eigenbasis of ``alpha``:
    ``X~_ij = B~_ij / (lambda_i + lambda_j)``.
    """
    w, v = model.alpha_eig
    if w[0] <= 0:
        raise ConfigError("alpha must be positive definite", "model.alpha")
    bt = v.T @ model.bbT @ v
    out = v @ (bt / np.add.outer(w, w)) @ v.T
    return 0.5 * (out + out.T)
