"""Model fixtures and random configuration generators for the tests."""

import numpy as np

from driftfilter.model import ExpertSchedule, MarketModel

EX6 = dict(
    alpha=[[2, 1, -1], [1, 2, -1], [-1, -1, 2]],
    beta=[[0.3, 0.5, 0.1], [0.5, 0.2, 0.2], [0.1, 0.2, 0.2]],
    sigma=[[0.30, 0.08, 0.05], [0.08, 0.40, 0.05], [0.05, 0.05, 0.35]],
    delta=[0.05, 0.10, 0.08],
    Sigma0=[[0.2, 0.1, 0.1], [0.1, 0.3, 0.1], [0.1, 0.1, 0.2]],
)
GAMMA6 = np.array([[0.80, 0.32, 0.16], [0.32, 0.72, 0.24], [0.16, 0.24, 0.64]])

EX31 = dict(
    alpha=[[0.11, -0.48, 0.65], [-0.48, 2.28, -3.06], [0.65, -3.06, 4.18]],
    beta=[[0.87, -0.53, -0.22], [-0.53, 0.87, -0.02], [-0.22, -0.02, 0.29]],
    sigma=[[0.09, -0.13, 0.16], [0.14, 0.03, -0.17], [0.05, -0.13, -0.06]],
    delta=[0.0, 0.0, 0.0],
    Sigma0=[[0.16, 0.12, 0.01], [0.12, 0.19, -0.04], [0.01, -0.04, 0.27]],
)
GAMMA31 = np.array([[1.14, 0.15, 0.58], [0.15, 1.67, -0.73], [0.58, -0.73, 2.67]])


def ex6_model(**kw):
    return MarketModel(**{**EX6, **kw})


def ex31_model(**kw):
    return MarketModel(**{**EX31, **kw})


def random_spd(rng, d, lo=0.1, hi=2.0):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return q @ np.diag(rng.uniform(lo, hi, d)) @ q.T


def random_model(rng, d=None, T=1.0):
    """A random model satisfying the standing assumptions."""
    if d is None:
        d = int(rng.integers(1, 5))
    alpha = random_spd(rng, d, 0.2, 3.0)
    beta = rng.normal(scale=0.5, size=(d, d)) + 0.3 * np.eye(d)
    while np.linalg.eigvalsh(beta @ beta.T)[0] < 1e-3:
        beta = rng.normal(scale=0.5, size=(d, d)) + 0.3 * np.eye(d)
    sigma = rng.normal(scale=0.15, size=(d, d)) + 0.3 * np.eye(d)
    while np.linalg.eigvalsh(sigma @ sigma.T)[0] < 0.01:
        sigma = rng.normal(scale=0.15, size=(d, d)) + 0.3 * np.eye(d)
    Sigma0 = random_spd(rng, d, 0.01, 0.5)
    delta = rng.normal(scale=0.1, size=d)
    m0 = delta + rng.normal(scale=0.05, size=d)
    return MarketModel(alpha, beta, delta, sigma, Sigma0, m0=m0, T=T)


def random_schedule(rng, model, N=None):
    if N is None:
        N = int(rng.integers(1, 13))
    return ExpertSchedule.equidistant(N, model.T, random_spd(rng, model.d, 0.05, 1.5))
