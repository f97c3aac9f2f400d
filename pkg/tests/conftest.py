import itertools

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from nanofilter.gauss_core import Gaussian
from nanofilter.models import DynamicalSystem


class GaussHermiteIntegrator:
    """Tensor-product Gauss-Hermite rule; exact for polynomials of degree < 2*order per axis."""

    def __init__(self, order: int = 8):
        nodes, weights = hermegauss(order)
        self.nodes = nodes
        self.weights = weights / weights.sum()

    def __call__(self, belief, fn):
        n = belief.dim
        grid = np.array(list(itertools.product(self.nodes, repeat=n)))
        w = np.prod(np.array(list(itertools.product(self.weights, repeat=n))), axis=1)
        pts = belief.mean + grid @ belief.chol.T
        vals = np.asarray(fn(pts), dtype=float)
        return np.tensordot(w, vals, axes=1)


@pytest.fixture
def exact_integrator():
    return GaussHermiteIntegrator()


def random_spd(rng, n, scale=1.0, floor=0.2):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T / n + floor * np.eye(n))


def linear_system(A, H, Q, R, b=None):
    A = np.atleast_2d(A)
    H = np.atleast_2d(H)
    b = np.zeros(H.shape[0]) if b is None else np.asarray(b, float)
    return DynamicalSystem(
        name="linear",
        n=A.shape[0],
        m=H.shape[0],
        l=1,
        f=lambda x, u, t: np.asarray(x) @ A.T,
        g=lambda x: np.asarray(x) @ H.T + b,
        Q=np.atleast_2d(Q),
        R=np.atleast_2d(R),
        f_jac=lambda x, u, t: A,
        g_jac=lambda x: H,
        g_hess=lambda x: np.zeros((H.shape[0], A.shape[0], A.shape[0])),
    )


def kalman_posterior(prior: Gaussian, H, R, y, b=None):
    """Closed-form oracle via explicit inverses (independent of the library's Joseph form)."""
    H = np.atleast_2d(H)
    b = np.zeros(H.shape[0]) if b is None else b
    info = np.linalg.inv(prior.cov) + H.T @ np.linalg.inv(R) @ H
    cov = np.linalg.inv(info)
    mean = cov @ (np.linalg.inv(prior.cov) @ prior.mean + H.T @ np.linalg.inv(R) @ (y - b))
    return mean, cov
