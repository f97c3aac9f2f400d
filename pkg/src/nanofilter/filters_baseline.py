"""EKF, UKF, IEKF and PLF single-step recursions.

Each ``*_step`` performs one prediction through ``sys.f`` followed by one
measurement update with ``y``. ``t`` is the time index of ``belief`` (the
transition maps x_t to x_{t+1}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gauss_core import Gaussian, NotPositiveDefiniteError, cholesky, kl_divergence, symmetrize_psd
from .models import DynamicalSystem
from .unscented import SigmaPointRule, sigma_points, unscented_transform

DEFAULT_MAX_ITER = 10
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class FilterStep:
    prior: Gaussian
    posterior: Gaussian
    iterations: int
    innovation: np.ndarray
    fallback: bool = False


def _gaussian(mean, cov) -> Gaussian:
    cov, _ = symmetrize_psd(cov)
    return Gaussian(mean, cov)


def kalman_update(prior: Gaussian, H: np.ndarray, y_pred: np.ndarray, y: np.ndarray, R: np.ndarray):
    """Linear-Gaussian update with predicted measurement ``y_pred`` and Joseph-form covariance.

    Returns (posterior mean, posterior covariance, gain).
    """
    P = prior.cov
    PHt = P @ H.T
    S = H @ PHt + R
    try:
        chol = cholesky(0.5 * (S + S.T))
    except NotPositiveDefiniteError:
        raise NotPositiveDefiniteError("innovation covariance is not positive definite") from None
    K = linalg.cho_solve((chol, True), PHt.T).T
    mean = prior.mean + K @ (y - y_pred)
    IKH = np.eye(prior.dim) - K @ H
    cov = IKH @ P @ IKH.T + K @ R @ K.T
    return mean, cov, K


def ekf_predict(belief: Gaussian, u, sys: DynamicalSystem, t: int = 0) -> Gaussian:
    F = sys.jac_f(belief.mean, u, t)
    mean = sys.f(belief.mean, u, t)
    return _gaussian(mean, F @ belief.cov @ F.T + sys.Q)


def ukf_predict(belief: Gaussian, u, sys: DynamicalSystem, rule: SigmaPointRule, t: int = 0) -> Gaussian:
    mean, cov = unscented_transform(belief, lambda x: sys.f(x, u, t), rule, vectorized=True)
    return _gaussian(mean, cov + sys.Q)


def ekf_update(prior: Gaussian, y, sys: DynamicalSystem) -> tuple[Gaussian, np.ndarray]:
    G = sys.jac_g(prior.mean)
    y_pred = sys.g(prior.mean)
    mean, cov, _ = kalman_update(prior, G, y_pred, y, sys.R)
    return _gaussian(mean, cov), y - y_pred


def ekf_step(belief: Gaussian, u, y, sys: DynamicalSystem, t: int = 0) -> FilterStep:
    prior = ekf_predict(belief, u, sys, t)
    post, innov = ekf_update(prior, y, sys)
    return FilterStep(prior, post, 1, innov)


def _slr(belief: Gaussian, sys: DynamicalSystem, rule: SigmaPointRule):
    """Statistical linear regression of g w.r.t. ``belief``: returns (A, b, Omega, y_mean)."""
    sig = sigma_points(belief, rule)
    gy = np.asarray(sys.g(sig.points), dtype=float)
    if not np.all(np.isfinite(gy)):
        raise FloatingPointError("non-finite measurement prediction at a sigma point")
    y_mean = sig.mean_weights @ gy
    dx = sig.points - belief.mean
    dy = gy - y_mean
    Psi = (sig.cov_weights[:, None] * dx).T @ dy  # cross covariance, (n, m)
    Phi = (sig.cov_weights[:, None] * dy).T @ dy
    A = linalg.cho_solve((belief.chol, True), Psi, check_finite=False).T
    b = y_mean - A @ belief.mean
    Omega = Phi - A @ belief.cov @ A.T
    return A, b, 0.5 * (Omega + Omega.T), y_mean


def ukf_update(prior: Gaussian, y, sys: DynamicalSystem, rule: SigmaPointRule) -> tuple[Gaussian, np.ndarray]:
    # sigma-point update written as regression (A, b, Omega) so the Joseph form applies
    A, b, Omega, y_mean = _slr(prior, sys, rule)
    mean, cov, _ = kalman_update(prior, A, y_mean, y, sys.R + Omega)
    return _gaussian(mean, cov), y - y_mean


def ukf_step(belief: Gaussian, u, y, sys: DynamicalSystem, rule: SigmaPointRule | None = None, t: int = 0) -> FilterStep:
    rule = rule or SigmaPointRule.van_der_merwe()
    prior = ukf_predict(belief, u, sys, rule, t)
    post, innov = ukf_update(prior, y, sys, rule)
    return FilterStep(prior, post, 1, innov)


def iekf_update(prior: Gaussian, y, sys: DynamicalSystem, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL):
    """Gauss-Newton iterated update; returns (posterior, iterations, innovation)."""
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    x_prior = prior.mean
    x = x_prior.copy()
    y_at_prior = sys.g(x_prior)
    for j in range(1, max_iter + 1):
        G = sys.jac_g(x)
        # linearize g about x: g(z) ~ g(x) + G (z - x)
        y_pred = sys.g(x) + G @ (x_prior - x)
        x_new, cov, _ = kalman_update(prior, G, y_pred, y, sys.R)
        if not np.all(np.isfinite(x_new)):
            raise FloatingPointError("non-finite IEKF iterate")
        done = np.linalg.norm(x_new - x) < tol
        x = x_new
        if done:
            break
    return _gaussian(x, cov), j, y - y_at_prior


def iekf_step(
    belief: Gaussian, u, y, sys: DynamicalSystem, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL, t: int = 0
) -> FilterStep:
    prior = ekf_predict(belief, u, sys, t)
    post, iters, innov = iekf_update(prior, y, sys, max_iter, tol)
    return FilterStep(prior, post, iters, innov)


def plf_update(
    prior: Gaussian,
    y,
    sys: DynamicalSystem,
    rule: SigmaPointRule | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
):
    """Iterated posterior linearization; returns (posterior, iterations, innovation)."""
    rule = rule or SigmaPointRule.van_der_merwe()
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    current = prior
    innov = None
    for j in range(1, max_iter + 1):
        A, b, Omega, y_mean = _slr(current, sys, rule)
        if innov is None:
            innov = y - y_mean
        mean, cov, _ = kalman_update(prior, A, A @ prior.mean + b, y, sys.R + Omega)
        nxt = _gaussian(mean, cov)
        done = j > 1 and kl_divergence(current, nxt) < tol
        current = nxt
        if done:
            break
    return current, j, innov


def plf_step(
    belief: Gaussian,
    u,
    y,
    sys: DynamicalSystem,
    rule: SigmaPointRule | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    t: int = 0,
) -> FilterStep:
    rule = rule or SigmaPointRule.van_der_merwe()
    prior = ukf_predict(belief, u, sys, rule, t)
    post, iters, innov = plf_update(prior, y, sys, rule, max_iter, tol)
    return FilterStep(prior, post, iters, innov)
