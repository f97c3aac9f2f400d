"""Derivative-free natural-gradient Gaussian approximation (NANO) filter.

Prediction is a sigma-point moment match through the transition model. The
update minimizes E_q[L] + KL(q || prior) over Gaussians q by natural-gradient
steps, where the gradient and Hessian of the expected loss come from Stein's
lemma:

    E[grad L] = S E[(z - m) L],      E[hess L] = S E[(z - m)(z - m)^T L] S - E[L] S,

with S the precision of the current iterate N(m, P).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .filters_baseline import FilterStep, kalman_update, ukf_predict
from .gauss_core import Gaussian, NotPositiveDefiniteError, Precision, kl_divergence, symmetrize_psd
from .models import DynamicalSystem
from .unscented import Integrator, SigmaPointRule, UnscentedIntegrator


class StopCriterion(str, enum.Enum):
    COV_NORM = "cov_norm"
    GAUSSIAN_KL = "gaussian_kl"


class InitStrategy(str, enum.Enum):
    PRIOR = "prior"
    LAPLACE_EKF = "laplace_ekf"


class ResidualWeighting(str, enum.Enum):
    IDENTITY = "identity"
    INVERSE_R = "inverse_r"


class StopReason(str, enum.Enum):
    THRESHOLD = "threshold"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class NanoConfig:
    step_size: float = 1.0
    stop_criterion: StopCriterion = StopCriterion.GAUSSIAN_KL
    stop_threshold: float = 1e-8
    max_update_iters: int = 20
    predict_rule: SigmaPointRule = field(default_factory=SigmaPointRule.van_der_merwe)
    update_rule: SigmaPointRule = field(default_factory=SigmaPointRule.balanced)
    init_strategy: InitStrategy = InitStrategy.LAPLACE_EKF
    residual_weighting: ResidualWeighting = ResidualWeighting.INVERSE_R
    jitter_max: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError("step_size must lie in (0, 1]")
        if self.stop_threshold <= 0:
            raise ValueError("stop_threshold must be positive")
        if self.max_update_iters < 1:
            raise ValueError("max_update_iters must be at least 1")
        object.__setattr__(self, "stop_criterion", StopCriterion(self.stop_criterion))
        object.__setattr__(self, "init_strategy", InitStrategy(self.init_strategy))
        object.__setattr__(self, "residual_weighting", ResidualWeighting(self.residual_weighting))

    def with_(self, **changes) -> NanoConfig:
        return replace(self, **changes)


class UpdateDivergedError(NotPositiveDefiniteError):
    """The natural-gradient iteration produced a non-PD precision."""

    def __init__(self, k: int, last_belief: Gaussian, reason: str = ""):
        super().__init__(f"NANO update diverged at iteration {k}" + (f": {reason}" if reason else ""))
        self.k = k
        self.last_belief = last_belief


@dataclass(frozen=True)
class UpdateIterate:
    belief: Gaussian
    precision: Precision
    k: int
    coefficients: Optional[tuple[float, np.ndarray, np.ndarray]] = None
    jitter: float = 0.0


@dataclass(frozen=True)
class UpdateReport:
    posterior: Gaussian
    iterations: int
    stop_reason: StopReason
    final_kl: float
    jitter_events: int
    init_fallback: bool = False


@dataclass(frozen=True)
class Losses:
    """Loss L(z) = 1/2 (y - g(z))^T W (y - g(z)) and its Stein companions.

    ``L_x`` and ``L_xx`` multiply L by the offset z - x_ref (and its outer
    product). All three accept a ``(k, n)`` stack of points. ``packed`` returns
    [L, L_x, vec(L_xx)] in one evaluation of g.
    """

    y: np.ndarray
    x_ref: np.ndarray
    g: Callable
    weight: np.ndarray

    def L(self, z):
        z = np.asarray(z, dtype=float)
        e = self.y - self.g(z)
        return 0.5 * np.einsum("...i,ij,...j->...", e, self.weight, e)

    def L_x(self, z):
        z = np.asarray(z, dtype=float)
        return (z - self.x_ref) * self.L(z)[..., None]

    def L_xx(self, z):
        z = np.asarray(z, dtype=float)
        d = z - self.x_ref
        return d[..., :, None] * d[..., None, :] * self.L(z)[..., None, None]

    def packed(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        loss = self.L(z)
        d = z - self.x_ref
        outer = (d[:, :, None] * d[:, None, :]).reshape(len(z), -1)
        return np.concatenate([loss[:, None], d * loss[:, None], outer * loss[:, None]], axis=1)


def loss_functions(y, x_ref, sys: DynamicalSystem, weighting=ResidualWeighting.INVERSE_R) -> Losses:
    weighting = ResidualWeighting(weighting)
    weight = sys.R_inv if weighting is ResidualWeighting.INVERSE_R else np.eye(sys.m)
    return Losses(np.asarray(y, dtype=float), np.asarray(x_ref, dtype=float), sys.g, weight)


def predict(posterior: Gaussian, u, sys: DynamicalSystem, rule: SigmaPointRule, t: int = 0) -> Gaussian:
    return ukf_predict(posterior, u, sys, rule, t)


def init_update(prior: Gaussian, y, sys: DynamicalSystem, strategy=InitStrategy.LAPLACE_EKF) -> tuple[Gaussian, bool]:
    """Starting belief for the update iteration.

    Returns the belief and whether the Gauss-Newton fallback (Hessian term
    dropped) was needed.
    """
    strategy = InitStrategy(strategy)
    if strategy is InitStrategy.PRIOR:
        return prior, False
    x = prior.mean
    G = sys.jac_g(x)
    y = np.asarray(y, dtype=float)
    resid = y - sys.g(x)
    mean, _, _ = kalman_update(prior, G, sys.g(x), y, sys.R)
    info = prior.precision().mat + G.T @ sys.R_inv @ G
    weighted = sys.R_inv @ resid
    curvature = np.tensordot(weighted, sys.hess_g(x), axes=1)
    try:
        s0, _ = symmetrize_psd(info - curvature, jitter_max=0.0)
        fallback = False
    except NotPositiveDefiniteError:
        try:
            s0, _ = symmetrize_psd(info, jitter_max=0.0)
        except NotPositiveDefiniteError:
            raise NotPositiveDefiniteError("Gauss-Newton initial precision is not positive definite") from None
        fallback = True
    return Gaussian(mean, Precision(s0).covariance()), fallback


def expected_coefficients(belief: Gaussian, losses: Losses, integrator: Integrator):
    n = belief.dim
    packed = np.asarray(integrator(belief, losses.packed), dtype=float)
    V = float(packed[0])
    V_x = packed[1 : n + 1]
    V_xx = packed[n + 1 :].reshape(n, n)
    return V, V_x, 0.5 * (V_xx + V_xx.T)


def update_iteration(
    it: UpdateIterate,
    prior: Gaussian,
    y,
    sys: DynamicalSystem,
    cfg: NanoConfig,
    integrator: Integrator | None = None,
    prior_precision: np.ndarray | None = None,
    step_size: float | None = None,
) -> UpdateIterate:
    """One natural-gradient step from iterate ``it``.

    ``step_size`` overrides ``cfg.step_size`` (0 is allowed here and leaves the
    mean fixed).
    """
    integrator = integrator or UnscentedIntegrator(cfg.update_rule)
    if prior_precision is None:
        prior_precision = prior.precision().mat
    x_k = it.belief.mean
    S_k = it.precision.mat
    losses = loss_functions(y, x_k, sys, cfg.residual_weighting)
    try:
        V, V_x, V_xx = expected_coefficients(it.belief, losses, integrator)
    except FloatingPointError as exc:
        raise UpdateDivergedError(it.k, it.belief, str(exc)) from None
    alpha = cfg.step_size if step_size is None else step_size
    expected_hessian = S_k @ V_xx @ S_k - V * S_k
    try:
        S_next, jitter = symmetrize_psd(prior_precision + alpha * expected_hessian, cfg.jitter_max)
    except NotPositiveDefiniteError:
        raise UpdateDivergedError(it.k + 1, it.belief, "precision not positive definite") from None
    precision = Precision(S_next)
    grad = S_k @ V_x + prior_precision @ (x_k - prior.mean)
    x_next = x_k - alpha * precision.solve(grad)
    if not np.all(np.isfinite(x_next)):
        raise UpdateDivergedError(it.k + 1, it.belief, "non-finite mean")
    belief = Gaussian(x_next, precision.covariance())
    return UpdateIterate(belief, precision, it.k + 1, (V, V_x, V_xx), jitter)


def stopping_met(prev: Gaussian, nxt: Gaussian, cfg: NanoConfig, kl: float | None = None) -> bool:
    """``kl`` may carry a precomputed KL(prev || nxt)."""
    if cfg.stop_criterion is StopCriterion.COV_NORM:
        return bool(np.linalg.norm(nxt.cov - prev.cov, "fro") < cfg.stop_threshold)
    return (kl_divergence(prev, nxt) if kl is None else kl) < cfg.stop_threshold


def update(prior: Gaussian, y, sys: DynamicalSystem, cfg: NanoConfig, integrator: Integrator | None = None) -> UpdateReport:
    integrator = integrator or UnscentedIntegrator(cfg.update_rule)
    start, init_fallback = init_update(prior, y, sys, cfg.init_strategy)
    prior_precision = prior.precision().mat
    it = UpdateIterate(start, start.precision(), 0)
    reason = StopReason.MAX_ITERS
    final_kl = float("nan")
    jitter_events = 0
    for _ in range(cfg.max_update_iters):
        nxt = update_iteration(it, prior, y, sys, cfg, integrator, prior_precision)
        jitter_events += nxt.jitter > 0
        final_kl = kl_divergence(it.belief, nxt.belief)
        done = stopping_met(it.belief, nxt.belief, cfg, final_kl)
        it = nxt
        if done:
            reason = StopReason.THRESHOLD
            break
    return UpdateReport(it.belief, it.k, reason, final_kl, jitter_events, init_fallback)


def nano_step_report(belief, u, y, sys, cfg: NanoConfig, t: int = 0, integrator=None):
    """Predict-then-update, returning the FilterStep and the UpdateReport.

    On update divergence the initial belief is kept, ``fallback`` is set and the
    report is None.
    """
    prior = predict(belief, u, sys, cfg.predict_rule, t)
    innov = np.asarray(y, dtype=float) - sys.g(prior.mean)
    try:
        report = update(prior, y, sys, cfg, integrator)
    except UpdateDivergedError:
        start, _ = init_update(prior, y, sys, cfg.init_strategy)
        return FilterStep(prior, start, cfg.max_update_iters, innov, fallback=True), None
    return FilterStep(prior, report.posterior, report.iterations, innov), report


def nano_step(
    belief: Gaussian, u, y, sys: DynamicalSystem, cfg: NanoConfig | None = None, t: int = 0, integrator=None
) -> FilterStep:
    return nano_step_report(belief, u, y, sys, cfg or NanoConfig(), t, integrator)[0]
