"""Sigma points, the unscented transform and Gaussian expectation integrators.

Weights follow the (alpha, beta, lambda) parameterization

    W_m^0 = lambda / (n + lambda),  W_c^0 = W_m^0 + (1 - alpha^2 + beta),
    W_m^i = W_c^i = 1 / (2 (n + lambda)),  i = 1..2n.

Functions passed to the transforms either take a single point (default) or,
with ``vectorized=True``, a ``(k, n)`` stack of points and return results
stacked along the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Union

import numpy as np

from .gauss_core import Gaussian, cholesky

LAMBDA_3_MINUS_N = "3-n"


@dataclass(frozen=True)
class SigmaPointRule:
    alpha: float
    beta: float
    lam: Union[float, str] = 0.0

    @classmethod
    def julier(cls) -> SigmaPointRule:
        return cls(alpha=0.0, beta=1.0, lam=0.0)

    @classmethod
    def van_der_merwe(cls) -> SigmaPointRule:
        return cls(alpha=1e-3, beta=1.0, lam=LAMBDA_3_MINUS_N)

    @classmethod
    def balanced(cls) -> SigmaPointRule:
        """lambda = 2 in every dimension.

        Off-centre points sit at +-sqrt(n + 2) standard deviations, which makes the
        2n+1 point estimate of E[(z - m)(z - m)^T L] unbiased for isotropic
        quadratic L and exact in 1-D for quadratic L.
        """
        return cls(alpha=0.0, beta=1.0, lam=2.0)

    @classmethod
    def from_name(cls, name: str) -> SigmaPointRule:
        key = name.lower().replace("_", "").replace("-", "")
        if key == "julier":
            return cls.julier()
        if key == "balanced":
            return cls.balanced()
        if key in ("vandermerwe", "merwe", "vdm"):
            return cls.van_der_merwe()
        raise ValueError(f"unknown sigma point rule {name!r}")

    def resolve_lambda(self, n: int) -> float:
        if self.lam == LAMBDA_3_MINUS_N:
            lam = 3.0 - n
        elif isinstance(self.lam, str):
            raise ValueError(f"unsupported symbolic lambda {self.lam!r}")
        else:
            lam = float(self.lam)
        if n + lam <= 0:
            raise ValueError(f"n + lambda must be positive (n={n}, lambda={lam})")
        return lam

    def weights(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        lam = self.resolve_lambda(n)
        wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray  # (2n+1, n)
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[1]


def sigma_points(g: Gaussian, rule: SigmaPointRule) -> SigmaSet:
    n = g.dim
    lam = rule.resolve_lambda(n)
    root = cholesky((n + lam) * g.cov)
    pts = np.empty((2 * n + 1, n))
    pts[0] = g.mean
    pts[1 : n + 1] = g.mean + root.T
    pts[n + 1 :] = g.mean - root.T
    wm, wc = rule.weights(n)
    return SigmaSet(pts, wm, wc)


def _evaluate(fn, points: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        vals = np.asarray(fn(points), dtype=float)
        if vals.shape[0] != points.shape[0]:
            raise ValueError("vectorized function must return one result per point")
    else:
        vals = np.stack([np.asarray(fn(p), dtype=float) for p in points])
    if not np.all(np.isfinite(vals)):
        bad = np.flatnonzero(~np.isfinite(vals.reshape(len(points), -1)).all(axis=1))
        raise FloatingPointError(f"non-finite function value at sigma point(s) {bad.tolist()}")
    return vals


def unscented_transform(
    g: Gaussian, fn: Callable, rule: SigmaPointRule, vectorized: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate ``g`` through ``fn``; returns the approximated mean and covariance."""
    sigmas = sigma_points(g, rule)
    vals = _evaluate(fn, sigmas.points, vectorized).reshape(len(sigmas.points), -1)
    mean = sigmas.mean_weights @ vals
    dev = vals - mean
    cov = (sigmas.cov_weights[:, None] * dev).T @ dev
    return mean, 0.5 * (cov + cov.T)


def expectation(g: Gaussian, fn: Callable, rule: SigmaPointRule, vectorized: bool = False):
    """Sigma-point estimate of E[fn(z)], z ~ g, using mean weights only."""
    sigmas = sigma_points(g, rule)
    vals = _evaluate(fn, sigmas.points, vectorized)
    return np.tensordot(sigmas.mean_weights, vals, axes=1)


def mc_expectation(
    g: Gaussian,
    fn: Callable,
    n_samples: int,
    seed: int,
    vectorized: bool = False,
    return_stderr: bool = False,
):
    """Monte-Carlo estimate of E[fn(z)] with a per-call seeded generator."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    samples = g.sample(rng, n_samples)
    vals = _evaluate(fn, samples, vectorized)
    mean = vals.mean(axis=0)
    if not return_stderr:
        return mean
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(n_samples) if n_samples > 1 else np.full_like(mean, np.inf)
    return mean, stderr


class Integrator(Protocol):
    """Approximates E[fn(z)] for z ~ belief; ``fn`` is always vectorized."""

    def __call__(self, belief: Gaussian, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray: ...


@dataclass(frozen=True)
class UnscentedIntegrator:
    rule: SigmaPointRule

    def __call__(self, belief, fn):
        return expectation(belief, fn, self.rule, vectorized=True)


@dataclass(frozen=True)
class MonteCarloIntegrator:
    n_samples: int = 1_000_000
    seed: int = 0

    def __call__(self, belief, fn):
        return mc_expectation(belief, fn, self.n_samples, self.seed, vectorized=True)
