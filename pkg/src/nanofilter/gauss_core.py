"""Gaussian beliefs and the small amount of linear algebra the filters need."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a covariance or precision matrix cannot be Cholesky-factorized."""


def _as_vector(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _as_matrix(m) -> np.ndarray:
    return np.atleast_2d(np.asarray(m, dtype=float))


def cholesky(mat: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor, raising NotPositiveDefiniteError on failure."""
    if not np.all(np.isfinite(mat)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal belief N(mean, cov).

    The covariance is symmetrized on construction and must be strictly positive
    definite. The lower Cholesky factor is cached in ``chol``.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = _as_vector(self.mean).copy()
        cov = _as_matrix(self.cov)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match mean dimension {n}")
        cov = 0.5 * (cov + cov.T)
        chol = cholesky(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def precision(self) -> Precision:
        return Precision(inverse_from_cholesky(self.chol))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        """Log density, vectorized over leading axes of ``x``."""
        x = np.asarray(x, dtype=float)
        d = (x - self.mean).reshape(-1, self.dim)
        w = linalg.solve_triangular(self.chol, d.T, lower=True)
        quad = np.sum(w * w, axis=0)
        out = -0.5 * (quad + self.logdet() + self.dim * np.log(2 * np.pi))
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out[0]

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        z = rng.standard_normal(shape)
        return self.mean + z @ self.chol.T


@dataclass(frozen=True)
class Precision:
    """Inverse covariance S = P^-1, kept symmetric and positive definite."""

    mat: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mat = _as_matrix(self.mat)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("precision matrix must be square")
        mat = 0.5 * (mat + mat.T)
        chol = cholesky(mat)
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "chol", chol)

    def covariance(self) -> np.ndarray:
        return inverse_from_cholesky(self.chol)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return S^-1 b (i.e. P b) by Cholesky solve."""
        return linalg.cho_solve((self.chol, True), b, check_finite=False)


def inverse_from_cholesky(chol: np.ndarray) -> np.ndarray:
    n = chol.shape[0]
    inv = linalg.cho_solve((chol, True), np.eye(n), check_finite=False)
    return 0.5 * (inv + inv.T)


def kl_divergence(p: Gaussian, q: Gaussian) -> float:
    """KL(p || q) between two Gaussians, using Cholesky factors of both covariances."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    n = p.dim
    m = linalg.solve_triangular(q.chol, p.chol, lower=True, check_finite=False)
    trace_term = float(np.sum(m * m))
    d = linalg.solve_triangular(q.chol, q.mean - p.mean, lower=True, check_finite=False)
    maha = float(d @ d)
    logdet = q.logdet() - p.logdet()
    return max(0.5 * (trace_term + maha - n + logdet), 0.0)


JITTER_LADDER_START = 1e-12


def symmetrize_psd(m: np.ndarray, jitter_max: float = 1e-6) -> tuple[np.ndarray, float]:
    """Symmetrize ``m`` and, if needed, add the smallest diagonal jitter that makes it PD.

    The jitter ladder is 1e-12, 1e-10, ... up to ``jitter_max``. Returns the
    matrix together with the jitter applied (0.0 when none was needed).
    """
    m = _as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    sym = 0.5 * (m + m.T)
    if not np.all(np.isfinite(sym)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    try:
        np.linalg.cholesky(sym)
        return sym, 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(sym.shape[0])
    eps = JITTER_LADDER_START
    while eps <= jitter_max * (1 + 1e-9):
        candidate = sym + eps * eye
        try:
            np.linalg.cholesky(candidate)
            return candidate, eps
        except np.linalg.LinAlgError:
            eps *= 100.0
    raise NotPositiveDefiniteError(f"matrix not positive definite even with jitter {jitter_max:g}")


def _default_steps(x: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(x))


def _checked(fn, x, j):
    val = np.asarray(fn(x), dtype=float)
    if not np.all(np.isfinite(val)):
        raise FloatingPointError(f"non-finite function value when perturbing coordinate {j}")
    return val


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, h=None) -> np.ndarray:
    """Central-difference Jacobian; entry (i, j) is d fn_i / d x_j."""
    x = _as_vector(x)
    steps = _default_steps(x, 1e-6) if h is None else np.broadcast_to(np.asarray(h, float), x.shape)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = steps[j]
        hi = np.atleast_1d(_checked(fn, x + e, j))
        lo = np.atleast_1d(_checked(fn, x - e, j))
        cols.append((hi - lo) / (2 * steps[j]))
    return np.stack(cols, axis=1)


def fd_hessian(fn: Callable[[np.ndarray], float], x, h=None) -> np.ndarray:
    """Second-order central-difference Hessian of a scalar function, symmetrized."""
    x = _as_vector(x)
    n = x.size
    steps = _default_steps(x, 1e-4) if h is None else np.broadcast_to(np.asarray(h, float), x.shape)
    f0 = float(_checked(fn, x, -1))
    hess = np.empty((n, n))
    basis = np.eye(n) * steps
    for i in range(n):
        ei = basis[i]
        fp = float(_checked(fn, x + ei, i))
        fm = float(_checked(fn, x - ei, i))
        hess[i, i] = (fp - 2 * f0 + fm) / steps[i] ** 2
        for j in range(i + 1, n):
            ej = basis[j]
            fpp = float(_checked(fn, x + ei + ej, j))
            fpm = float(_checked(fn, x + ei - ej, j))
            fmp = float(_checked(fn, x - ei + ej, j))
            fmm = float(_checked(fn, x - ei - ej, j))
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * steps[i] * steps[j])
    return 0.5 * (hess + hess.T)
