"""Benchmark state-space models, noise families and a trajectory simulator.

All transition and measurement functions are vectorized over leading axes:
``f(x, u, t)`` and ``g(x)`` accept ``x`` of shape ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import linalg

from .gauss_core import Gaussian, fd_hessian, fd_jacobian

# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------


class NoiseModel:
    dim: int

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """One draw of shape ``(dim,)``, or ``(size, dim)`` when ``size`` is given."""
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def covariance(self) -> np.ndarray:
        raise NotImplementedError

    def filter_covariance(self) -> np.ndarray:
        """Covariance handed to a filter's Q/R slot (must be usable as-is)."""
        return self.covariance()


@dataclass(frozen=True)
class GaussianNoise(NoiseModel):
    cov: np.ndarray

    @property
    def dim(self):
        return self.cov.shape[0]

    def sample(self, rng, size=None):
        chol = np.linalg.cholesky(self.cov)
        if size is None:
            return chol @ rng.standard_normal(self.dim)
        return rng.standard_normal((size, self.dim)) @ chol.T

    def mean(self):
        return np.zeros(self.dim)

    def covariance(self):
        return np.array(self.cov, dtype=float)


@dataclass(frozen=True)
class LaplaceNoise(NoiseModel):
    """Independent per-dimension Laplace noise with variances ``diag(cov)``."""

    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if np.any(cov != np.diag(np.diag(cov))):
            raise ValueError("Laplace noise requires a diagonal covariance")
        if np.any(np.diag(cov) <= 0):
            raise ValueError("Laplace variances must be positive")

    @property
    def dim(self):
        return self.cov.shape[0]

    @property
    def scale(self) -> np.ndarray:
        # Var[Laplace(b)] = 2 b^2
        return np.sqrt(np.diag(self.cov) / 2.0)

    def sample(self, rng, size=None):
        if size is None:
            return rng.laplace(0.0, self.scale)
        return rng.laplace(0.0, self.scale, size=(size, self.dim))

    def mean(self):
        return np.zeros(self.dim)

    def covariance(self):
        return np.array(self.cov, dtype=float)


@dataclass(frozen=True)
class BetaNoise(NoiseModel):
    """A single Beta(a, b) draw replicated across all ``dim`` components."""

    a: float
    b: float
    dim: int

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Beta parameters must be positive")

    @property
    def variance(self) -> float:
        a, b = self.a, self.b
        return a * b / ((a + b) ** 2 * (a + b + 1))

    def sample(self, rng, size=None):
        if size is None:
            return np.full(self.dim, rng.beta(self.a, self.b))
        return np.repeat(rng.beta(self.a, self.b, size)[:, None], self.dim, axis=1)

    def mean(self):
        return np.full(self.dim, self.a / (self.a + self.b))

    def covariance(self):
        return np.full((self.dim, self.dim), self.variance)

    def filter_covariance(self):
        # the replicated covariance is rank one; filters get the diagonal
        return self.variance * np.eye(self.dim)


@dataclass(frozen=True)
class MixtureNoise(NoiseModel):
    """Two-component mixture; component 1 is the nominal (non-outlier) one."""

    weight_1: float
    component_1: NoiseModel
    weight_2: float
    component_2: NoiseModel

    def __post_init__(self):
        if self.weight_1 <= 0 or self.weight_2 <= 0:
            raise ValueError("mixture weights must be positive")
        if abs(self.weight_1 + self.weight_2 - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to one")
        if self.component_1.dim != self.component_2.dim:
            raise ValueError("mixture components must share a dimension")

    @property
    def dim(self):
        return self.component_1.dim

    def sample(self, rng, size=None):
        if size is None:
            if rng.random() < self.weight_1:
                return self.component_1.sample(rng)
            return self.component_2.sample(rng)
        pick_first = rng.random(size) < self.weight_1
        return np.where(pick_first[:, None], self.component_1.sample(rng, size), self.component_2.sample(rng, size))

    def mean(self):
        return self.weight_1 * self.component_1.mean() + self.weight_2 * self.component_2.mean()

    def covariance(self):
        mu = self.mean()
        out = np.zeros((self.dim, self.dim))
        for w, c in ((self.weight_1, self.component_1), (self.weight_2, self.component_2)):
            d = c.mean() - mu
            out += w * (c.covariance() + np.outer(d, d))
        return out

    def filter_covariance(self):
        return self.component_1.filter_covariance()


def sample_noise(model: NoiseModel, generator: np.random.Generator, size: int | None = None) -> np.ndarray:
    return model.sample(generator, size)


def noise_covariance(model: NoiseModel) -> np.ndarray:
    return model.covariance()


def noise_mean(model: NoiseModel) -> np.ndarray:
    return model.mean()


# ---------------------------------------------------------------------------
# Dynamical systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicalSystem:
    name: str
    n: int
    m: int
    l: int
    f: Callable[[np.ndarray, np.ndarray, int], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    Q: np.ndarray
    R: np.ndarray
    f_jac: Optional[Callable] = None
    g_jac: Optional[Callable] = None
    g_hess: Optional[Callable] = None
    R_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.shape != (self.n, self.n) or R.shape != (self.m, self.m):
            raise ValueError("Q/R shapes inconsistent with system dimensions")
        if not np.allclose(Q, Q.T) or np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("Q must be symmetric positive semidefinite")
        if not np.allclose(R, R.T):
            raise ValueError("R must be symmetric")
        chol = np.linalg.cholesky(R)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "R_inv", linalg.cho_solve((chol, True), np.eye(self.m)))

    def jac_f(self, x, u, t) -> np.ndarray:
        if self.f_jac is not None:
            return np.asarray(self.f_jac(x, u, t), dtype=float)
        return fd_jacobian(lambda z: self.f(z, u, t), x)

    def jac_g(self, x) -> np.ndarray:
        if self.g_jac is not None:
            return np.asarray(self.g_jac(x), dtype=float)
        return fd_jacobian(self.g, x)

    def hess_g(self, x) -> np.ndarray:
        """Stack of per-component Hessians, shape ``(m, n, n)``."""
        if self.g_hess is not None:
            return np.asarray(self.g_hess(x), dtype=float)
        return np.stack([fd_hessian(lambda z, j=j: self.g(z)[j], x) for j in range(self.m)])


class Benchmark(NamedTuple):
    system: DynamicalSystem
    process_noise: NoiseModel
    measurement_noise: NoiseModel
    x0: Gaussian
    inputs: Callable[[int], np.ndarray]


SYSTEMS = ("oscillator", "sequence_forecast", "growth", "robot_localization", "satellite_attitude")
NOISE_CASES = ("gauss_a", "laplace_b", "beta_c", "outlier_mixture")

_SYSTEM_ALIASES = {
    "oscillator": "oscillator",
    "dampedlinearoscillator": "oscillator",
    "sequenceforecast": "sequence_forecast",
    "sequenceforecasting": "sequence_forecast",
    "growth": "growth",
    "growthmodel": "growth",
    "robotlocalization": "robot_localization",
    "robot": "robot_localization",
    "satelliteattitude": "satellite_attitude",
    "satellite": "satellite_attitude",
}
_NOISE_ALIASES = {
    "gaussa": "gauss_a",
    "gauss": "gauss_a",
    "gaussian": "gauss_a",
    "laplaceb": "laplace_b",
    "laplace": "laplace_b",
    "betac": "beta_c",
    "beta": "beta_c",
    "outliermixture": "outlier_mixture",
    "outlier": "outlier_mixture",
}


def _key(s: str) -> str:
    return s.lower().replace("_", "").replace("-", "").replace(" ", "")


def canonical_system(name: str) -> str:
    try:
        return _SYSTEM_ALIASES[_key(name)]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {SYSTEMS}") from None


def canonical_noise(name: str) -> str:
    try:
        return _NOISE_ALIASES[_key(name)]
    except KeyError:
        raise ValueError(f"unknown noise case {name!r}; choose from {NOISE_CASES}") from None


def _no_input(t: int) -> np.ndarray:
    return np.zeros(0)


def _standard_noises(case: str, q_var: float, r_var: float, beta_q, beta_r, n: int, m: int):
    if case == "gauss_a":
        return GaussianNoise(q_var * np.eye(n)), GaussianNoise(r_var * np.eye(m))
    if case == "laplace_b":
        return LaplaceNoise(q_var * np.eye(n)), LaplaceNoise(r_var * np.eye(m))
    if case == "beta_c":
        return BetaNoise(*beta_q, dim=n), BetaNoise(*beta_r, dim=m)
    raise ValueError(f"noise case {case!r} is not defined for this system")


# -- damped linear oscillator ------------------------------------------------

OSCILLATOR_DT = 0.1
OSCILLATOR_GENERATOR = np.array([[-0.1, 2.0], [-2.0, -0.1]])
OSCILLATOR_H = np.array([[1.0, 1.0], [-0.5, 1.0]])


def oscillator_transition(dt: float = OSCILLATOR_DT) -> np.ndarray:
    return linalg.expm(OSCILLATOR_GENERATOR * dt)


def _oscillator(case: str) -> Benchmark:
    A = oscillator_transition()
    H = OSCILLATOR_H
    pn, mn = _standard_noises(case, 0.5, 1.0, (1.5, 2.5), (2.0, 5.0), 2, 2)
    sys = DynamicalSystem(
        name="oscillator",
        n=2,
        m=2,
        l=0,
        f=lambda x, u, t: x @ A.T,
        g=lambda x: x @ H.T,
        f_jac=lambda x, u, t: A,
        g_jac=lambda x: H,
        g_hess=lambda x: np.zeros((2, 2, 2)),
        Q=pn.filter_covariance(),
        R=mn.filter_covariance(),
    )
    x0 = Gaussian(np.array([2.5, -5.0]), np.eye(2))
    return Benchmark(sys, pn, mn, x0, _no_input)


# -- sequence forecasting ------------------------------------------------------

_FORECAST_M = np.array([[-1.0, 0.0], [0.1, -1.0]])


def _forecast_f(x, u, t):
    return x + 0.1 * (x @ _FORECAST_M.T) + 0.1 * np.cos(x)


def _forecast_f_jac(x, u, t):
    return np.eye(2) + 0.1 * _FORECAST_M - 0.1 * np.diag(np.sin(x))


def _forecast_g(x):
    return x + np.sin(x)


def _forecast_g_hess(x):
    out = np.zeros((2, 2, 2))
    out[0, 0, 0] = -np.sin(x[0])
    out[1, 1, 1] = -np.sin(x[1])
    return out


def _sequence_forecast(case: str) -> Benchmark:
    pn, mn = _standard_noises(case, 4.0, 1.0, (1.5, 2.0), (3.0, 7.0), 2, 2)
    sys = DynamicalSystem(
        name="sequence_forecast",
        n=2,
        m=2,
        l=0,
        f=_forecast_f,
        g=_forecast_g,
        f_jac=_forecast_f_jac,
        g_jac=lambda x: np.diag(1.0 + np.cos(x)),
        g_hess=_forecast_g_hess,
        Q=pn.filter_covariance(),
        R=mn.filter_covariance(),
    )
    return Benchmark(sys, pn, mn, Gaussian(np.zeros(2), np.eye(2)), _no_input)


# -- modified growth model -----------------------------------------------------


def _growth_f(x, u, t):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    f1 = (x1 + 0.1 * x2) / 2 + 25 * x1 / (1 + x1**2 + 0.3 * x2**2)
    f2 = (x2 + 0.1 * x3) / 3 + 30 * x2 / (1 + x2**2 + 0.5 * x3**2)
    f3 = (x3 + 0.1 * x1) / 4 + 35 * x3 / (1 + x3**2 + 0.7 * x1**2)
    return np.stack([f1, f2, f3], axis=-1) + 8 * np.cos(t)


def _growth_f_jac(x, u, t):
    x1, x2, x3 = x
    d1 = 1 + x1**2 + 0.3 * x2**2
    d2 = 1 + x2**2 + 0.5 * x3**2
    d3 = 1 + x3**2 + 0.7 * x1**2
    return np.array(
        [
            [0.5 + 25 * (d1 - 2 * x1**2) / d1**2, 0.05 - 25 * x1 * 0.6 * x2 / d1**2, 0.0],
            [0.0, 1 / 3 + 30 * (d2 - 2 * x2**2) / d2**2, 0.1 / 3 - 30 * x2 * x3 / d2**2],
            [0.025 - 35 * x3 * 1.4 * x1 / d3**2, 0.0, 0.25 + 35 * (d3 - 2 * x3**2) / d3**2],
        ]
    )


def _growth_g(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([x1**2 + x2**2, x2**2 + x3**2, x1**2 + x3**2], axis=-1) / 20


def _growth_g_jac(x):
    x1, x2, x3 = x
    return np.array([[x1, x2, 0.0], [0.0, x2, x3], [x1, 0.0, x3]]) / 10


_GROWTH_G_HESS = np.array([np.diag([0.1, 0.1, 0.0]), np.diag([0.0, 0.1, 0.1]), np.diag([0.1, 0.0, 0.1])])


def _growth(case: str) -> Benchmark:
    pn, mn = _standard_noises(case, 1.0, 1.0, (2.0, 2.0), (2.0, 2.0), 3, 3)
    sys = DynamicalSystem(
        name="growth",
        n=3,
        m=3,
        l=0,
        f=_growth_f,
        g=_growth_g,
        f_jac=_growth_f_jac,
        g_jac=_growth_g_jac,
        g_hess=lambda x: _GROWTH_G_HESS,
        Q=pn.filter_covariance(),
        R=mn.filter_covariance(),
    )
    return Benchmark(sys, pn, mn, Gaussian(5.0 * np.ones(3), 5.0 * np.eye(3)), _no_input)


# -- robot localization ----------------------------------------------------------

ROBOT_DT = 0.1
DEFAULT_LANDMARKS = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])


def robot_input(t: int) -> np.ndarray:
    s = np.sin(np.pi * t / 20)
    return np.array([5.0 * s, 3.0 * s])


def rotation_2d(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def _make_robot_fns(landmarks: np.ndarray, dt: float):
    landmarks = np.asarray(landmarks, dtype=float)
    k = len(landmarks)

    def f(x, u, t):
        v, w = u[0], u[1]
        px, py, phi = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([px + v * np.cos(phi) * dt, py + v * np.sin(phi) * dt, phi + w * dt], axis=-1)

    def f_jac(x, u, t):
        v = u[0]
        phi = x[2]
        return np.array([[1.0, 0.0, -v * np.sin(phi) * dt], [0.0, 1.0, v * np.cos(phi) * dt], [0.0, 0.0, 1.0]])

    def g(x):
        c, s = np.cos(x[..., 2])[..., None], np.sin(x[..., 2])[..., None]
        dx = x[..., 0:1] - landmarks[:, 0]
        dy = x[..., 1:2] - landmarks[:, 1]
        # R(phi)^T (p - m_i) for each landmark, interleaved
        out = np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)
        return out.reshape(*x.shape[:-1], 2 * k)

    def g_jac(x):
        c, s = np.cos(x[2]), np.sin(x[2])
        jac = np.zeros((2 * k, 3))
        for i, (mx, my) in enumerate(landmarks):
            dx, dy = x[0] - mx, x[1] - my
            jac[2 * i] = [c, s, -s * dx + c * dy]
            jac[2 * i + 1] = [-s, c, -c * dx - s * dy]
        return jac

    def g_hess(x):
        c, s = np.cos(x[2]), np.sin(x[2])
        hess = np.zeros((2 * k, 3, 3))
        for i, (mx, my) in enumerate(landmarks):
            dx, dy = x[0] - mx, x[1] - my
            h0 = hess[2 * i]
            h0[2, 2] = -c * dx - s * dy
            h0[0, 2] = h0[2, 0] = -s
            h0[1, 2] = h0[2, 1] = c
            h1 = hess[2 * i + 1]
            h1[2, 2] = s * dx - c * dy
            h1[0, 2] = h1[2, 0] = -c
            h1[1, 2] = h1[2, 1] = -s
        return hess

    return f, f_jac, g, g_jac, g_hess


def _robot(case: str, landmarks=None) -> Benchmark:
    landmarks = DEFAULT_LANDMARKS if landmarks is None else np.asarray(landmarks, dtype=float)
    m = 2 * len(landmarks)
    pn, mn = _standard_noises(case, 0.01, 0.01, (4.0, 6.0), (4.0, 6.0), 3, m)
    f, f_jac, g, g_jac, g_hess = _make_robot_fns(landmarks, ROBOT_DT)
    sys = DynamicalSystem(
        name="robot_localization",
        n=3,
        m=m,
        l=2,
        f=f,
        g=g,
        f_jac=f_jac,
        g_jac=g_jac,
        g_hess=g_hess,
        Q=pn.filter_covariance(),
        R=mn.filter_covariance(),
    )
    return Benchmark(sys, pn, mn, Gaussian(np.zeros(3), np.eye(3)), robot_input)


# -- satellite attitude --------------------------------------------------------------

SATELLITE_DT = 0.01
GRAVITY = np.array([0.0, 0.0, -9.81])
MAGNETIC_FIELD = np.array([27.75, -3.65, 47.21])
GIMBAL_LOCK_COS = 1e-6


class GimbalLockError(FloatingPointError):
    """Euler-angle rate map evaluated at (numerically) cos(pitch) = 0."""


def satellite_input(t: int, dt: float = SATELLITE_DT) -> np.ndarray:
    return np.pi / 18 * np.sin(2 * dt * np.pi * t) * np.ones(3)


def _rot(axis: int, angle, deriv: int = 0) -> np.ndarray:
    """Elementary rotation (or its ``deriv``-th angle derivative), batched over ``angle``."""
    angle = np.asarray(angle, dtype=float)
    # d^k/da^k of (cos a, sin a) = (cos(a + k pi/2), sin(a + k pi/2))
    c = np.cos(angle + deriv * np.pi / 2)
    s = np.sin(angle + deriv * np.pi / 2)
    one = np.ones_like(angle) if deriv == 0 else np.zeros_like(angle)
    zero = np.zeros_like(angle)
    if axis == 0:
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == 1:
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def attitude_matrix(theta, derivs=(0, 0, 0)) -> np.ndarray:
    """Body-to-world rotation C(theta) = Rz(yaw) Ry(pitch) Rx(roll).

    ``theta`` is ordered (pitch, roll, yaw); ``derivs`` gives the derivative order
    taken with respect to each of those angles.
    """
    theta = np.asarray(theta, dtype=float)
    p, r, y = theta[..., 0], theta[..., 1], theta[..., 2]
    dp, dr, dy = derivs
    return _rot(2, y, dy) @ _rot(1, p, dp) @ _rot(0, r, dr)


def euler_rate_matrix(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    p, r = theta[..., 0], theta[..., 1]
    cp = np.cos(p)
    if np.any(np.abs(cp) < GIMBAL_LOCK_COS):
        raise GimbalLockError("Euler-angle rate map is singular (|cos pitch| too small)")
    sp, sr, cr = np.sin(p), np.sin(r), np.cos(r)
    zero, one = np.zeros_like(p), np.ones_like(p)
    rows = [[one, sp * sr / cp, cr * sp / cp], [zero, cr, -sr], [zero, sr / cp, cr / cp]]
    return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


def _make_satellite_fns(dt: float):
    refs = np.stack([GRAVITY, MAGNETIC_FIELD])  # (2, 3)

    def f(x, u, t):
        omega = euler_rate_matrix(x)
        return x + (omega @ u) * dt

    def f_jac(x, u, t):
        p, r = x[0], x[1]
        cp = np.cos(p)
        if abs(cp) < GIMBAL_LOCK_COS:
            raise GimbalLockError("Euler-angle rate map is singular (|cos pitch| too small)")
        sp, sr, cr = np.sin(p), np.sin(r), np.cos(r)
        a = sr * u[1] + cr * u[2]
        b = cr * u[1] - sr * u[2]
        d = np.array(
            [
                [a / cp**2, sp / cp * b, 0.0],
                [0.0, -a, 0.0],
                [a * sp / cp**2, b / cp, 0.0],
            ]
        )
        return np.eye(3) + d * dt

    def g(x):
        C = attitude_matrix(x)
        # C^T v for v in (gravity, magnetic field)
        out = np.einsum("...ji,kj->...ki", C, refs)
        return out.reshape(*np.shape(x)[:-1], 6)

    def g_jac(x):
        cols = []
        for a in range(3):
            d = [0, 0, 0]
            d[a] = 1
            cols.append((refs @ attitude_matrix(x, d)).reshape(6))
        return np.stack(cols, axis=1)

    def g_hess(x):
        hess = np.zeros((6, 3, 3))
        for a in range(3):
            for b in range(a, 3):
                d = [0, 0, 0]
                d[a] += 1
                d[b] += 1
                col = (refs @ attitude_matrix(x, d)).reshape(6)
                hess[:, a, b] = col
                hess[:, b, a] = col
        return hess

    return f, f_jac, g, g_jac, g_hess


def _satellite(case: str) -> Benchmark:
    if case != "outlier_mixture":
        raise ValueError("satellite_attitude is only defined for the outlier_mixture noise case")
    pn = MixtureNoise(0.9, LaplaceNoise(1e-5 * np.eye(3)), 0.1, LaplaceNoise(1e-2 * np.eye(3)))
    mn = MixtureNoise(0.85, GaussianNoise(1e-4 * np.eye(6)), 0.15, BetaNoise(1.2, 1.5, dim=6))
    f, f_jac, g, g_jac, g_hess = _make_satellite_fns(SATELLITE_DT)
    sys = DynamicalSystem(
        name="satellite_attitude",
        n=3,
        m=6,
        l=3,
        f=f,
        g=g,
        f_jac=f_jac,
        g_jac=g_jac,
        g_hess=g_hess,
        Q=pn.filter_covariance(),
        R=mn.filter_covariance(),
    )
    return Benchmark(sys, pn, mn, Gaussian(np.zeros(3), 1e-3 * np.eye(3)), satellite_input)


def make_system(name: str, noise_case: str, **options) -> Benchmark:
    """Build one of the benchmark systems with the given noise case.

    ``options`` currently only supports ``landmarks`` for the robot.
    """
    system = canonical_system(name)
    case = canonical_noise(noise_case)
    if case == "outlier_mixture" and system != "satellite_attitude":
        raise ValueError("outlier_mixture is only defined for satellite_attitude")
    if system == "robot_localization":
        return _robot(case, options.get("landmarks"))
    if options:
        raise ValueError(f"unsupported options for {system}: {sorted(options)}")
    builders = {
        "oscillator": _oscillator,
        "sequence_forecast": _sequence_forecast,
        "growth": _growth,
        "satellite_attitude": _satellite,
    }
    return builders[system](case)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (M+1, n)
    inputs: np.ndarray  # (M, l)
    measurements: np.ndarray  # (M, m); row t-1 holds y_t
    seed: int

    @property
    def horizon(self) -> int:
        return len(self.measurements)


def simulate(
    sys: DynamicalSystem,
    process_noise: NoiseModel,
    measurement_noise: NoiseModel,
    x0: Gaussian,
    inputs: Callable[[int], np.ndarray],
    M: int,
    seed: int,
) -> Trajectory:
    if M < 1:
        raise ValueError("trajectory length M must be at least 1")
    rng = np.random.default_rng(seed)
    states = np.empty((M + 1, sys.n))
    meas = np.empty((M, sys.m))
    us = np.empty((M, sys.l))
    states[0] = x0.sample(rng)
    for t in range(M):
        u = np.asarray(inputs(t), dtype=float)
        us[t] = u
        states[t + 1] = sys.f(states[t], u, t) + process_noise.sample(rng)
        meas[t] = sys.g(states[t + 1]) + measurement_noise.sample(rng)
        if not (np.all(np.isfinite(states[t + 1])) and np.all(np.isfinite(meas[t]))):
            raise FloatingPointError(f"non-finite state or measurement at step {t + 1}")
    return Trajectory(states, us, meas, seed)
