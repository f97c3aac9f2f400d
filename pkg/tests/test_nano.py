import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanofilter import filters_baseline as fb
from nanofilter import nano
from nanofilter.gauss_core import Gaussian, kl_divergence
from nanofilter.models import GaussianNoise, make_system, simulate
from nanofilter.nano import (
    InitStrategy,
    NanoConfig,
    ResidualWeighting,
    StopCriterion,
    StopReason,
    UpdateDivergedError,
    UpdateIterate,
)
from nanofilter.unscented import SigmaPointRule

from conftest import GaussHermiteIntegrator, kalman_posterior, linear_system, random_spd

EXACT = GaussHermiteIntegrator()


def scalar_identity():
    return linear_system(np.eye(1), np.eye(1), np.zeros((1, 1)), np.eye(1))


class TestConfig:
    def test_defaults(self):
        cfg = NanoConfig()
        assert cfg.step_size == 1.0 and cfg.stop_criterion is StopCriterion.GAUSSIAN_KL
        assert cfg.stop_threshold == 1e-8 and cfg.max_update_iters == 20
        assert cfg.predict_rule == SigmaPointRule.van_der_merwe()
        assert cfg.update_rule == SigmaPointRule.balanced()
        assert cfg.init_strategy is InitStrategy.LAPLACE_EKF
        assert cfg.residual_weighting is ResidualWeighting.INVERSE_R

    @pytest.mark.parametrize(
        "bad", [{"step_size": 0.0}, {"step_size": 1.5}, {"stop_threshold": 0.0}, {"max_update_iters": 0}]
    )
    def test_invariants(self, bad):
        with pytest.raises(ValueError):
            NanoConfig(**bad)

    def test_enums_from_strings(self):
        cfg = NanoConfig(stop_criterion="cov_norm", init_strategy="prior", residual_weighting="identity")
        assert cfg.stop_criterion is StopCriterion.COV_NORM
        assert cfg.init_strategy is InitStrategy.PRIOR
        assert cfg.with_(step_size=0.5).step_size == 0.5


class TestLosses:
    def test_vanishing_offset(self):
        sys = scalar_identity()
        losses = nano.loss_functions(np.array([3.0]), np.array([0.4]), sys)
        z = np.array([[0.4]])
        assert np.all(losses.L_x(z) == 0) and np.all(losses.L_xx(z) == 0)
        assert losses.L(z)[0] > 0

    def test_scalar_values(self):
        losses = nano.loss_functions(np.array([1.0]), np.array([0.0]), scalar_identity(), "identity")
        z = np.array([[0.0]])
        assert losses.L(z)[0] == 0.5 and losses.L_x(z)[0, 0] == 0 and losses.L_xx(z)[0, 0, 0] == 0

    def test_zero_residual(self):
        sys = make_system("growth", "gauss_a").system
        x = np.array([1.0, -2.0, 0.5])
        assert nano.loss_functions(sys.g(x), x, sys).L(x[None])[0] == 0.0

    def test_inverse_r_weighting(self):
        sys = linear_system(np.eye(1), np.eye(1), np.zeros((1, 1)), 4.0 * np.eye(1))
        z = np.array([[0.0]])
        assert nano.loss_functions(np.array([2.0]), np.zeros(1), sys).L(z)[0] == pytest.approx(0.5)
        assert nano.loss_functions(np.array([2.0]), np.zeros(1), sys, "identity").L(z)[0] == pytest.approx(2.0)

    def test_packed_consistent(self):
        sys = make_system("robot", "gauss").system
        rng = np.random.default_rng(0)
        losses = nano.loss_functions(rng.normal(size=6), rng.normal(size=3), sys)
        z = rng.normal(size=(5, 3))
        packed = losses.packed(z)
        assert np.allclose(packed[:, 0], losses.L(z))
        assert np.allclose(packed[:, 1:4], losses.L_x(z))
        assert np.allclose(packed[:, 4:].reshape(5, 3, 3), losses.L_xx(z))


class TestInit:
    def test_prior_strategy(self):
        prior = Gaussian([0.3], [[2.0]])
        start, fallback = nano.init_update(prior, np.ones(1), scalar_identity(), "prior")
        assert start is prior and not fallback

    def test_scalar_kalman(self):
        start, fallback = nano.init_update(Gaussian([0.0], [[1.0]]), np.ones(1), scalar_identity())
        assert np.allclose(start.mean, 0.5) and np.allclose(start.cov, 0.5) and not fallback

    def test_linear_matches_kalman_covariance(self):
        rng = np.random.default_rng(1)
        H, R = rng.normal(size=(2, 3)), random_spd(rng, 2)
        sys = linear_system(np.eye(3), H, np.eye(3), R)
        prior = Gaussian(rng.normal(size=3), random_spd(rng, 3))
        y = rng.normal(size=2)
        start, _ = nano.init_update(prior, y, sys)
        mean, cov = kalman_posterior(prior, H, R, y)
        assert np.allclose(start.mean, mean, atol=1e-10) and np.allclose(start.cov, cov, atol=1e-10)

    def test_zero_residual_keeps_mean(self):
        sys = make_system("growth", "gauss_a").system
        prior = Gaussian(np.array([1.0, 2.0, 3.0]), np.eye(3))
        start, fallback = nano.init_update(prior, sys.g(prior.mean), sys)
        assert np.allclose(start.mean, prior.mean, atol=1e-12) and not fallback

    def test_gauss_newton_fallback(self):
        # large positive residual on g = x^2 makes the curvature term swamp the precision
        sys = linear_system(np.eye(1), np.eye(1), np.zeros((1, 1)), 0.01 * np.eye(1))
        sys = type(sys)(
            name="square", n=1, m=1, l=1, f=sys.f, g=lambda x: np.asarray(x) ** 2, Q=sys.Q, R=sys.R,
            g_jac=lambda x: np.atleast_2d(2 * x), g_hess=lambda x: np.full((1, 1, 1), 2.0),
        )
        start, fallback = nano.init_update(Gaussian([1.0], [[1.0]]), np.array([5.0]), sys)
        assert fallback
        np.linalg.cholesky(start.cov)


class TestIteration:
    def setup_method(self):
        self.sys = scalar_identity()
        self.prior = Gaussian([0.0], [[1.0]])
        self.y = np.array([1.0])
        self.cfg = NanoConfig()

    def _iterate(self, mean, var, **kw):
        g = Gaussian([mean], [[var]])
        it = UpdateIterate(g, g.precision(), 0)
        return nano.update_iteration(it, self.prior, self.y, self.sys, self.cfg, EXACT, **kw)

    def test_from_prior(self):
        nxt = self._iterate(0.0, 1.0)
        V, V_x, V_xx = nxt.coefficients
        assert V == pytest.approx(1.0) and V_x[0] == pytest.approx(-1.0) and V_xx[0, 0] == pytest.approx(2.0)
        assert np.allclose(nxt.belief.mean, 0.5, atol=1e-12) and np.allclose(nxt.belief.cov, 0.5, atol=1e-12)
        assert nxt.k == 1

    def test_fixed_point(self):
        nxt = self._iterate(0.5, 0.5)
        assert np.allclose(nxt.belief.mean, 0.5, atol=1e-12) and np.allclose(nxt.belief.cov, 0.5, atol=1e-12)

    def test_zero_step(self):
        nxt = self._iterate(0.3, 0.7, step_size=0.0)
        assert np.allclose(nxt.belief.mean, 0.3) and np.allclose(nxt.precision.mat, 1.0)

    def test_iterate_invariants(self):
        b = make_system("growth", "gauss_a")
        prior = Gaussian(np.array([1.0, 2.0, 3.0]), 0.5 * np.eye(3))
        y = b.system.g(prior.mean) + 0.3
        g = Gaussian(prior.mean, 0.4 * np.eye(3))
        nxt = nano.update_iteration(UpdateIterate(g, g.precision(), 0), prior, y, b.system, self.cfg)
        V, _, V_xx = nxt.coefficients
        assert V >= 0 and np.allclose(V_xx, V_xx.T)
        assert np.allclose(nxt.precision.mat @ nxt.belief.cov, np.eye(3), atol=1e-8)

    @pytest.mark.parametrize("alpha", [1.0, 0.7, 0.3])
    @pytest.mark.parametrize("dim", [1, 2])
    def test_kalman_mean_is_stationary(self, alpha, dim):
        rng = np.random.default_rng(dim)
        H, R = rng.normal(size=(dim, dim)), random_spd(rng, dim)
        sys = linear_system(np.eye(dim), H, np.eye(dim), R)
        prior = Gaussian(rng.normal(size=dim), random_spd(rng, dim))
        y = rng.normal(size=dim)
        mean, cov = kalman_posterior(prior, H, R, y)
        g = Gaussian(mean, cov)
        cfg = NanoConfig(step_size=alpha)
        nxt = nano.update_iteration(UpdateIterate(g, g.precision(), 0), prior, y, sys, cfg, EXACT)
        assert np.allclose(nxt.belief.mean, mean, atol=1e-10)
        # the literal precision recursion lands on P^-1 + alpha H^T R^-1 H
        expected = np.linalg.inv(prior.cov) + alpha * H.T @ np.linalg.inv(R) @ H
        assert np.allclose(nxt.precision.mat, expected, rtol=1e-9, atol=1e-9)

    @pytest.mark.xfail(strict=True, reason="precision recursion has fixed point P^-1 + alpha H^T R^-1 H for alpha < 1")
    def test_kalman_posterior_fixed_point_for_partial_steps(self):
        sys = scalar_identity()
        mean, cov = kalman_posterior(self.prior, np.eye(1), np.eye(1), self.y)
        g = Gaussian(mean, cov)
        cfg = NanoConfig(step_size=0.5)
        nxt = nano.update_iteration(UpdateIterate(g, g.precision(), 0), self.prior, self.y, sys, cfg, EXACT)
        assert np.allclose(nxt.belief.cov, cov, atol=1e-12)

    def test_divergence_carries_iteration(self):
        b = make_system("robot", "gauss")
        tr = simulate(b.system, b.process_noise, b.measurement_noise, b.x0, b.inputs, 1, 0)
        cfg = NanoConfig(update_rule=SigmaPointRule.julier())
        prior = nano.predict(b.x0, tr.inputs[0], b.system, cfg.predict_rule, 0)
        with pytest.raises(UpdateDivergedError) as info:
            nano.update(prior, tr.measurements[0], b.system, cfg)
        assert info.value.k >= 1
        np.linalg.cholesky(info.value.last_belief.cov)


class TestStopping:
    @pytest.mark.parametrize("crit", list(StopCriterion))
    def test_identical(self, crit):
        g = Gaussian([0.0], [[1.0]])
        assert nano.stopping_met(g, g, NanoConfig(stop_criterion=crit, stop_threshold=1e-300))

    def test_cov_norm(self):
        gamma = 1e-3
        cfg = NanoConfig(stop_criterion="cov_norm", stop_threshold=gamma)
        assert not nano.stopping_met(Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[1 + 2 * gamma]]), cfg)

    def test_kl(self):
        cfg = NanoConfig(stop_threshold=0.4)
        assert not nano.stopping_met(Gaussian([0.0], [[1.0]]), Gaussian([1.0], [[1.0]]), cfg)
        assert nano.stopping_met(Gaussian([0.0], [[1.0]]), Gaussian([1.0], [[1.0]]), cfg.with_(stop_threshold=0.6))


class TestUpdate:
    def test_linear_prior_init_matches_kalman(self):
        rng = np.random.default_rng(4)
        H, R = rng.normal(size=(2, 2)), random_spd(rng, 2)
        sys = linear_system(np.eye(2), H, np.eye(2), R)
        prior = Gaussian(rng.normal(size=2), random_spd(rng, 2))
        y = rng.normal(size=2)
        rep = nano.update(prior, y, sys, NanoConfig(init_strategy="prior"), EXACT)
        mean, cov = kalman_posterior(prior, H, R, y)
        assert np.allclose(rep.posterior.mean, mean, atol=1e-8) and np.allclose(rep.posterior.cov, cov, atol=1e-8)
        assert rep.stop_reason is StopReason.THRESHOLD and rep.iterations <= 2

    def test_single_iteration_cap(self):
        sys = make_system("growth", "gauss_a").system
        prior = Gaussian(np.array([1.0, 2.0, 3.0]), np.eye(3))
        cfg = NanoConfig(max_update_iters=1, init_strategy="prior", stop_threshold=1e-300)
        rep = nano.update(prior, sys.g(prior.mean) + 1.0, sys, cfg)
        assert rep.iterations == 1 and rep.stop_reason is StopReason.MAX_ITERS

    def test_zero_residual_linear(self):
        rng = np.random.default_rng(2)
        H = rng.normal(size=(2, 2))
        sys = linear_system(np.eye(2), H, np.eye(2), np.eye(2))
        prior = Gaussian(rng.normal(size=2), random_spd(rng, 2))
        rep = nano.update(prior, H @ prior.mean, sys, NanoConfig())
        assert np.allclose(rep.posterior.mean, prior.mean, atol=1e-10)

    def test_one_dimensional_sigma_points_are_exact(self):
        # lambda = 3 - n = 2 in 1-D reproduces the moments the update needs
        sys = linear_system(np.eye(1), 2.0 * np.eye(1), np.eye(1), 0.3 * np.eye(1))
        prior = Gaussian([0.4], [[1.7]])
        y = np.array([-0.9])
        cfg = NanoConfig(update_rule=SigmaPointRule.van_der_merwe(), init_strategy="prior")
        rep = nano.update(prior, y, sys, cfg)
        mean, cov = kalman_posterior(prior, 2.0 * np.eye(1), 0.3 * np.eye(1), y)
        assert np.allclose(rep.posterior.mean, mean, atol=1e-8) and np.allclose(rep.posterior.cov, cov, atol=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2**31 - 1), st.sampled_from(["prior", "laplace_ekf"]))
    def test_affine_converges_to_kalman(self, n, seed, init):
        rng = np.random.default_rng(seed)
        m = rng.integers(1, 4)
        H, R, b = rng.normal(size=(m, n)), random_spd(rng, m), rng.normal(size=m)
        sys = linear_system(np.eye(n), H, np.eye(n), R, b)
        prior = Gaussian(rng.normal(size=n), random_spd(rng, n))
        y = rng.normal(size=m)
        rep = nano.update(prior, y, sys, NanoConfig(init_strategy=init), EXACT)
        mean, cov = kalman_posterior(prior, H, R, y, b)
        assert np.allclose(rep.posterior.mean, mean, atol=1e-8) and np.allclose(rep.posterior.cov, cov, atol=1e-8)


class TestStep:
    def test_linear_trajectory_matches_kalman(self):
        rng = np.random.default_rng(8)
        A = np.linalg.qr(rng.normal(size=(2, 2)))[0] * 0.97
        H, Q, R = rng.normal(size=(2, 2)), random_spd(rng, 2, 0.2), random_spd(rng, 2)
        sys = linear_system(A, H, Q, R)
        x0 = Gaussian(np.zeros(2), np.eye(2))
        tr = simulate(sys, GaussianNoise(Q), GaussianNoise(R), x0, lambda t: np.zeros(1), 100, 8)
        belief, kf = x0, x0
        for t in range(tr.horizon):
            belief = nano.nano_step(belief, tr.inputs[t], tr.measurements[t], sys, NanoConfig(), t, EXACT).posterior
            pred = Gaussian(A @ kf.mean, A @ kf.cov @ A.T + Q)
            kf = Gaussian(*kalman_posterior(pred, H, R, tr.measurements[t]))
            assert np.allclose(belief.mean, kf.mean, atol=1e-6) and np.allclose(belief.cov, kf.cov, atol=1e-6)

    def test_deterministic(self):
        b = make_system("growth", "gauss_a")
        tr = simulate(b.system, b.process_noise, b.measurement_noise, b.x0, b.inputs, 3, 1)
        one = nano.nano_step(b.x0, tr.inputs[0], tr.measurements[0], b.system)
        two = nano.nano_step(b.x0, tr.inputs[0], tr.measurements[0], b.system)
        assert np.array_equal(one.posterior.mean, two.posterior.mean)
        assert np.array_equal(one.posterior.cov, two.posterior.cov)

    def test_fallback_on_divergence(self):
        b = make_system("robot", "gauss")
        tr = simulate(b.system, b.process_noise, b.measurement_noise, b.x0, b.inputs, 1, 0)
        cfg = NanoConfig(update_rule=SigmaPointRule.julier())
        step, report = nano.nano_step_report(b.x0, tr.inputs[0], tr.measurements[0], b.system, cfg)
        start, _ = nano.init_update(step.prior, tr.measurements[0], b.system)
        assert step.fallback and report is None and step.iterations == cfg.max_update_iters
        assert np.array_equal(step.posterior.mean, start.mean)

    def test_oscillator_parity_single_realization(self):
        b = make_system("oscillator", "gauss_a")
        tr = simulate(b.system, b.process_noise, b.measurement_noise, b.x0, b.inputs, 100, 3)
        est = {"ekf": [], "nano": []}
        beliefs = {"ekf": b.x0, "nano": b.x0}
        for t in range(tr.horizon):
            beliefs["ekf"] = fb.ekf_step(beliefs["ekf"], tr.inputs[t], tr.measurements[t], b.system, t).posterior
            beliefs["nano"] = nano.nano_step(beliefs["nano"], tr.inputs[t], tr.measurements[t], b.system, t=t).posterior
            for k in est:
                est[k].append(beliefs[k].mean)
        rmse = {k: np.sqrt(np.mean((tr.states[1:] - np.array(v)) ** 2)) for k, v in est.items()}
        assert abs(rmse["nano"] - rmse["ekf"]) / rmse["ekf"] <= 0.05

    def test_oscillator_stops_on_threshold(self):
        b = make_system("oscillator", "gauss_a")
        cfg = NanoConfig()
        reasons = []
        for seed in range(10):
            tr = simulate(b.system, b.process_noise, b.measurement_noise, b.x0, b.inputs, 100, seed)
            belief = b.x0
            for t in range(tr.horizon):
                step, rep = nano.nano_step_report(belief, tr.inputs[t], tr.measurements[t], b.system, cfg, t)
                belief = step.posterior
                reasons.append(rep.stop_reason if rep is not None else None)
                if rep is not None:
                    assert rep.iterations <= cfg.max_update_iters
        share = np.mean([r is StopReason.THRESHOLD for r in reasons])
        assert share >= 0.95

    def test_kl_reported(self):
        prior = Gaussian([0.0], [[1.0]])
        rep = nano.update(prior, np.ones(1), scalar_identity(), NanoConfig(), EXACT)
        assert rep.final_kl == pytest.approx(kl_divergence(rep.posterior, rep.posterior), abs=1e-8)
        assert rep.jitter_events == 0
