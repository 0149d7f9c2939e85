import numpy as np
import pytest

from emorf2 import (
    GaussianBelief,
    MeasurementModel,
    NumericalError,
    ProcessModel,
    kalman_update,
    measurement_moments,
    posterior_residual_moment,
    predict,
    sigma_points,
)
from emorf2.simulator import sensor_positions, tdoa_measurement

from _reference import (
    exact_kalman_step,
    mc_measurement_moments,
    mc_residual_moment,
    random_spd,
    rel_err,
)


def random_belief(rng, n, scale=1.0):
    return GaussianBelief(rng.standard_normal(n), random_spd(rng, n, scale))


class TestSigmaPoints:
    def test_scenario_weights(self):
        # n=5, alpha=1, kappa=0: lam = 0, center mean weight 0, center cov weight 2
        belief = GaussianBelief(np.zeros(5), np.eye(5))
        sp = sigma_points(belief, alpha=1.0, beta=2.0, kappa=0.0)
        assert sp.mean_weights[0] == 0.0
        assert sp.cov_weights[0] == 2.0
        np.testing.assert_allclose(sp.mean_weights[1:], 0.1)
        assert abs(sp.mean_weights.sum() - 1.0) < 1e-12

    def test_zero_covariance_rejected(self):
        belief = GaussianBelief(np.zeros(3), np.zeros((3, 3)))
        with pytest.raises(NumericalError):
            sigma_points(belief)

    def test_set_reproduces_source_moments(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 5, 8):
            belief = random_belief(rng, n, scale=3.0)
            sp = sigma_points(belief, alpha=1.0, beta=2.0, kappa=0.0)
            assert sp.points.shape == (2 * n + 1, n)
            mean = sp.mean_weights @ sp.points
            assert np.abs(mean - belief.mean).max() < 1e-12 * max(1, np.abs(belief.mean).max())
            dev = sp.points - mean
            scatter = (dev.T * sp.cov_weights) @ dev
            assert rel_err(scatter, belief.cov) < 1e-10


class TestPredict:
    def test_identity_zero_noise_is_noop(self):
        rng = np.random.default_rng(1)
        belief = random_belief(rng, 4)
        model = ProcessModel(transition=lambda x: x, process_noise_cov=np.zeros((4, 4)))
        out = predict(belief, model)
        np.testing.assert_allclose(out.mean, belief.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, belief.cov, atol=1e-12)

    def test_linear_model_matches_closed_form(self):
        rng = np.random.default_rng(2)
        n = 5
        a_mat = rng.standard_normal((n, n))
        q = random_spd(rng, n, 0.5)
        belief = random_belief(rng, n)
        model = ProcessModel(transition=lambda x: a_mat @ x, process_noise_cov=q)
        out = predict(belief, model)
        np.testing.assert_allclose(out.mean, a_mat @ belief.mean, rtol=1e-10)
        np.testing.assert_allclose(out.cov, a_mat @ belief.cov @ a_mat.T + q, rtol=1e-9)

    def test_constant_map_gives_process_noise(self):
        rng = np.random.default_rng(3)
        belief = random_belief(rng, 3)
        c = np.array([1.0, -2.0, 0.5])
        q = random_spd(rng, 3)
        model = ProcessModel(transition=lambda x: c, process_noise_cov=q)
        out = predict(belief, model)
        np.testing.assert_allclose(out.mean, c, atol=1e-12)
        np.testing.assert_allclose(out.cov, q, atol=1e-10)

    def test_non_finite_propagation_raises(self):
        belief = GaussianBelief(np.zeros(2), np.eye(2))
        model = ProcessModel(
            transition=lambda x: np.array([np.inf, 0.0]), process_noise_cov=np.eye(2)
        )
        with pytest.raises(NumericalError):
            predict(belief, model)


class TestMeasurementMoments:
    def test_identity_observation(self):
        rng = np.random.default_rng(4)
        belief = random_belief(rng, 3)
        model = MeasurementModel(observation=lambda x: x, nominal_noise_cov=np.eye(3))
        mom = measurement_moments(belief, model)
        np.testing.assert_allclose(mom.mu, belief.mean, atol=1e-12)
        np.testing.assert_allclose(mom.U, belief.cov, rtol=1e-10)
        np.testing.assert_allclose(mom.C, belief.cov, rtol=1e-10)

    def test_linear_observation_matches_closed_form(self):
        rng = np.random.default_rng(5)
        n, m = 5, 3
        h_mat = rng.standard_normal((m, n))
        belief = random_belief(rng, n)
        model = MeasurementModel(observation=lambda x: h_mat @ x, nominal_noise_cov=np.eye(m))
        mom = measurement_moments(belief, model)
        np.testing.assert_allclose(mom.mu, h_mat @ belief.mean, rtol=1e-10)
        np.testing.assert_allclose(mom.U, h_mat @ belief.cov @ h_mat.T, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(mom.C, belief.cov @ h_mat.T, rtol=1e-9, atol=1e-12)

    def test_tdoa_against_monte_carlo(self):
        # representative predictive belief for the tracking scenario
        positions = sensor_positions(5)
        model = MeasurementModel(
            observation=lambda x: tdoa_measurement(x, positions),
            nominal_noise_cov=np.eye(4),
        )
        mean = np.array([40.0, 1.0, -30.0, -1.0, -0.05])
        cov = np.diag([9.0, 1.0, 9.0, 1.0, 1e-4])
        belief = GaussianBelief(mean, cov)
        mom = measurement_moments(belief, model)
        rng = np.random.default_rng(99)
        from _reference import tdoa_batch

        mu_mc, u_mc, c_mc = mc_measurement_moments(
            rng, mean, cov, lambda x: tdoa_batch(x, positions), n_samples=1_000_000
        )
        assert rel_err(mom.mu, mu_mc) < 0.02
        assert rel_err(mom.U, u_mc) < 0.02
        assert rel_err(mom.C, c_mc) < 0.02


class TestKalmanUpdate:
    def test_uninformative_measurement_keeps_prior(self):
        rng = np.random.default_rng(6)
        belief = random_belief(rng, 4)
        model = MeasurementModel(observation=lambda x: x[:2], nominal_noise_cov=np.eye(2))
        mom = measurement_moments(belief, model)
        huge = 1e12 * np.eye(2)
        out = kalman_update(belief, np.array([5.0, -3.0]), mom, huge)
        assert rel_err(out.mean, belief.mean) < 1e-6
        assert rel_err(out.cov, belief.cov) < 1e-6

    def test_linear_gaussian_matches_textbook_update(self):
        rng = np.random.default_rng(7)
        n, m = 4, 3
        h_mat = rng.standard_normal((m, n))
        r = random_spd(rng, m)
        belief = random_belief(rng, n)
        y = rng.standard_normal(m)
        model = MeasurementModel(observation=lambda x: h_mat @ x, nominal_noise_cov=r)
        mom = measurement_moments(belief, model)
        out = kalman_update(belief, y, mom, r)
        want_mean, want_cov = exact_kalman_step(
            belief.mean, belief.cov, y, np.eye(n), np.zeros((n, n)), h_mat, r
        )
        np.testing.assert_allclose(out.mean, want_mean, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(out.cov, want_cov, rtol=1e-9, atol=1e-12)

    def test_zero_innovation_keeps_mean_shrinks_cov(self):
        rng = np.random.default_rng(8)
        belief = random_belief(rng, 3)
        model = MeasurementModel(observation=lambda x: x, nominal_noise_cov=np.eye(3))
        mom = measurement_moments(belief, model)
        out = kalman_update(belief, mom.mu, mom, np.eye(3))
        np.testing.assert_allclose(out.mean, belief.mean, atol=1e-10)
        # P+ <= P- in the Loewner order
        assert np.linalg.eigvalsh(belief.cov - out.cov).min() > -1e-10

    def test_singular_innovation_reports_condition(self):
        from emorf2 import MeasurementMoments

        belief = GaussianBelief(np.zeros(2), np.eye(2))
        mom = MeasurementMoments(mu=np.zeros(2), U=np.eye(2), C=np.eye(2))
        with pytest.raises(NumericalError, match="condition"):
            kalman_update(belief, np.zeros(2), mom, -1.0 * np.eye(2))


class TestPosteriorResidualMoment:
    def test_identity_observation_at_mean(self):
        rng = np.random.default_rng(9)
        belief = random_belief(rng, 3)
        model = MeasurementModel(observation=lambda x: x, nominal_noise_cov=np.eye(3))
        w = posterior_residual_moment(belief, model, belief.mean)
        np.testing.assert_allclose(w, belief.cov, rtol=1e-10, atol=1e-12)

    def test_linear_observation_closed_form(self):
        rng = np.random.default_rng(10)
        n, m = 4, 2
        h_mat = rng.standard_normal((m, n))
        belief = random_belief(rng, n)
        y = rng.standard_normal(m)
        model = MeasurementModel(observation=lambda x: h_mat @ x, nominal_noise_cov=np.eye(m))
        w = posterior_residual_moment(belief, model, y)
        r = y - h_mat @ belief.mean
        want = np.outer(r, r) + h_mat @ belief.cov @ h_mat.T
        np.testing.assert_allclose(w, want, rtol=1e-9, atol=1e-12)

    def test_tdoa_against_monte_carlo(self):
        positions = sensor_positions(5)
        model = MeasurementModel(
            observation=lambda x: tdoa_measurement(x, positions),
            nominal_noise_cov=np.eye(4),
        )
        mean = np.array([10.0, 1.0, -5.0, -1.0, -0.05])
        cov = np.diag([4.0, 0.5, 4.0, 0.5, 1e-4])
        belief = GaussianBelief(mean, cov)
        y = tdoa_measurement(mean, positions) + np.array([3.0, -2.0, 1.0, 10.0])
        w = posterior_residual_moment(belief, model, y)
        rng = np.random.default_rng(123)
        from _reference import tdoa_batch

        w_mc = mc_residual_moment(
            rng, mean, cov, lambda x: tdoa_batch(x, positions), y, n_samples=1_000_000
        )
        assert rel_err(w, w_mc) < 0.02

    def test_residual_moment_dominates_offset_outer_product(self):
        rng = np.random.default_rng(11)
        positions = sensor_positions(4)
        model = MeasurementModel(
            observation=lambda x: tdoa_measurement(x, positions),
            nominal_noise_cov=np.eye(3),
        )
        for _ in range(20):
            mean = np.array([rng.uniform(-50, 50), 1.0, rng.uniform(-50, 50), -1.0, 0.0])
            belief = GaussianBelief(mean, np.diag([4.0, 0.5, 4.0, 0.5, 1e-4]))
            y = rng.standard_normal(3) * 10
            w = posterior_residual_moment(belief, model, y)
            sp = sigma_points(belief)
            mu_hat = sp.mean_weights @ np.array([model.observation(p) for p in sp.points])
            gap = w - np.outer(y - mu_hat, y - mu_hat)
            assert np.linalg.eigvalsh(gap).min() > -1e-10


class TestLinearGaussianEquivalence:
    def test_fifty_step_filter_matches_exact_kalman(self):
        # full predict/update cycles on a random stable linear-Gaussian SSM
        rng = np.random.default_rng(12)
        n, m = 5, 3
        a_mat = rng.standard_normal((n, n))
        a_mat *= 0.9 / np.max(np.abs(np.linalg.eigvals(a_mat)))
        h_mat = rng.standard_normal((m, n))
        q = random_spd(rng, n, 0.1)
        r = random_spd(rng, m, 0.5)
        process = ProcessModel(transition=lambda x: a_mat @ x, process_noise_cov=q)
        meas = MeasurementModel(observation=lambda x: h_mat @ x, nominal_noise_cov=r)

        belief = GaussianBelief(rng.standard_normal(n), random_spd(rng, n))
        kf_mean, kf_cov = belief.mean.copy(), belief.cov.copy()
        x = rng.standard_normal(n)
        for _ in range(50):
            x = a_mat @ x + np.linalg.cholesky(q) @ rng.standard_normal(n)
            y = h_mat @ x + np.linalg.cholesky(r) @ rng.standard_normal(m)
            predicted = predict(belief, process)
            mom = measurement_moments(predicted, meas)
            belief = kalman_update(predicted, y, mom, r)
            kf_mean, kf_cov = exact_kalman_step(kf_mean, kf_cov, y, a_mat, q, h_mat, r)
            assert np.abs(belief.mean - kf_mean).max() < 1e-8
            assert np.abs(belief.cov - kf_cov).max() < 1e-8
