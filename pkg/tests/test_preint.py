"""Tests for IMU preintegration."""

import numpy as np
import pytest

from robustnav.exceptions import ConfigurationError, IntegrationError
from robustnav.lie import so3_exp, so3_log
from robustnav.models import ImuNoiseParams
from robustnav.preint import (
    GravityVector,
    PreintegratedImu,
    bias_correct,
    dead_reckon,
    imu_residual,
    imu_residual_jacobians,
    integrate_sample,
    predict_state,
    preintegrate,
    split_by_epochs,
)
from robustnav.state import ImuBias, ImuSample, NavState

NOISE = ImuNoiseParams()


def constant_samples(gyro, accel, count, dt, start=0.0):
    return [ImuSample(start + k * dt, np.asarray(gyro, float), np.asarray(accel, float)) for k in range(count)]


def varied_samples(count=50, dt=0.01, seed=5):
    generator = np.random.default_rng(seed)
    return [
        ImuSample(k * dt, generator.normal(0.0, 0.3, 3), generator.normal([0.0, 0.0, 9.81], 0.5))
        for k in range(count)
    ]


def smooth_trajectory_samples(seed, duration=10.0, dt=1e-4):
    generator = np.random.default_rng(seed)
    times = np.arange(int(round(duration / dt))) * dt
    phase = generator.uniform(0.0, 2.0 * np.pi, (2, 3))
    freq = generator.uniform(0.05, 0.5, (2, 3))
    waves = np.sin(2.0 * np.pi * freq[:, None, :] * times[None, :, None] + phase[:, None, :])
    gyro = generator.normal(0.0, 0.05, 3) + 0.2 * waves[0]
    accel = np.array([0.0, 0.0, 9.81]) + generator.normal(0.0, 0.3, 3) + waves[1]
    return [ImuSample(t, g, a) for t, g, a in zip(times, gyro, accel)]


class TestIntegrateSample:
    """Tests for single-sample integration."""

    def test_zero_motion(self):
        """Test zero readings leave the deltas at identity."""
        acc = PreintegratedImu.start()
        for sample in constant_samples([0, 0, 0], [0, 0, 0], 10, 0.01):
            acc = integrate_sample(acc, sample, 0.01, NOISE)

        np.testing.assert_allclose(acc.delta_R, np.eye(3))
        np.testing.assert_allclose(acc.delta_v, np.zeros(3))
        np.testing.assert_allclose(acc.delta_p, np.zeros(3))
        assert acc.sample_count == 10
        assert acc.dt_total == pytest.approx(0.1)

    def test_constant_rotation(self):
        """Test a constant yaw rate composes to the closed-form rotation."""
        omega, dt, steps = 0.5, 0.01, 100

        pim = preintegrate(constant_samples([0, 0, omega], [0, 0, 0], steps, dt), 0.0, 1.0, ImuBias(), NOISE)

        np.testing.assert_allclose(pim.delta_R, so3_exp(np.array([0.0, 0.0, omega * steps * dt])), atol=1e-9)

    def test_constant_acceleration(self):
        """Test constant specific force integrates to the kinematic limits."""
        a, total = 2.0, 3.0
        dt = total / 1000

        pim = preintegrate(constant_samples([0, 0, 0], [a, 0, 0], 1000, dt), 0.0, total, ImuBias(), NOISE)

        assert pim.delta_v[0] == pytest.approx(a * total, rel=2e-3)
        assert pim.delta_p[0] == pytest.approx(0.5 * a * total ** 2, rel=2e-3)

    @pytest.mark.parametrize("dt", [0.0, -0.01, 1.5, float("nan")])
    def test_bad_step(self, dt):
        """Test out-of-range steps are rejected."""
        sample = ImuSample(0.0, np.zeros(3), np.zeros(3))

        with pytest.raises(IntegrationError):
            integrate_sample(PreintegratedImu.start(), sample, dt, NOISE)

    def test_covariance_grows_and_stays_symmetric(self):
        """Test the preintegrated covariance is symmetric and positive definite."""
        pim = preintegrate(varied_samples(), 0.0, 0.5, ImuBias(), NOISE)

        np.testing.assert_allclose(pim.cov, pim.cov.T)
        assert np.all(np.linalg.eigvalsh(pim.factor_covariance()) > 0)
        assert np.trace(pim.cov) > 0

    def test_covariance_trace_non_decreasing(self):
        """Test every integrated sample adds uncertainty."""
        acc = PreintegratedImu.start()
        traces = [0.0]
        for sample in constant_samples([0, 0, 0], [0.3, -0.2, 9.81], 300, 0.01):
            acc = integrate_sample(acc, sample, 0.01, NOISE)
            traces.append(float(np.trace(acc.cov)))

        assert np.all(np.diff(traces) > 0)

    @pytest.mark.slow
    def test_rotation_stays_orthonormal(self):
        """Test the rotation delta stays a rotation over a million steps."""
        acc = PreintegratedImu.start()
        sample = ImuSample(0.0, np.array([0.7, -1.1, 0.4]), np.array([0.2, 0.1, 9.81]))
        for _ in range(1_000_000):
            acc = integrate_sample(acc, sample, 1e-3, NOISE)

        np.testing.assert_allclose(acc.delta_R.T @ acc.delta_R, np.eye(3), atol=1e-12)
        assert np.linalg.det(acc.delta_R) == pytest.approx(1.0, abs=1e-12)
        assert acc.sample_count == 1_000_000


class TestPreintegrate:
    """Tests for interval integration."""

    def test_empty_interval(self):
        """Test an interval without samples raises."""
        with pytest.raises(IntegrationError):
            preintegrate(constant_samples([0, 0, 0], [0, 0, 0], 5, 0.01), 1.0, 2.0, ImuBias(), NOISE)

    def test_split_by_epochs(self):
        """Test samples are grouped into half-open keyframe intervals."""
        samples = constant_samples([0, 0, 0], [0, 0, 0], 30, 0.1)

        groups = split_by_epochs(samples, [0.0, 1.0, 2.0, 3.0])

        assert [len(group) for group in groups] == [10, 10, 10]
        assert groups[1][0].timestamp == pytest.approx(1.0)


class TestPrediction:
    """Tests for state prediction."""

    def test_identity_without_gravity(self):
        """Test an empty preintegration leaves a resting state unchanged."""
        state = NavState.at_rest([1.0, 2.0, 3.0])

        predicted = predict_state(state, ImuBias(), PreintegratedImu.start(), GravityVector.zero())

        np.testing.assert_allclose(predicted.position, state.position)
        np.testing.assert_allclose(predicted.velocity, np.zeros(3))

    def test_free_fall(self):
        """Test zero deltas over one second produce free fall."""
        pim = PreintegratedImu(dt_total=1.0)

        predicted = predict_state(NavState.at_rest(np.zeros(3)), ImuBias(), pim, GravityVector.enu())

        np.testing.assert_allclose(predicted.position, [0.0, 0.0, -4.905])
        np.testing.assert_allclose(predicted.velocity, [0.0, 0.0, -9.81])

    def test_resting_body(self):
        """Test a body measuring minus gravity stays at rest."""
        samples = constant_samples([0, 0, 0], [0, 0, 9.81], 200, 0.01)
        pim = preintegrate(samples, 0.0, 2.0, ImuBias(), NOISE)

        predicted = predict_state(NavState.at_rest(np.zeros(3)), ImuBias(), pim, GravityVector.enu())

        assert np.linalg.norm(predicted.position) < 1e-6
        assert np.linalg.norm(predicted.velocity) < 1e-6

    def test_matches_dead_reckoning(self):
        """Test preintegrated prediction equals sample-by-sample integration."""
        samples = varied_samples()
        state = NavState(np.array([5.0, -3.0, 1.0]), np.array([2.0, 1.0, 0.0]), so3_exp(np.array([0.1, -0.2, 0.7])))
        pim = preintegrate(samples, 0.0, 0.5, ImuBias(), NOISE)

        predicted = predict_state(state, ImuBias(), pim, GravityVector.enu())
        reckoned = dead_reckon(state, samples, ImuBias(), GravityVector.enu(), 0.5)

        np.testing.assert_allclose(predicted.position, reckoned.position, atol=1e-9)
        np.testing.assert_allclose(predicted.velocity, reckoned.velocity, atol=1e-9)
        np.testing.assert_allclose(predicted.orientation, reckoned.orientation, atol=1e-9)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_dense_dead_reckoning_oracle(self, seed):
        """Test a 10 s preintegration matches world-frame integration at 10 kHz."""
        samples = smooth_trajectory_samples(seed)
        generator = np.random.default_rng(100 + seed)
        state = NavState(generator.normal(0.0, 100.0, 3), generator.normal(0.0, 5.0, 3), so3_exp(generator.normal(0.0, 1.0, 3)))
        gravity = GravityVector.enu()

        predicted = predict_state(state, ImuBias(), preintegrate(samples, 0.0, 10.0, ImuBias(), NOISE), gravity)
        reckoned = dead_reckon(state, samples, ImuBias(), gravity, 10.0)

        assert np.linalg.norm(predicted.position - reckoned.position) < 1e-6
        assert np.linalg.norm(so3_log(predicted.orientation.T @ reckoned.orientation)) < 1e-8

    def test_gravity_magnitude_checked(self):
        """Test implausible gravity is rejected outside test mode."""
        with pytest.raises(ConfigurationError):
            GravityVector(np.array([0.0, 0.0, -5.0]))


class TestBiasCorrection:
    """Tests for first-order bias updates."""

    def test_unchanged_bias(self):
        """Test a zero bias change returns the stored deltas."""
        pim = preintegrate(varied_samples(), 0.0, 0.5, ImuBias(), NOISE)

        corrected = bias_correct(pim, ImuBias())

        np.testing.assert_array_equal(corrected.delta_v, pim.delta_v)

    def test_accel_bias_shift(self):
        """Test an accelerometer bias shift matches re-integration."""
        total = 2.0
        samples = constant_samples([0, 0, 0], [0.5, 0, 0], 200, 0.01)
        shifted = ImuBias(accel_bias=np.array([1e-3, 0.0, 0.0]))

        corrected = bias_correct(preintegrate(samples, 0.0, total, ImuBias(), NOISE), shifted)
        reintegrated = preintegrate(samples, 0.0, total, shifted, NOISE)

        assert corrected.delta_v[0] == pytest.approx(reintegrated.delta_v[0], rel=1e-2)
        assert corrected.delta_p[0] == pytest.approx(reintegrated.delta_p[0], rel=1e-2)
        assert corrected.delta_v[0] - 0.5 * total == pytest.approx(-1e-3 * total, rel=1e-2)

    def test_gyro_bias_shift(self):
        """Test a small gyro bias shift is close to re-integration."""
        samples = varied_samples()
        shifted = ImuBias(gyro_bias=np.array([2e-4, -1e-4, 3e-4]))

        corrected = bias_correct(preintegrate(samples, 0.0, 0.5, ImuBias(), NOISE), shifted)
        reintegrated = preintegrate(samples, 0.0, 0.5, shifted, NOISE)

        np.testing.assert_allclose(corrected.delta_R, reintegrated.delta_R, atol=1e-6)
        np.testing.assert_allclose(corrected.delta_v, reintegrated.delta_v, atol=1e-5)

    def test_error_is_second_order(self):
        """Test halving the bias change cuts the first-order correction error about fourfold."""
        samples = varied_samples()
        pim = preintegrate(samples, 0.0, 0.5, ImuBias(), NOISE)
        shift = np.array([0.02, -0.01, 0.015, 0.05, 0.02, -0.04])

        def correction_errors(scale):
            bias = ImuBias.from_vector(scale * shift)
            corrected = bias_correct(pim, bias)
            reintegrated = preintegrate(samples, 0.0, 0.5, bias, NOISE)
            return np.array([
                np.linalg.norm(so3_log(corrected.delta_R.T @ reintegrated.delta_R)),
                np.linalg.norm(corrected.delta_v - reintegrated.delta_v),
                np.linalg.norm(corrected.delta_p - reintegrated.delta_p),
            ])

        full = correction_errors(1.0)
        half = correction_errors(0.5)

        assert np.all(full > 0)
        assert np.all(full >= 3.5 * half)


class TestResidual:
    """Tests for the IMU residual and its Jacobians."""

    def _setup(self):
        samples = varied_samples()
        pim = preintegrate(samples, 0.0, 0.5, ImuBias(), NOISE)
        state_i = NavState(np.array([5.0, -3.0, 1.0]), np.array([2.0, 1.0, 0.0]), so3_exp(np.array([0.1, -0.2, 0.7])))
        return pim, state_i

    def test_zero_for_prediction(self):
        """Test the residual vanishes at the predicted state."""
        pim, state_i = self._setup()
        state_j = predict_state(state_i, ImuBias(), pim, GravityVector.enu())

        residual = imu_residual(state_i, state_j, ImuBias(), pim, GravityVector.enu())

        np.testing.assert_allclose(residual, np.zeros(9), atol=1e-10)

    def test_position_offset(self):
        """Test a position offset appears in the position block."""
        samples = constant_samples([0, 0, 0], [0, 0, 9.81], 100, 0.01)
        pim = preintegrate(samples, 0.0, 1.0, ImuBias(), NOISE)
        state_i = NavState.at_rest(np.zeros(3))
        moved = NavState.at_rest(np.array([1.0, 0.0, 0.0]))

        residual = imu_residual(state_i, moved, ImuBias(), pim, GravityVector.enu())

        np.testing.assert_allclose(residual[6:9], [1.0, 0.0, 0.0], atol=1e-9)

    def test_jacobians_match_finite_differences(self):
        """Test the analytic Jacobians against central differences."""
        pim, state_i = self._setup()
        gravity = GravityVector.enu()
        state_j = predict_state(state_i, ImuBias(), pim, gravity)
        state_j = NavState(
            state_j.position + np.array([0.3, -0.2, 0.1]),
            state_j.velocity + np.array([0.05, 0.0, -0.1]),
            state_j.orientation @ so3_exp(np.array([0.02, 0.01, -0.03])),
        )
        bias = ImuBias(gyro_bias=np.array([1e-3, -2e-3, 5e-4]), accel_bias=np.array([0.02, 0.01, -0.01]))
        jacobians = imu_residual_jacobians(state_i, state_j, bias, pim, gravity)
        eps = 1e-6

        def residual(si, sj, b):
            return imu_residual(si, sj, b, pim, gravity)

        def perturb_pose(state, delta):
            return NavState(state.position + delta[3:6], state.velocity, state.orientation @ so3_exp(delta[0:3]))

        def perturb_vel(state, delta):
            return NavState(state.position, state.velocity + delta, state.orientation)

        def numeric(fn, dim):
            columns = []
            for k in range(dim):
                step = np.zeros(dim)
                step[k] = eps
                columns.append((fn(step) - fn(-step)) / (2 * eps))
            return np.column_stack(columns)

        expected = {
            "pose_i": numeric(lambda d: residual(perturb_pose(state_i, d), state_j, bias), 6),
            "vel_i": numeric(lambda d: residual(perturb_vel(state_i, d), state_j, bias), 3),
            "bias_i": numeric(
                lambda d: residual(state_i, state_j, ImuBias.from_vector(bias.as_vector() + d)), 6
            ),
            "pose_j": numeric(lambda d: residual(state_i, perturb_pose(state_j, d), bias), 6),
            "vel_j": numeric(lambda d: residual(state_i, perturb_vel(state_j, d), bias), 3),
        }
        for name, block in expected.items():
            np.testing.assert_allclose(getattr(jacobians, name), block, atol=1e-6, err_msg=name)
        assert jacobians.stacked().shape == (9, 24)
