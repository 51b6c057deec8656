"""Tests for graph variables and factors."""

import math

import numpy as np
import pytest

from robustnav.exceptions import ConfigurationError, GraphError
from robustnav.factors import (
    B,
    C,
    P,
    V,
    BiasWalkFactor,
    ClockWalkFactor,
    GnssPositionFactor,
    ImuFactor,
    Pose,
    PriorFactor,
    PseudorangeFactor,
    Values,
    VariableKind,
    epoch_keys,
    pseudorange_jacobian,
    sqrt_information,
)
from robustnav.lie import so3_exp
from robustnav.models import ImuNoiseParams
from robustnav.preint import GravityVector, predict_state, preintegrate
from robustnav.robust import RobustKernel
from robustnav.state import ImuBias, ImuSample, NavState, SatObservation

RANGE = 2.0e7


def values_at(position, clock=0.0, epochs=(0,)):
    values = Values()
    for epoch in epochs:
        values.insert_epoch(epoch, NavState.at_rest(position), ImuBias(), clock)
    return values


def observation(pseudorange, sigma=1.0):
    return SatObservation(1, 0.0, np.array([RANGE, 0.0, 0.0]), pseudorange, sigma)


class TestKeys:
    """Tests for variable keys and values."""

    def test_elimination_order(self):
        """Test keys sort by epoch, then pose, velocity, bias, clock."""
        keys = sorted([C(1), P(1), B(0), V(0), P(0), C(0)])

        assert keys == [P(0), V(0), B(0), C(0), P(1), C(1)]
        assert [key.dim for key in epoch_keys(0)] == [6, 3, 6, 1]

    def test_negative_epoch(self):
        """Test negative epochs are rejected."""
        with pytest.raises(GraphError):
            P(-1)

    def test_missing_value(self):
        """Test reading an absent variable raises."""
        with pytest.raises(GraphError):
            Values().pose(0)

    def test_retract_and_local(self):
        """Test pose retraction and local difference are inverse."""
        pose = Pose(so3_exp(np.array([0.1, 0.2, -0.3])), np.array([1.0, 2.0, 3.0]))
        delta = np.array([0.01, -0.02, 0.03, 0.5, -0.5, 1.0])

        np.testing.assert_allclose(pose.local(pose.retract(delta)), delta, atol=1e-12)

    def test_values_retract_offsets(self):
        """Test Values.retract applies slices by offset."""
        values = values_at(np.zeros(3), clock=10.0)
        offsets = {C(0): 0}

        moved = values.retract(np.array([2.5]), offsets)

        assert moved.clock(0) == 12.5
        assert values.clock(0) == 10.0


class TestPseudorangeFactor:
    """Tests for pseudorange factors."""

    def test_zero_residual(self):
        """Test an exact range has zero error."""
        factor = PseudorangeFactor(0, observation(RANGE))

        np.testing.assert_allclose(factor.error(values_at(np.zeros(3))), [0.0])

    def test_clock_bias(self):
        """Test the clock term absorbs a common offset."""
        factor = PseudorangeFactor(0, observation(RANGE + 100.0))

        np.testing.assert_allclose(factor.error(values_at(np.zeros(3), clock=100.0)), [0.0], atol=1e-6)

    def test_robust_cost(self):
        """Test a Barron kernel is applied to the whitened residual."""
        values = values_at(np.zeros(3))
        robust = PseudorangeFactor(0, observation(RANGE + 2.0), RobustKernel.barron(0.0, 1.0))
        plain = PseudorangeFactor(0, observation(RANGE + 2.0))

        assert robust.cost(values) == pytest.approx(math.log(3.0))
        assert plain.cost(values) == pytest.approx(2.0)

    def test_irls_weight(self):
        """Test the IRLS weight scales the linearized error."""
        values = values_at(np.zeros(3))
        factor = PseudorangeFactor(0, observation(RANGE + 4.0), RobustKernel.huber(1.0))

        linear = factor.linearize(values)

        assert factor.irls_weight(values) == pytest.approx(0.25)
        assert linear.error[0] == pytest.approx(0.5 * 4.0)

    def test_jacobian_is_line_of_sight(self):
        """Test the gradient is the negated unit line of sight plus one."""
        gradient = pseudorange_jacobian(np.zeros(3), np.array([0.0, 3.0, 4.0]))

        np.testing.assert_allclose(gradient, [0.0, -0.6, -0.8, 1.0])

    def test_jacobian_finite_difference(self):
        """Test the pose and clock blocks against central differences."""
        sat = SatObservation(2, 0.0, np.array([1.2e7, -8.0e6, 1.9e7]), 2.4e7, 2.0)
        factor = PseudorangeFactor(0, sat)
        values = values_at(np.array([4.0e6, 1.0e6, 4.7e6]), clock=50.0)
        blocks = factor.jacobians(values)
        eps = 1e-3

        for column in range(6):
            step = np.zeros(6)
            step[column] = eps
            plus = Values({**{key: values[key] for key in values}, P(0): values.pose(0).retract(step)})
            minus = Values({**{key: values[key] for key in values}, P(0): values.pose(0).retract(-step)})
            numeric = (factor.error(plus) - factor.error(minus)) / (2 * eps)
            assert blocks[0][0, column] == pytest.approx(numeric[0], abs=1e-6)
        assert blocks[1][0, 0] == -1.0

    def test_satellite_at_receiver(self):
        """Test a degenerate line of sight raises."""
        with pytest.raises(GraphError):
            pseudorange_jacobian(np.zeros(3), np.zeros(3))


class TestGnssPositionFactor:
    """Tests for loosely coupled position factors."""

    def test_offset_residual(self):
        """Test the error is the measured minus estimated position."""
        factor = GnssPositionFactor(0, np.array([1.0, 2.0, 3.0]), np.eye(3))

        np.testing.assert_allclose(factor.error(values_at(np.zeros(3))), [1.0, 2.0, 3.0])

    def test_whitened_cost(self):
        """Test Mahalanobis whitening with a 4I covariance."""
        factor = GnssPositionFactor(0, np.array([2.0, 0.0, 0.0]), 4.0 * np.eye(3))

        assert factor.cost(values_at(np.zeros(3))) == pytest.approx(0.5)

    def test_invalid_covariance(self):
        """Test an indefinite covariance is rejected."""
        with pytest.raises(ConfigurationError):
            GnssPositionFactor(0, np.zeros(3), np.diag([1.0, -1.0, 1.0]))


class TestRandomWalkFactors:
    """Tests for bias and clock random walks."""

    def test_equal_biases(self):
        """Test equal biases give zero error."""
        factor = BiasWalkFactor(0, 1, ImuNoiseParams())

        np.testing.assert_allclose(factor.error(values_at(np.zeros(3), epochs=(0, 1))), np.zeros(6))

    def test_clock_step_cost(self):
        """Test a 5 m clock step with unit sigma costs 12.5."""
        values = values_at(np.zeros(3), epochs=(0, 1))
        values[C(1)] = 5.0

        assert ClockWalkFactor(0, 1, 1.0).cost(values) == pytest.approx(12.5)

    def test_clock_sigma_positive(self):
        """Test a zero clock sigma is rejected."""
        with pytest.raises(ConfigurationError):
            ClockWalkFactor(0, 1, 0.0)


class TestPriorFactor:
    """Tests for prior factors."""

    def test_zero_at_mean(self):
        """Test a prior has zero error at its mean."""
        mean = Pose(so3_exp(np.array([0.1, 0.0, 0.2])), np.array([1.0, 2.0, 3.0]))
        prior = PriorFactor.from_sigmas(P(0), mean, [0.1] * 6)
        values = Values({P(0): mean})

        np.testing.assert_allclose(prior.error(values), np.zeros(6), atol=1e-12)
        assert prior.cost(values) == pytest.approx(0.0, abs=1e-20)

    def test_multi_variable_shape_checked(self):
        """Test a prior with the wrong information size is rejected."""
        with pytest.raises(GraphError):
            PriorFactor({C(0): 0.0, V(0): np.zeros(3)}, np.eye(3))

    def test_non_positive_sigma(self):
        """Test non-positive prior sigmas are rejected."""
        with pytest.raises(ConfigurationError):
            PriorFactor.from_sigmas(C(0), 0.0, [0.0])

    def test_sqrt_information_whitens(self):
        """Test the square-root information whitens the covariance."""
        covariance = np.array([[4.0, 1.0], [1.0, 2.0]])
        root = sqrt_information(covariance)

        np.testing.assert_allclose(root @ covariance @ root.T, np.eye(2), atol=1e-12)


class TestImuFactor:
    """Tests for preintegrated IMU factors."""

    def _factor(self):
        samples = [ImuSample(k * 0.01, np.array([0.0, 0.0, 0.2]), np.array([0.3, 0.0, 9.81])) for k in range(100)]
        pim = preintegrate(samples, 0.0, 1.0, ImuBias(), ImuNoiseParams())
        return ImuFactor(0, 1, pim, GravityVector.enu()), pim

    def _values(self, state_i, pim):
        state_j = predict_state(state_i, ImuBias(), pim, GravityVector.enu())
        values = Values()
        values.insert_epoch(0, state_i, ImuBias(), 0.0)
        values.insert_epoch(1, state_j, ImuBias(), 0.0)
        return values

    def test_zero_cost_at_prediction(self):
        """Test the cost vanishes for consistent states."""
        factor, pim = self._factor()
        values = self._values(NavState(np.zeros(3), np.array([1.0, 0.0, 0.0])), pim)

        assert factor.cost(values) == pytest.approx(0.0, abs=1e-12)

    def test_cost_positive_when_perturbed(self):
        """Test moving the second state raises the cost."""
        factor, pim = self._factor()
        values = self._values(NavState(np.zeros(3), np.array([1.0, 0.0, 0.0])), pim)
        values[V(1)] = values.velocity(1) + np.array([0.1, 0.0, 0.0])

        assert factor.cost(values) > 0.0

    def test_invariant_to_yaw_and_translation(self):
        """Test the cost is unchanged by a rotation about gravity plus a shift."""
        factor, pim = self._factor()
        state_i = NavState(np.array([3.0, 1.0, 0.0]), np.array([1.0, 0.5, 0.0]))
        values = self._values(state_i, pim)
        values[V(1)] = values.velocity(1) + np.array([0.2, -0.1, 0.05])
        rotation = so3_exp(np.array([0.0, 0.0, 0.9]))
        shift = np.array([100.0, -50.0, 2.0])

        moved = Values()
        for epoch in (0, 1):
            pose = values.pose(epoch)
            moved.insert_epoch(
                epoch,
                NavState(rotation @ pose.position + shift, rotation @ values.velocity(epoch), rotation @ pose.rotation),
                ImuBias(),
                0.0,
            )

        assert factor.cost(moved) == pytest.approx(factor.cost(values), rel=1e-8)

    def test_consecutive_epochs_only(self):
        """Test IMU factors must link consecutive epochs."""
        _, pim = self._factor()

        with pytest.raises(GraphError):
            ImuFactor(0, 2, pim, GravityVector.enu())

    def test_keys(self):
        """Test the factor touches pose, velocity and bias of epoch i and pose, velocity of j."""
        factor, _ = self._factor()

        assert factor.keys == (P(0), V(0), B(0), P(1), V(1))
        assert factor.epochs == (0, 1)
        assert all(key.kind != VariableKind.CLOCK for key in factor.keys)
