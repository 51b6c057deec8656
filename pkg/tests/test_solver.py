"""Tests for the nonlinear least-squares solver."""

from dataclasses import replace

import numpy as np
import pytest

from robustnav.exceptions import GraphError
from robustnav.factors import B, C, P, V, Pose, PriorFactor, Values
from robustnav.graph import FactorGraph
from robustnav.lie import so3_exp
from robustnav.models import SolverAlgorithm, SolverConfig
from robustnav.robust import RobustKernel
from robustnav.solver import gradient_norm, optimize
from robustnav.state import ImuBias, NavState


class TestOptimize:
    """Tests for optimize."""

    def test_prior_only_graph(self):
        """Test a graph already at its prior mean converges without iterating."""
        graph = FactorGraph()
        graph.add_epoch(0)
        graph.add_prior(PriorFactor.from_sigmas(P(0), Pose(np.eye(3), np.ones(3)), [1.0]))
        graph.add_prior(PriorFactor.from_sigmas(V(0), np.zeros(3), [1.0]))
        graph.add_prior(PriorFactor.from_sigmas(B(0), ImuBias(), [1.0]))
        graph.add_prior(PriorFactor.from_sigmas(C(0), 5.0, [1.0]))
        values = Values()
        values.insert_epoch(0, NavState.at_rest(np.ones(3)), ImuBias(), 5.0)

        result, report = optimize(graph, values)

        assert report.iterations == 0
        assert report.converged
        assert result.clock(0) == 5.0

    def test_single_epoch_recovery(self, snapshot_graph, receiver):
        """Test LM recovers a receiver started 1 km away."""
        graph, initial, truth = snapshot_graph(receiver, offset=(800.0, -500.0, 300.0))

        result, report = optimize(graph, initial)

        assert report.converged
        assert report.iterations <= 10
        assert report.final_cost < report.initial_cost
        np.testing.assert_allclose(result.pose(0).position, truth[0], atol=1e-4)
        assert result.clock(0) == pytest.approx(100.0, abs=1e-4)

    def test_gauss_newton_matches_levenberg(self, snapshot_graph, receiver):
        """Test both algorithms reach the same minimum."""
        graph, initial, _ = snapshot_graph(receiver, epochs=2)

        lm, _ = optimize(graph, initial, SolverConfig())
        gn, report = optimize(graph, initial, SolverConfig(algorithm=SolverAlgorithm.GAUSS_NEWTON))

        assert report.converged
        for epoch in (0, 1):
            np.testing.assert_allclose(gn.pose(epoch).position, lm.pose(epoch).position, atol=1e-5)

    def test_cost_history_non_increasing(self, snapshot_graph, receiver):
        """Test accepted LM iterations never raise the cost."""
        graph, initial, _ = snapshot_graph(receiver, epochs=3)

        _, report = optimize(graph, initial)

        accepted = [record.cost for record in report.history if record.accepted]
        assert all(later <= earlier for earlier, later in zip(accepted, accepted[1:]))

    def test_gradient_vanishes_at_solution(self, snapshot_graph, receiver):
        """Test the weighted gradient is near zero after convergence."""
        graph, initial, _ = snapshot_graph(receiver)

        result, report = optimize(graph, initial)

        assert report.gradient_norm == pytest.approx(gradient_norm(graph, result))
        assert report.gradient_norm < 1e-3

    def test_iteration_cap(self, snapshot_graph, receiver):
        """Test running out of iterations is reported, not raised."""
        graph, initial, _ = snapshot_graph(receiver, offset=(5e4, 0.0, 0.0))

        _, report = optimize(graph, initial, SolverConfig(max_iterations=1))

        assert report.iterations == 1
        assert not report.converged

    def test_robust_outlier_downweighted(self, snapshot_graph, receiver, make_observations):
        """Test a Cauchy kernel keeps one gross outlier from dragging the fix."""
        graph, initial, truth = snapshot_graph(receiver, clock=0.0)
        clean = make_observations(receiver, count=9, seed=0)[8]
        outlier = replace(clean, pseudorange=clean.pseudorange + 500.0)

        graph.add_pseudorange_factor(0, outlier, RobustKernel.cauchy())
        robust, _ = optimize(graph, initial)

        plain_graph, plain_initial, _ = snapshot_graph(receiver, clock=0.0)
        plain_graph.add_pseudorange_factor(0, outlier)
        plain, _ = optimize(plain_graph, plain_initial)

        robust_error = np.linalg.norm(robust.pose(0).position - truth[0])
        plain_error = np.linalg.norm(plain.pose(0).position - truth[0])
        assert robust_error < plain_error

    def test_ungauged_graph_rejected(self):
        """Test solving a graph without a prior raises."""
        graph = FactorGraph()
        graph.add_epoch(0)

        with pytest.raises(GraphError):
            optimize(graph, Values())


POSE_SIGMAS = [0.05, 0.05, 0.05, 30.0, 30.0, 30.0]


def noisy_snapshots(start, make_observations, seed, epochs=5, sigma=2.0):
    """Pseudorange epochs whose priors and ranges all carry noise drawn at their stated sigmas."""
    generator = np.random.default_rng(seed)
    graph = FactorGraph()
    initial = Values()
    for epoch in range(epochs):
        position = np.asarray(start, dtype=float) + epoch * np.array([10.0, 0.0, 0.0])
        graph.add_epoch(epoch)
        pose_noise = generator.normal(size=6) * POSE_SIGMAS
        graph.add_prior(PriorFactor.from_sigmas(
            P(epoch), Pose(so3_exp(pose_noise[:3]), position + pose_noise[3:]), POSE_SIGMAS
        ))
        graph.add_prior(PriorFactor.from_sigmas(V(epoch), generator.normal(size=3), [1.0]))
        graph.add_prior(PriorFactor.from_sigmas(B(epoch), ImuBias.from_vector(0.1 * generator.normal(size=6)), [0.1]))
        graph.add_prior(PriorFactor.from_sigmas(C(epoch), 100.0 + 50.0 * generator.normal(), [50.0]))
        for observation in make_observations(position, clock=100.0, sigma=sigma, seed=seed + epoch):
            noisy = replace(observation, pseudorange=observation.pseudorange + sigma * generator.normal())
            graph.add_pseudorange_factor(epoch, noisy)
        initial.insert_epoch(epoch, NavState.at_rest(position + np.array([20.0, -10.0, 5.0])), ImuBias(), 0.0)
    return graph, initial


@pytest.mark.slow
class TestCostStatistics:
    """Tests for the final cost of quadratic solves on consistent noise."""

    def test_final_cost_matches_degrees_of_freedom(self, receiver, make_observations):
        """Test the pooled final cost lies within three sigma of half the degrees of freedom."""
        total_cost = 0.0
        dof = 0
        for seed in range(100):
            graph, initial = noisy_snapshots(receiver, make_observations, seed)
            result, report = optimize(graph, initial)
            system = graph.linearize(result)

            assert report.converged
            total_cost += report.final_cost
            dof += system.jacobian.shape[0] - system.dim

        assert dof == 100 * 5 * 8
        assert abs(total_cost - 0.5 * dof) <= 3.0 * np.sqrt(0.5 * dof)
