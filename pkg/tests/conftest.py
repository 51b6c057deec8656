"""Pytest configuration and fixtures for RobustNav tests."""

import numpy as np
import pytest

from robustnav.factors import B, C, P, V, Pose, PriorFactor, Values
from robustnav.fileio import (
    CONFIG_FILE,
    IMU_FILE,
    OBS_FILE,
    TRUTH_FILE,
    write_imu_csv,
    write_obs_csv,
    write_scenario_config,
    write_solution_csv,
)
from robustnav.fusion import Dataset, compare
from robustnav.geo import FrameRef, GeodeticCoord
from robustnav.graph import FactorGraph
from robustnav.models import ErrorMode, FuseConfig, OutlierConfig, ScenarioConfig
from robustnav.scenario import generate_scenario
from robustnav.state import ImuBias, NavState, SatObservation

HONG_KONG = GeodeticCoord.from_degrees(22.3, 114.17, 10.0)
FGO_ESTIMATORS = ("SFGO", "RFGO", "FGO-Huber", "FGO-Cauchy", "FGO-Tukey")
OUTLIER_SEEDS = (11, 12, 13, 14, 15)


@pytest.fixture
def rng():
    """Create a seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def frame():
    """Create a local ENU frame at the default scenario origin."""
    return FrameRef.at(HONG_KONG)


def _observations(receiver, clock, count, sigma, seed):
    generator = np.random.default_rng(seed)
    up = receiver / np.linalg.norm(receiver)
    helper = np.array([0.0, 0.0, 1.0]) if abs(up[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    east = np.cross(helper, up)
    east /= np.linalg.norm(east)
    north = np.cross(up, east)
    observations = []
    for index in range(count):
        azimuth = 2.0 * np.pi * index / count + generator.uniform(-0.2, 0.2)
        elevation = np.radians(20.0 + 60.0 * (index % 3) / 2.0)
        direction = (
            np.cos(elevation) * (np.sin(azimuth) * east + np.cos(azimuth) * north)
            + np.sin(elevation) * up
        )
        sat_position = receiver + 2.2e7 * direction
        observations.append(SatObservation(
            sat_id=index + 1,
            time=0.0,
            sat_position=sat_position,
            pseudorange=float(np.linalg.norm(sat_position - receiver)) + clock,
            sigma=sigma,
        ))
    return observations


@pytest.fixture
def make_observations():
    """Factory for noise-free pseudoranges from satellites spread over the sky."""
    def factory(receiver, clock=0.0, count=8, sigma=2.0, seed=7):
        return _observations(np.asarray(receiver, dtype=float), clock, count, sigma, seed)
    return factory


@pytest.fixture
def receiver(frame):
    """ECEF position of the frame origin."""
    return frame.origin_ecef.copy()


@pytest.fixture
def quiet_config():
    """Create a short noiseless scenario config without outliers."""
    return ScenarioConfig(
        duration=20.0,
        noise_scale=0.0,
        initial_gyro_bias=(0.0, 0.0, 0.0),
        initial_accel_bias=(0.0, 0.0, 0.0),
        min_satellites=8,
        max_satellites=10,
        outliers=OutlierConfig(fraction=0.0),
        seed=3,
    )


def _outlier_config(seed):
    return ScenarioConfig(
        duration=60.0,
        min_satellites=8,
        max_satellites=10,
        outliers=OutlierConfig(fraction=0.3, burst_windows=[(10, 50)]),
        seed=seed,
    )


@pytest.fixture
def outlier_config():
    """Create a noisy scenario config with one outlier burst."""
    return _outlier_config(OUTLIER_SEEDS[0])


@pytest.fixture(scope="session")
def seeded_comparisons():
    """Compare SFGO, RFGO and the m-estimators on the outlier scenario over five seeds."""
    comparisons = []
    for seed in OUTLIER_SEEDS:
        dataset = Dataset.from_scenario(generate_scenario(_outlier_config(seed)))
        config = FuseConfig.for_scenario(dataset.config)
        comparisons.append(compare(dataset, config, ErrorMode.HORIZONTAL, estimators=FGO_ESTIMATORS))
    return comparisons


@pytest.fixture
def quiet_scenario(quiet_config):
    """Generate the noiseless scenario."""
    return generate_scenario(quiet_config)


@pytest.fixture
def quiet_dataset(quiet_scenario):
    """Wrap the noiseless scenario as a dataset."""
    return Dataset.from_scenario(quiet_scenario)


@pytest.fixture
def outlier_scenario(outlier_config):
    """Generate the outlier scenario."""
    return generate_scenario(outlier_config)


@pytest.fixture
def dataset_dir(tmp_path, quiet_scenario):
    """Write the noiseless scenario into a dataset directory."""
    directory = tmp_path / "run"
    write_imu_csv(directory / IMU_FILE, quiet_scenario.imu)
    write_obs_csv(directory / OBS_FILE, quiet_scenario.epochs)
    write_solution_csv(directory / TRUTH_FILE, quiet_scenario.truth)
    write_scenario_config(directory / CONFIG_FILE, quiet_scenario.config)
    return directory


def _anchor_epoch(graph, epoch, position, clock=0.0):
    graph.add_prior(PriorFactor.from_sigmas(P(epoch), Pose(np.eye(3), np.asarray(position, dtype=float)),
                                            [0.1, 0.1, 0.1, 1e6, 1e6, 1e6]))
    graph.add_prior(PriorFactor.from_sigmas(V(epoch), np.zeros(3), [1.0]))
    graph.add_prior(PriorFactor.from_sigmas(B(epoch), ImuBias(), [1.0]))
    graph.add_prior(PriorFactor.from_sigmas(C(epoch), float(clock), [1e6]))


@pytest.fixture
def snapshot_graph(make_observations):
    """Factory for a graph of independent pseudorange epochs with weak priors.

    Returns the graph, an initial estimate offset from the truth, and the
    true receiver positions by epoch.
    """
    def factory(start, epochs=1, step=(10.0, 0.0, 0.0), offset=(50.0, -30.0, 20.0), clock=100.0):
        graph = FactorGraph()
        initial = Values()
        truth = {}
        for epoch in range(epochs):
            position = np.asarray(start, dtype=float) + epoch * np.asarray(step)
            truth[epoch] = position
            graph.add_epoch(epoch)
            guess = position + np.asarray(offset)
            _anchor_epoch(graph, epoch, guess)
            for observation in make_observations(position, clock=clock, seed=epoch):
                graph.add_pseudorange_factor(epoch, observation)
            initial.insert_epoch(epoch, NavState.at_rest(guess), ImuBias(), 0.0)
        return graph, initial, truth
    return factory
