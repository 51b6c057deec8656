"""Synthetic GNSS/IMU scenarios.

The route is a cubic spline through ENU waypoints. The spline supplies the
acceleration and yaw rate at every IMU sample; the true trajectory is then
advanced with the same strapdown step the estimators use, so a noiseless
IMU stream reproduces it to round-off.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from robustnav.exceptions import ConfigurationError, ScenarioInfeasibleError
from robustnav.geo import FrameRef, GeodeticCoord
from robustnav.models import ScenarioConfig
from robustnav.outliers import OutlierRecord, inject_outliers, outlier_records
from robustnav.preint import GravityVector, kinematic_step
from robustnav.state import EpochObservations, ImuSample, NavState, SatObservation, Trajectory

logger = logging.getLogger(__name__)

SATELLITE_ORBIT_RADIUS = 26_560_000.0
MIN_ELEVATION = math.radians(10.0)
MAX_ELEVATION = math.radians(88.0)
MAX_ACCELERATION = 6.0
MAX_YAW_RATE = 1.0

_AZIMUTH_DRIFT = 2e-4
_ELEVATION_DRIFT = 1e-4


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class Route:
    """Spline kinematics in ENU; stationary when ``spline`` is None."""

    spline: Optional[CubicSpline]
    period: Optional[float]
    anchor: np.ndarray
    length_time: float

    def _wrap(self, t: np.ndarray) -> np.ndarray:
        if self.period is None:
            return t
        return np.mod(t, self.period)

    def position(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.spline is None:
            return np.tile(self.anchor, (t.size, 1))
        return self.spline(self._wrap(t))

    def velocity(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.spline is None:
            return np.zeros((t.size, 3))
        return self.spline(self._wrap(t), 1)

    def acceleration(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.spline is None:
            return np.zeros((t.size, 3))
        return self.spline(self._wrap(t), 2)


def build_route(config: ScenarioConfig) -> Route:
    """Fit the waypoint spline.

    Closed routes (first waypoint equals the last) are periodic. Open routes
    must last at least ``config.duration``.

    Raises:
        ConfigurationError: On repeated consecutive waypoints.
        ScenarioInfeasibleError: If an open route is shorter than the scenario.
    """
    waypoints = np.asarray(config.route, dtype=float)
    points = waypoints[:, :3]
    if len(points) == 1:
        return Route(spline=None, period=None, anchor=points[0], length_time=math.inf)

    lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if np.any(lengths <= 0.0):
        raise ConfigurationError("consecutive route waypoints must differ", field="route")
    knots = np.concatenate([[0.0], np.cumsum(lengths / waypoints[:-1, 3])])

    closed = len(points) >= 3 and np.allclose(points[0], points[-1])
    if closed:
        points = points.copy()
        points[-1] = points[0]
        spline = CubicSpline(knots, points, bc_type="periodic")
        return Route(spline=spline, period=float(knots[-1]), anchor=points[0], length_time=math.inf)

    if config.duration > knots[-1] + 1e-9:
        raise ScenarioInfeasibleError(
            f"open route lasts {knots[-1]:.1f} s but the scenario needs {config.duration:.1f} s",
            limit=float(knots[-1]),
            value=config.duration,
        )
    spline = CubicSpline(knots, points, bc_type="natural")
    return Route(spline=spline, period=None, anchor=points[0], length_time=float(knots[-1]))


def heading_profile(velocity: np.ndarray, acceleration: np.ndarray) -> Tuple[float, np.ndarray]:
    """Initial yaw and yaw rate of a body whose x axis follows the horizontal velocity."""
    ve, vn = velocity[:, 0], velocity[:, 1]
    ae, an = acceleration[:, 0], acceleration[:, 1]
    speed2 = ve * ve + vn * vn
    moving = speed2 > 1e-9
    yaw_rate = np.zeros(len(velocity))
    yaw_rate[moving] = (ve[moving] * an[moving] - vn[moving] * ae[moving]) / speed2[moving]
    yaw0 = math.atan2(vn[0], ve[0]) if moving[0] else 0.0
    return yaw0, yaw_rate


@dataclass
class Satellite:
    """A pool satellite drifting slowly across the local sky."""

    sat_id: int
    azimuth: float
    elevation: float
    azimuth_rate: float
    elevation_rate: float

    def direction(self, t: float) -> Tuple[np.ndarray, float]:
        """ENU unit vector towards the satellite and its elevation."""
        azimuth = self.azimuth + self.azimuth_rate * t
        elevation = min(max(self.elevation + self.elevation_rate * t, MIN_ELEVATION), MAX_ELEVATION)
        cos_el = math.cos(elevation)
        return np.array([cos_el * math.sin(azimuth), cos_el * math.cos(azimuth), math.sin(elevation)]), elevation


def satellite_position(receiver: np.ndarray, direction_ecef: np.ndarray) -> np.ndarray:
    """Point on the orbit shell seen from ``receiver`` along ``direction_ecef``."""
    projection = float(receiver @ direction_ecef)
    discriminant = projection * projection - (float(receiver @ receiver) - SATELLITE_ORBIT_RADIUS ** 2)
    return receiver + (-projection + math.sqrt(discriminant)) * direction_ecef


@dataclass
class Scenario:
    """Everything a simulation produces."""

    config: ScenarioConfig
    frame: FrameRef
    gravity: GravityVector
    truth: Trajectory
    imu: List[ImuSample]
    epochs: List[EpochObservations]
    clean_epochs: List[EpochObservations]
    outlier_mask: List[List[bool]]
    clock_bias: List[float] = field(default_factory=list)

    @property
    def outliers(self) -> List[OutlierRecord]:
        return outlier_records(self.epochs)

    @property
    def epoch_times(self) -> List[float]:
        return [epoch.time for epoch in self.epochs]

    def as_tuple(self) -> Tuple[Trajectory, List[ImuSample], List[EpochObservations]]:
        """``(truth, imu, observations)``."""
        return self.truth, self.imu, self.epochs


def scenario_frame(config: ScenarioConfig) -> FrameRef:
    """Local ENU frame at the scenario origin."""
    return FrameRef.at(
        GeodeticCoord.from_degrees(
            config.origin_latitude_deg, config.origin_longitude_deg, config.origin_height
        )
    )


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Simulate truth, IMU stream and pseudoranges.

    Raises:
        ScenarioInfeasibleError: If the route exceeds the acceleration or
            yaw-rate limits, or an open route is too short.
    """
    frame = scenario_frame(config)
    gravity = GravityVector.at(frame)
    enu_to_ecef = frame.rotation.T
    route = build_route(config)

    imu_seq, sat_seq, visibility_seq, range_seq, outlier_seq = np.random.SeedSequence(config.seed).spawn(5)
    imu_rng = np.random.default_rng(imu_seq)
    sat_rng = np.random.default_rng(sat_seq)
    visibility_rng = np.random.default_rng(visibility_seq)
    range_rng = np.random.default_rng(range_seq)

    per_epoch = config.imu_per_epoch
    epoch_count = config.epoch_count
    sample_count = (epoch_count - 1) * per_epoch
    times = np.arange(sample_count + 1) / config.imu_rate
    dt = 1.0 / config.imu_rate

    velocity_enu = route.velocity(times)
    acceleration_enu = route.acceleration(times)
    peak_acceleration = float(np.max(np.linalg.norm(acceleration_enu, axis=1)))
    if peak_acceleration > MAX_ACCELERATION:
        raise ScenarioInfeasibleError(
            f"route needs {peak_acceleration:.2f} m/s^2 (limit {MAX_ACCELERATION})",
            limit=MAX_ACCELERATION,
            value=peak_acceleration,
        )
    yaw0, yaw_rate = heading_profile(velocity_enu, acceleration_enu)
    peak_yaw_rate = float(np.max(np.abs(yaw_rate)))
    if peak_yaw_rate > MAX_YAW_RATE:
        raise ScenarioInfeasibleError(
            f"route needs {peak_yaw_rate:.2f} rad/s yaw rate (limit {MAX_YAW_RATE})",
            limit=MAX_YAW_RATE,
            value=peak_yaw_rate,
        )

    noise = config.imu_noise
    scale = config.noise_scale
    root_rate = math.sqrt(config.imu_rate)
    root_dt = math.sqrt(dt)
    gyro_bias = np.asarray(config.initial_gyro_bias, dtype=float)
    accel_bias = np.asarray(config.initial_accel_bias, dtype=float)

    state = NavState(
        position=frame.to_ecef(route.position(0.0))[0],
        velocity=enu_to_ecef @ velocity_enu[0],
        orientation=enu_to_ecef @ yaw_matrix(yaw0),
    )
    truth = Trajectory()
    imu: List[ImuSample] = []
    for k in range(sample_count + 1):
        if k % per_epoch == 0:
            truth.append(float(times[k]), state)
        if k == sample_count:
            break
        omega = np.array([0.0, 0.0, yaw_rate[k]])
        specific_force = state.orientation.T @ (enu_to_ecef @ acceleration_enu[k] - gravity.g)
        imu.append(ImuSample(
            timestamp=float(times[k]),
            gyro=omega + gyro_bias + noise.gyro_noise_density * root_rate * scale * imu_rng.standard_normal(3),
            accel=specific_force + accel_bias
            + noise.accel_noise_density * root_rate * scale * imu_rng.standard_normal(3),
        ))
        gyro_bias = gyro_bias + noise.gyro_bias_walk * root_dt * scale * imu_rng.standard_normal(3)
        accel_bias = accel_bias + noise.accel_bias_walk * root_dt * scale * imu_rng.standard_normal(3)
        state = kinematic_step(state, omega, specific_force, dt, gravity)

    pool = [
        Satellite(
            sat_id=index + 1,
            azimuth=float(sat_rng.uniform(0.0, 2.0 * math.pi)),
            elevation=float(sat_rng.uniform(math.radians(15.0), math.radians(85.0))),
            azimuth_rate=float(sat_rng.uniform(-_AZIMUTH_DRIFT, _AZIMUTH_DRIFT)),
            elevation_rate=float(sat_rng.uniform(-_ELEVATION_DRIFT, _ELEVATION_DRIFT)),
        )
        for index in range(config.max_satellites)
    ]

    visible = int(visibility_rng.integers(config.min_satellites, config.max_satellites + 1))
    clock = config.initial_clock_bias
    clean_epochs: List[EpochObservations] = []
    clock_bias: List[float] = []
    for epoch_index, (t, truth_state) in enumerate(zip(truth.times, truth.states)):
        if epoch_index > 0:
            visible = int(np.clip(visible + visibility_rng.integers(-1, 2), config.min_satellites, config.max_satellites))
            clock += config.clock_walk_sigma * scale * range_rng.standard_normal()
        clock_bias.append(clock)

        geometry = [(sat,) + sat.direction(t) for sat in pool]
        geometry.sort(key=lambda item: (-item[2], item[0].sat_id))
        observations = []
        for sat, direction, elevation in sorted(geometry[:visible], key=lambda item: item[0].sat_id):
            sat_position = satellite_position(truth_state.position, enu_to_ecef @ direction)
            sigma = config.pseudorange_sigma
            if config.elevation_weighting:
                sigma /= math.sin(elevation)
            geometric_range = float(np.linalg.norm(sat_position - truth_state.position))
            observations.append(SatObservation(
                sat_id=sat.sat_id,
                time=t,
                sat_position=sat_position,
                pseudorange=geometric_range + clock + sigma * scale * range_rng.standard_normal(),
                sigma=sigma,
            ))
        clean_epochs.append(EpochObservations(t, observations))

    epochs, mask = inject_outliers(clean_epochs, config.outliers, np.random.default_rng(outlier_seq))
    logger.info(
        f"Generated scenario: {epoch_count} epochs, {len(imu)} IMU samples",
        extra={"epochs": epoch_count, "imu_samples": len(imu), "seed": config.seed},
    )
    return Scenario(
        config=config,
        frame=frame,
        gravity=gravity,
        truth=truth,
        imu=imu,
        epochs=epochs,
        clean_epochs=clean_epochs,
        outlier_mask=mask,
        clock_bias=clock_bias,
    )
