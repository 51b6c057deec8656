"""Tightly coupled error-state EKF with innovation gating.

Error state (16): attitude, velocity, position, accel bias, gyro bias and
receiver clock. Attitude errors are right-multiplicative, the rest additive.
"""

import logging
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from robustnav.exceptions import EstimationError, IntegrationError
from robustnav.gating import InnovationGate
from robustnav.lie import orthonormalize, so3_exp, so3_hat
from robustnav.logging import SolverLogger
from robustnav.models import EkfConfig
from robustnav.preint import MAX_SAMPLE_DT, GravityVector, kinematic_step
from robustnav.state import ClockState, ImuBias, ImuSample, NavState, SatObservation

logger = logging.getLogger(__name__)

STATE_DIM = 16
ATT, VEL, POS, BA, BG, CLK = (
    slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15), slice(15, 16)
)


@dataclass(frozen=True)
class EkfState:
    """Nominal state plus error covariance."""

    nav: NavState
    bias: ImuBias
    clock: ClockState
    covariance: np.ndarray
    time: float = 0.0

    @classmethod
    def initial(
        cls,
        nav: NavState,
        bias: ImuBias,
        clock: ClockState,
        config: EkfConfig,
        time: float = 0.0,
    ) -> "EkfState":
        """Start from a nominal state with the configured prior sigmas."""
        prior = config.prior
        sigmas = np.concatenate([
            np.full(3, prior.attitude_sigma),
            np.full(3, prior.velocity_sigma),
            np.full(3, prior.position_sigma),
            np.full(3, prior.accel_bias_sigma),
            np.full(3, prior.gyro_bias_sigma),
            [prior.clock_sigma],
        ])
        return cls(nav, bias, clock, np.diag(sigmas ** 2), time)


def ekf_propagate(
    state: EkfState,
    sample: ImuSample,
    dt: float,
    config: EkfConfig,
    gravity: GravityVector,
) -> EkfState:
    """Propagate nominal state and covariance by one IMU sample.

    Raises:
        IntegrationError: If ``dt`` is outside (0, 1] s.
    """
    if not np.isfinite(dt) or dt <= 0.0 or dt > MAX_SAMPLE_DT:
        raise IntegrationError(f"IMU step dt={dt} outside (0, {MAX_SAMPLE_DT}] s", dt=dt)

    omega = sample.gyro - state.bias.gyro_bias
    accel = sample.accel - state.bias.accel_bias
    R = state.nav.orientation

    F = np.zeros((STATE_DIM, STATE_DIM))
    F[ATT, ATT] = -so3_hat(omega)
    F[ATT, BG] = -np.eye(3)
    F[VEL, ATT] = -R @ so3_hat(accel)
    F[VEL, BA] = -R
    F[POS, VEL] = np.eye(3)
    phi = np.eye(STATE_DIM) + F * dt

    G = np.zeros((STATE_DIM, 13))
    G[ATT, 0:3] = -np.eye(3)
    G[VEL, 3:6] = -R
    G[BA, 6:9] = np.eye(3)
    G[BG, 9:12] = np.eye(3)
    G[CLK, 12] = 1.0
    spectral = np.concatenate([
        np.full(3, config.gyro_noise_density ** 2),
        np.full(3, config.accel_noise_density ** 2),
        np.full(3, config.accel_bias_walk ** 2),
        np.full(3, config.gyro_bias_walk ** 2),
        [config.clock_walk_sigma ** 2 * config.gnss_rate],
    ])
    qd = (G * spectral) @ G.T * dt
    qd = 0.5 * (phi @ qd @ phi.T + qd)

    covariance = phi @ state.covariance @ phi.T + qd
    covariance = 0.5 * (covariance + covariance.T)

    nav = kinematic_step(state.nav, omega, accel, dt, gravity)
    return replace(state, nav=nav, covariance=covariance, time=state.time + dt)


def ekf_update_pseudorange(
    state: EkfState,
    observation: SatObservation,
    gate: Optional[InnovationGate] = None,
    epoch: int = -1,
) -> EkfState:
    """Sequential scalar pseudorange update in Joseph form.

    A gated innovation leaves the state untouched and is counted by the gate.
    """
    gate = gate or InnovationGate()
    line_of_sight = observation.sat_position - state.nav.position
    distance = float(np.linalg.norm(line_of_sight))
    innovation = observation.pseudorange - (distance + state.clock.bias)

    H = np.zeros(STATE_DIM)
    H[POS] = -line_of_sight / distance
    H[CLK] = 1.0
    variance = observation.sigma ** 2
    PHt = state.covariance @ H
    S = float(H @ PHt) + variance

    if not gate.test(innovation, S, epoch):
        return state

    gain = PHt / S
    correction = gain * innovation
    IKH = np.eye(STATE_DIM) - np.outer(gain, H)
    covariance = IKH @ state.covariance @ IKH.T + variance * np.outer(gain, gain)
    covariance = 0.5 * (covariance + covariance.T)

    nav = NavState(
        position=state.nav.position + correction[POS],
        velocity=state.nav.velocity + correction[VEL],
        orientation=orthonormalize(state.nav.orientation @ so3_exp(correction[ATT])),
    )
    bias = ImuBias(
        gyro_bias=state.bias.gyro_bias + correction[BG],
        accel_bias=state.bias.accel_bias + correction[BA],
    )
    clock = ClockState(state.clock.bias + float(correction[CLK][0]))
    return replace(state, nav=nav, bias=bias, clock=clock, covariance=covariance)


@dataclass
class EkfEpochOutput:
    """State after the measurement update of one epoch."""

    epoch: int
    time: float
    nav: NavState
    clock: float
    accepted: int
    rejected: int


class ErrorStateEkf:
    """Runs propagation and gated updates epoch by epoch."""

    def __init__(
        self,
        config: EkfConfig,
        gravity: GravityVector,
        solver_logger: Optional[SolverLogger] = None,
    ) -> None:
        self.config = config
        self.gravity = gravity
        self.gate = InnovationGate(sigma=config.gate_sigma)
        self.solver_logger = solver_logger or SolverLogger()
        self.outputs: List[EkfEpochOutput] = []
        self.epoch_times: List[float] = []
        self._state: Optional[EkfState] = None

    @property
    def state(self) -> Optional[EkfState]:
        return self._state

    def initialize(self, state: EkfState) -> None:
        self._state = state

    def step(
        self,
        epoch: int,
        samples: Sequence[ImuSample],
        t_epoch: float,
        observations: Sequence[SatObservation],
    ) -> EkfEpochOutput:
        """Propagate through ``samples`` up to ``t_epoch`` and apply the epoch's pseudoranges."""
        if self._state is None:
            raise EstimationError("ErrorStateEkf.initialize must be called first")
        started = time.perf_counter()
        state = self._state
        for index, sample in enumerate(samples):
            t_next = samples[index + 1].timestamp if index + 1 < len(samples) else t_epoch
            state = ekf_propagate(state, sample, t_next - sample.timestamp, self.config, self.gravity)
        state = replace(state, time=t_epoch)

        rejected_before = self.gate.metrics.rejected
        for observation in observations:
            state = ekf_update_pseudorange(state, observation, self.gate, epoch)
        rejected = self.gate.metrics.rejected - rejected_before
        self._state = state

        elapsed = time.perf_counter() - started
        self.epoch_times.append(elapsed)
        self.solver_logger.log_gate_event(epoch, rejected, len(observations))
        self.solver_logger.log_epoch_timing("ekf", epoch, elapsed)

        output = EkfEpochOutput(
            epoch=epoch,
            time=t_epoch,
            nav=state.nav,
            clock=state.clock.bias,
            accepted=len(observations) - rejected,
            rejected=rejected,
        )
        self.outputs.append(output)
        return output
