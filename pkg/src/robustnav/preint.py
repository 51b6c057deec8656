"""On-manifold IMU preintegration between GNSS keyframes.

Samples are integrated with forward Euler in the body frame of the first
keyframe, so the result does not depend on the absolute navigation state.
Bias changes are applied afterwards through first-order Jacobians.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from robustnav.exceptions import ConfigurationError, IntegrationError
from robustnav.geo import FrameRef
from robustnav.lie import (
    orthonormalize,
    right_jacobian,
    right_jacobian_inverse,
    so3_exp,
    so3_hat,
    so3_log,
)
from robustnav.models import ImuNoiseParams
from robustnav.state import ImuBias, ImuSample, NavState

logger = logging.getLogger(__name__)

STANDARD_GRAVITY = 9.81
MAX_SAMPLE_DT = 1.0
GYRO_BIAS_WARN = 0.05
ACCEL_BIAS_WARN = 0.5

_COV_JITTER = 1e-14


@dataclass(frozen=True)
class GravityVector:
    """Gravity in the world frame (m/s^2).

    Magnitudes outside [9.7, 9.9] are rejected unless ``test_mode`` is set,
    which also allows a zero vector.
    """

    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -STANDARD_GRAVITY]))
    test_mode: bool = False

    def __post_init__(self) -> None:
        g = np.asarray(self.g, dtype=float).reshape(-1)
        if g.shape != (3,) or not np.all(np.isfinite(g)):
            raise ConfigurationError("gravity must be a finite 3-vector", field="gravity")
        norm = float(np.linalg.norm(g))
        if not self.test_mode and not 9.7 <= norm <= 9.9:
            raise ConfigurationError(
                f"gravity magnitude {norm:.4f} outside [9.7, 9.9]", field="gravity"
            )
        object.__setattr__(self, "g", g)

    @classmethod
    def enu(cls, magnitude: float = STANDARD_GRAVITY) -> "GravityVector":
        """Gravity in a local ENU world frame."""
        return cls(np.array([0.0, 0.0, -magnitude]))

    @classmethod
    def at(cls, frame: FrameRef, magnitude: float = STANDARD_GRAVITY) -> "GravityVector":
        """Local-level gravity at a reference point, expressed in ECEF."""
        return cls(frame.rotation.T @ np.array([0.0, 0.0, -magnitude]))

    @classmethod
    def zero(cls) -> "GravityVector":
        """Gravity-free world (tests only)."""
        return cls(np.zeros(3), test_mode=True)


@dataclass(frozen=True)
class PreintegratedImu:
    """Accumulated relative motion between two keyframes.

    ``bias_jacobians`` rows are ordered (rotation, velocity, position) and
    columns (gyro bias, accel bias).
    """

    delta_R: np.ndarray = field(default_factory=lambda: np.eye(3))
    delta_v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta_p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dt_total: float = 0.0
    bias_lin: ImuBias = field(default_factory=ImuBias)
    cov: np.ndarray = field(default_factory=lambda: np.zeros((9, 9)))
    bias_jacobians: np.ndarray = field(default_factory=lambda: np.zeros((9, 6)))
    sample_count: int = 0

    @classmethod
    def start(cls, bias: Optional[ImuBias] = None) -> "PreintegratedImu":
        """Empty preintegration at a bias linearization point."""
        return cls(bias_lin=bias if bias is not None else ImuBias())

    @property
    def J_R_bg(self) -> np.ndarray:
        return self.bias_jacobians[0:3, 0:3]

    @property
    def J_v_bg(self) -> np.ndarray:
        return self.bias_jacobians[3:6, 0:3]

    @property
    def J_v_ba(self) -> np.ndarray:
        return self.bias_jacobians[3:6, 3:6]

    @property
    def J_p_bg(self) -> np.ndarray:
        return self.bias_jacobians[6:9, 0:3]

    @property
    def J_p_ba(self) -> np.ndarray:
        return self.bias_jacobians[6:9, 3:6]

    def factor_covariance(self) -> np.ndarray:
        """Covariance used to whiten the IMU factor (with a small jitter)."""
        scale = max(float(np.trace(self.cov)) / 9.0, 1.0)
        return self.cov + _COV_JITTER * scale * np.eye(9)


class CorrectedDeltas(NamedTuple):
    """Bias-corrected preintegrated deltas."""

    delta_R: np.ndarray
    delta_v: np.ndarray
    delta_p: np.ndarray


def integrate_sample(
    acc: PreintegratedImu,
    sample: ImuSample,
    dt: float,
    noise: ImuNoiseParams,
) -> PreintegratedImu:
    """Advance a preintegration by one IMU sample.

    Position uses the velocity and rotation from before this step.

    Args:
        acc: Current accumulation.
        sample: The IMU reading, held constant over ``dt``.
        dt: Integration step (s).
        noise: Continuous-time noise densities.

    Returns:
        The updated accumulation.

    Raises:
        IntegrationError: If ``dt`` is not in (0, 1] s.
    """
    if not np.isfinite(dt) or dt <= 0.0 or dt > MAX_SAMPLE_DT:
        raise IntegrationError(f"IMU step dt={dt} outside (0, {MAX_SAMPLE_DT}] s", dt=dt)

    omega = sample.gyro - acc.bias_lin.gyro_bias
    accel = sample.accel - acc.bias_lin.accel_bias
    rot_step = so3_exp(omega * dt)
    jr = right_jacobian(omega * dt)

    R = acc.delta_R
    Ra = R @ accel
    R_ahat = R @ so3_hat(accel)
    dt2 = dt * dt

    delta_p = acc.delta_p + acc.delta_v * dt + 0.5 * Ra * dt2
    delta_v = acc.delta_v + Ra * dt
    delta_R = orthonormalize(R @ rot_step)

    A = np.eye(9)
    A[0:3, 0:3] = rot_step.T
    A[3:6, 0:3] = -R_ahat * dt
    A[6:9, 0:3] = -0.5 * R_ahat * dt2
    A[6:9, 3:6] = np.eye(3) * dt

    B_a = np.zeros((9, 3))
    B_a[3:6] = R * dt
    B_a[6:9] = 0.5 * R * dt2

    gyro_var = noise.gyro_noise_density ** 2
    accel_var = noise.accel_noise_density ** 2
    cov = A @ acc.cov @ A.T
    cov[0:3, 0:3] += jr @ jr.T * (gyro_var * dt)
    cov += B_a @ B_a.T * (accel_var / dt)
    cov = 0.5 * (cov + cov.T)

    J = acc.bias_jacobians.copy()
    J_R_bg = acc.J_R_bg
    J[6:9, 3:6] += acc.J_v_ba * dt - 0.5 * R * dt2
    J[6:9, 0:3] += acc.J_v_bg * dt - 0.5 * R_ahat @ J_R_bg * dt2
    J[3:6, 3:6] -= R * dt
    J[3:6, 0:3] -= R_ahat @ J_R_bg * dt
    J[0:3, 0:3] = rot_step.T @ J_R_bg - jr * dt

    return replace(
        acc,
        delta_R=delta_R,
        delta_v=delta_v,
        delta_p=delta_p,
        dt_total=acc.dt_total + dt,
        cov=cov,
        bias_jacobians=J,
        sample_count=acc.sample_count + 1,
    )


def preintegrate(
    samples: Sequence[ImuSample],
    t_start: float,
    t_end: float,
    bias: ImuBias,
    noise: ImuNoiseParams,
) -> PreintegratedImu:
    """Integrate every sample with ``t_start <= t < t_end``.

    Each sample is held until the next sample's timestamp, the last one
    until ``t_end``.

    Raises:
        IntegrationError: If no sample falls inside the interval or a step
            is out of range.
    """
    inside = [s for s in samples if t_start <= s.timestamp < t_end]
    if not inside:
        raise IntegrationError(f"No IMU samples in [{t_start}, {t_end})", dt=t_end - t_start)
    if inside[0].timestamp - t_start > 1e-9:
        logger.warning(
            f"IMU stream starts {inside[0].timestamp - t_start:.3g} s after keyframe",
            extra={"t_start": t_start},
        )

    acc = PreintegratedImu.start(bias)
    for current, following in zip(inside, inside[1:]):
        acc = integrate_sample(acc, current, following.timestamp - current.timestamp, noise)
    return integrate_sample(acc, inside[-1], t_end - inside[-1].timestamp, noise)


def split_by_epochs(samples: Sequence[ImuSample], epoch_times: Sequence[float]) -> List[List[ImuSample]]:
    """Group samples into the intervals between consecutive keyframe times."""
    stamps = np.array([s.timestamp for s in samples])
    bounds = np.searchsorted(stamps, np.asarray(epoch_times, dtype=float), side="left")
    return [list(samples[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])]


def bias_correct(pim: PreintegratedImu, new_bias: ImuBias) -> CorrectedDeltas:
    """First-order update of the deltas to a new bias estimate.

    Logs a warning when the bias moved far from the linearization point.
    """
    delta_bg = new_bias.gyro_bias - pim.bias_lin.gyro_bias
    delta_ba = new_bias.accel_bias - pim.bias_lin.accel_bias
    if not delta_bg.any() and not delta_ba.any():
        return CorrectedDeltas(pim.delta_R, pim.delta_v, pim.delta_p)

    gyro_shift = float(np.linalg.norm(delta_bg))
    accel_shift = float(np.linalg.norm(delta_ba))
    if gyro_shift > GYRO_BIAS_WARN or accel_shift > ACCEL_BIAS_WARN:
        logger.warning(
            f"Large bias correction (gyro {gyro_shift:.3g} rad/s, accel {accel_shift:.3g} m/s^2); "
            "first-order update may be inaccurate",
            extra={"gyro_shift": gyro_shift, "accel_shift": accel_shift},
        )

    return CorrectedDeltas(
        pim.delta_R @ so3_exp(pim.J_R_bg @ delta_bg),
        pim.delta_v + pim.J_v_bg @ delta_bg + pim.J_v_ba @ delta_ba,
        pim.delta_p + pim.J_p_bg @ delta_bg + pim.J_p_ba @ delta_ba,
    )


def predict_state(
    state_i: NavState,
    bias_i: ImuBias,
    pim: PreintegratedImu,
    gravity: GravityVector,
) -> NavState:
    """Propagate a navigation state across a preintegrated interval."""
    dR, dv, dp = bias_correct(pim, bias_i)
    dt = pim.dt_total
    g = gravity.g
    R_i = state_i.orientation
    return NavState(
        position=state_i.position + state_i.velocity * dt + 0.5 * g * dt * dt + R_i @ dp,
        velocity=state_i.velocity + g * dt + R_i @ dv,
        orientation=orthonormalize(R_i @ dR),
    )


def kinematic_step(
    state: NavState,
    gyro: np.ndarray,
    accel: np.ndarray,
    dt: float,
    gravity: GravityVector,
) -> NavState:
    """One Euler step of strapdown kinematics with bias-free readings."""
    R = state.orientation
    world_accel = R @ accel + gravity.g
    return NavState(
        position=state.position + state.velocity * dt + 0.5 * world_accel * dt * dt,
        velocity=state.velocity + world_accel * dt,
        orientation=orthonormalize(R @ so3_exp(gyro * dt)),
    )


def dead_reckon(
    state: NavState,
    samples: Sequence[ImuSample],
    bias: ImuBias,
    gravity: GravityVector,
    t_end: float,
) -> NavState:
    """Integrate samples one by one in the world frame up to ``t_end``."""
    if not samples:
        return state
    for index, sample in enumerate(samples):
        t_next = samples[index + 1].timestamp if index + 1 < len(samples) else t_end
        dt = t_next - sample.timestamp
        if dt <= 0.0 or dt > MAX_SAMPLE_DT:
            raise IntegrationError(f"IMU step dt={dt} outside (0, {MAX_SAMPLE_DT}] s", dt=dt)
        state = kinematic_step(
            state, sample.gyro - bias.gyro_bias, sample.accel - bias.accel_bias, dt, gravity
        )
    return state


def imu_residual(
    state_i: NavState,
    state_j: NavState,
    bias_i: ImuBias,
    pim: PreintegratedImu,
    gravity: GravityVector,
) -> np.ndarray:
    """9-vector residual ordered (rotation, velocity, position)."""
    dR, dv, dp = bias_correct(pim, bias_i)
    dt = pim.dt_total
    g = gravity.g
    R_i = state_i.orientation
    r_rot = so3_log(dR.T @ R_i.T @ state_j.orientation)
    r_vel = R_i.T @ (state_j.velocity - state_i.velocity - g * dt) - dv
    r_pos = R_i.T @ (
        state_j.position - state_i.position - state_i.velocity * dt - 0.5 * g * dt * dt
    ) - dp
    return np.concatenate([r_rot, r_vel, r_pos])


@dataclass(frozen=True)
class ImuJacobians:
    """Residual Jacobian blocks.

    Pose blocks use the tangent ``[rotation, position]``; the bias block uses
    ``[accel, gyro]``.
    """

    pose_i: np.ndarray
    vel_i: np.ndarray
    bias_i: np.ndarray
    pose_j: np.ndarray
    vel_j: np.ndarray

    def stacked(self) -> np.ndarray:
        """All blocks side by side (9 x 24)."""
        return np.hstack([self.pose_i, self.vel_i, self.bias_i, self.pose_j, self.vel_j])


def imu_residual_jacobians(
    state_i: NavState,
    state_j: NavState,
    bias_i: ImuBias,
    pim: PreintegratedImu,
    gravity: GravityVector,
) -> ImuJacobians:
    """Analytic Jacobians of :func:`imu_residual`.

    Rotations are perturbed on the right (``R Exp(d)``), everything else
    additively.
    """
    dt = pim.dt_total
    g = gravity.g
    R_i = state_i.orientation
    R_j = state_j.orientation
    R_iT = R_i.T

    delta_bg = bias_i.gyro_bias - pim.bias_lin.gyro_bias
    correction = pim.J_R_bg @ delta_bg
    dR = pim.delta_R @ so3_exp(correction)
    r_rot = so3_log(dR.T @ R_iT @ R_j)
    jr_inv = right_jacobian_inverse(r_rot)

    vel_term = R_iT @ (state_j.velocity - state_i.velocity - g * dt)
    pos_term = R_iT @ (state_j.position - state_i.position - state_i.velocity * dt - 0.5 * g * dt * dt)

    pose_i = np.zeros((9, 6))
    pose_i[0:3, 0:3] = -jr_inv @ R_j.T @ R_i
    pose_i[3:6, 0:3] = so3_hat(vel_term)
    pose_i[6:9, 0:3] = so3_hat(pos_term)
    pose_i[6:9, 3:6] = -R_iT

    vel_i = np.zeros((9, 3))
    vel_i[3:6] = -R_iT
    vel_i[6:9] = -R_iT * dt

    bias = np.zeros((9, 6))
    bias[0:3, 3:6] = -jr_inv @ so3_exp(r_rot).T @ right_jacobian(correction) @ pim.J_R_bg
    bias[3:6, 0:3] = -pim.J_v_ba
    bias[3:6, 3:6] = -pim.J_v_bg
    bias[6:9, 0:3] = -pim.J_p_ba
    bias[6:9, 3:6] = -pim.J_p_bg

    pose_j = np.zeros((9, 6))
    pose_j[0:3, 0:3] = jr_inv
    pose_j[6:9, 3:6] = R_iT

    vel_j = np.zeros((9, 3))
    vel_j[3:6] = R_iT

    return ImuJacobians(pose_i=pose_i, vel_i=vel_i, bias_i=bias, pose_j=pose_j, vel_j=vel_j)
