"""Estimator drivers: factor-graph fusion, WLS and EKF baselines, comparisons and timing."""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from robustnav.ekf import EkfState, ErrorStateEkf
from robustnav.exceptions import ConfigurationError, EstimationError
from robustnav.factors import B, C, P, V, GNSS_FACTOR_KINDS, Pose, PriorFactor, Values
from robustnav.fileio import (
    CONFIG_FILE,
    IMU_FILE,
    OBS_FILE,
    TRUTH_FILE,
    load_imu_csv,
    load_obs_csv,
    load_truth_csv,
    read_scenario_config,
)
from robustnav.geo import FrameRef
from robustnav.graph import FactorGraph
from robustnav.logging import SolverLogger
from robustnav.metrics import compute_metrics, format_metrics_report, improvement
from robustnav.models import (
    EkfConfig,
    ErrorMetrics,
    ErrorMode,
    FuseConfig,
    FusionMode,
    ScenarioConfig,
    TimingStats,
)
from robustnav.preint import GravityVector, PreintegratedImu, predict_state, preintegrate, split_by_epochs
from robustnav.robust import KernelKind, RobustKernel
from robustnav.scenario import Scenario, scenario_frame, yaw_matrix
from robustnav.smoother import EpochEstimate, FixedLagSmoother
from robustnav.solver import SolverReport, optimize
from robustnav.state import ClockState, EpochObservations, ImuBias, ImuSample, NavState, Trajectory
from robustnav.wls import WlsSolution, wls_solve_epoch

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TIMING_LAG = 10
COMPARISON_ORDER = ("WLS", "EKF", "SFGO", "FGO-Huber", "FGO-Cauchy", "FGO-Tukey", "RFGO")


@dataclass
class Dataset:
    """Sensor data for one run, with optional truth and scenario config."""

    imu: List[ImuSample]
    epochs: List[EpochObservations]
    truth: Optional[Trajectory] = None
    config: Optional[ScenarioConfig] = None

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "Dataset":
        return cls(scenario.imu, scenario.epochs, scenario.truth, scenario.config)

    @classmethod
    def from_directory(cls, directory: PathLike) -> "Dataset":
        """Load ``imu.csv`` and ``obs.csv``; ``truth.csv`` and ``scenario.cfg`` if present."""
        directory = Path(directory)
        truth_path = directory / TRUTH_FILE
        config_path = directory / CONFIG_FILE
        return cls(
            imu=load_imu_csv(directory / IMU_FILE),
            epochs=load_obs_csv(directory / OBS_FILE),
            truth=load_truth_csv(truth_path) if truth_path.exists() else None,
            config=read_scenario_config(config_path) if config_path.exists() else None,
        )

    @property
    def epoch_times(self) -> List[float]:
        return [epoch.time for epoch in self.epochs]

    @property
    def gnss_rate(self) -> float:
        """GNSS rate from the config, else from the median epoch spacing."""
        if self.config is not None:
            return self.config.gnss_rate
        if len(self.epochs) < 2:
            return 1.0
        return 1.0 / float(np.median(np.diff(self.epoch_times)))


@dataclass
class FusionResult:
    """Per-epoch output of one estimator run."""

    name: str
    trajectory: Trajectory
    clocks: List[float] = field(default_factory=list)
    biases: List[ImuBias] = field(default_factory=list)
    reports: List[SolverReport] = field(default_factory=list)
    epoch_times: List[float] = field(default_factory=list)
    gnss_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def timing(self) -> TimingStats:
        return TimingStats(estimator=self.name, per_epoch=list(self.epoch_times))

    @property
    def converged(self) -> bool:
        return all(report.converged for report in self.reports)

    @property
    def residual_mse(self) -> float:
        """Mean squared whitened GNSS residual at the final estimate."""
        if self.gnss_residuals.size == 0:
            return math.nan
        return float(np.mean(self.gnss_residuals ** 2))


@dataclass
class FusionProblem:
    """Everything a solve needs that does not depend on the kernel."""

    gravity: GravityVector
    frame: FrameRef
    epoch_times: List[float]
    preintegrated: List[PreintegratedImu]
    imu_groups: List[List[ImuSample]]
    fixes: List[Optional[WlsSolution]]
    initial: List[EpochEstimate]


def solve_fixes(epochs: Sequence[EpochObservations]) -> List[Optional[WlsSolution]]:
    """WLS fix per epoch, seeded with the previous fix; None where it fails."""
    fixes: List[Optional[WlsSolution]] = []
    seed = None
    for index, epoch in enumerate(epochs):
        try:
            fix = wls_solve_epoch(epoch.observations, init=seed)
        except EstimationError as exc:
            logger.warning(f"No WLS fix at epoch {index}: {exc}", extra={"epoch": index})
            fixes.append(None)
            continue
        fixes.append(fix)
        if fix.converged:
            seed = (fix.position_array, fix.clock)
    return fixes


def _initial_attitude(
    dataset: Dataset,
    fixes: Sequence[Optional[WlsSolution]],
    frame: FrameRef,
) -> NavState:
    """Epoch-0 state: position from WLS, velocity and attitude from truth if available."""
    first = fixes[0]
    if first is None:
        raise EstimationError("first epoch has no WLS fix; cannot initialize")
    position = first.position_array
    times = dataset.epoch_times

    if dataset.truth is not None and len(dataset.truth):
        nearest = int(np.argmin(np.abs(np.asarray(dataset.truth.times) - times[0])))
        aligned = dataset.truth.states[nearest]
        return NavState(position, aligned.velocity, aligned.orientation)

    if len(fixes) > 1 and fixes[1] is not None:
        velocity = (fixes[1].position_array - position) / (times[1] - times[0])
    else:
        velocity = np.zeros(3)
    east, north, _ = frame.rotation @ velocity
    yaw = math.atan2(north, east) if math.hypot(east, north) > 0.1 else 0.0
    return NavState(position, velocity, frame.rotation.T @ yaw_matrix(yaw))


def prepare_problem(dataset: Dataset, config: FuseConfig, reanchor: bool = True) -> FusionProblem:
    """Preintegrate the IMU stream and build the initial guess.

    Later epochs are predicted through the preintegrated deltas; with
    ``reanchor`` their position and clock snap to a converged WLS fix.

    Raises:
        ConfigurationError: If the dataset has no epochs.
        EstimationError: If the first epoch cannot be fixed.
    """
    if not dataset.epochs:
        raise ConfigurationError("dataset has no GNSS epochs")
    times = dataset.epoch_times
    fixes = solve_fixes(dataset.epochs)
    if dataset.config is not None:
        frame = scenario_frame(dataset.config)
    elif fixes[0] is not None:
        frame = FrameRef.from_ecef(fixes[0].position)
    else:
        raise EstimationError("first epoch has no WLS fix; cannot initialize")
    gravity = GravityVector.at(frame, config.gravity)

    groups = split_by_epochs(dataset.imu, times)
    bias = ImuBias.zero()
    preintegrated = [
        preintegrate(group, t_i, t_j, bias, config.imu_noise)
        for group, t_i, t_j in zip(groups, times[:-1], times[1:])
    ]

    state = _initial_attitude(dataset, fixes, frame)
    initial = [EpochEstimate(state, bias, fixes[0].clock)]
    for index, pim in enumerate(preintegrated, start=1):
        previous = initial[-1]
        predicted = predict_state(previous.state, bias, pim, gravity)
        clock = previous.clock
        fix = fixes[index]
        if reanchor and fix is not None and fix.converged:
            predicted = NavState(fix.position_array, predicted.velocity, predicted.orientation)
            clock = fix.clock
        initial.append(EpochEstimate(predicted, bias, clock))

    return FusionProblem(
        gravity=gravity,
        frame=frame,
        epoch_times=times,
        preintegrated=preintegrated,
        imu_groups=groups,
        fixes=fixes,
        initial=initial,
    )


def set_gnss_kernel(graph: FactorGraph, kernel: Optional[RobustKernel]) -> None:
    """Swap the robust kernel of every GNSS factor."""
    for factor in graph.factors:
        if factor.kind in GNSS_FACTOR_KINDS:
            factor.kernel = kernel


class FusionEngine:
    """Builds and solves GNSS/IMU factor graphs."""

    def __init__(self, config: Optional[FuseConfig] = None, solver_logger: Optional[SolverLogger] = None) -> None:
        """Initialize the engine.

        Args:
            config: Fusion settings; the defaults run tightly coupled RFGO.
            solver_logger: Receives solver iteration records.
        """
        self.config = config or FuseConfig()
        self.solver_logger = solver_logger or SolverLogger()

    @property
    def name(self) -> str:
        """Estimator label used in reports."""
        loss = self.config.loss
        if loss == KernelKind.L2:
            return "SFGO"
        if loss == KernelKind.BARRON:
            return "RFGO"
        return f"FGO-{loss.value.replace('_', '-').title()}"

    def _add_priors(self, graph: FactorGraph, estimate: EpochEstimate, epoch: int = 0) -> None:
        prior = self.config.prior
        graph.add_prior(PriorFactor.from_sigmas(
            P(epoch),
            Pose(estimate.state.orientation, estimate.state.position),
            [prior.attitude_sigma] * 3 + [prior.position_sigma] * 3,
        ))
        graph.add_prior(PriorFactor.from_sigmas(V(epoch), estimate.state.velocity, [prior.velocity_sigma]))
        graph.add_prior(PriorFactor.from_sigmas(
            B(epoch), estimate.bias, [prior.accel_bias_sigma] * 3 + [prior.gyro_bias_sigma] * 3
        ))
        graph.add_prior(PriorFactor.from_sigmas(C(epoch), estimate.clock, [prior.clock_sigma]))

    def _add_gnss(
        self,
        graph: FactorGraph,
        problem: FusionProblem,
        epoch: int,
        observations: EpochObservations,
        kernel: Optional[RobustKernel],
    ) -> None:
        if self.config.mode == FusionMode.TC:
            for observation in observations:
                graph.add_pseudorange_factor(epoch, observation, kernel)
            return
        fix = problem.fixes[epoch]
        if fix is not None:
            graph.add_gnss_position_factor(epoch, fix.position, fix.position_covariance, kernel)

    def _link(self, graph: FactorGraph, problem: FusionProblem, epoch: int) -> None:
        dt = problem.epoch_times[epoch] - problem.epoch_times[epoch - 1]
        graph.add_imu_factor(epoch - 1, epoch, problem.preintegrated[epoch - 1], problem.gravity)
        graph.add_random_walk_factors(epoch - 1, epoch, self.config.imu_noise, self.config.clock_walk_sigma, dt)

    def build_graph(
        self, dataset: Dataset, problem: FusionProblem, kernel: Optional[RobustKernel]
    ) -> Tuple[FactorGraph, Values]:
        """Full-history graph and initial values."""
        graph = FactorGraph()
        values = Values()
        for epoch, estimate in enumerate(problem.initial):
            graph.add_epoch(epoch)
            values.insert_epoch(epoch, estimate.state, estimate.bias, estimate.clock)
        self._add_priors(graph, problem.initial[0])
        for epoch, observations in enumerate(dataset.epochs):
            if epoch > 0:
                self._link(graph, problem, epoch)
            self._add_gnss(graph, problem, epoch, observations, kernel)
        return graph, values

    def fuse(self, dataset: Dataset, problem: Optional[FusionProblem] = None) -> FusionResult:
        """Estimate every epoch of ``dataset``.

        A window of 0, or one covering the whole dataset, runs a full batch
        solve; otherwise a fixed-lag smoother runs epoch by epoch.

        Args:
            dataset: Sensor data.
            problem: Reusable preintegration and initial guess, e.g. across a
                parameter sweep.
        """
        window = self.config.window
        if window == 0 or window >= len(dataset.epochs):
            problem = problem or prepare_problem(dataset, self.config, reanchor=True)
            return self._fuse_batch(dataset, problem)
        problem = problem or prepare_problem(dataset, self.config, reanchor=False)
        return self.fuse_incremental(dataset, window, problem)

    def _fuse_batch(self, dataset: Dataset, problem: FusionProblem) -> FusionResult:
        kernel = self.config.kernel()
        started = time.perf_counter()
        warm_start = self.config.two_stage and kernel is not None
        graph, values = self.build_graph(dataset, problem, None if warm_start else kernel)

        reports = []
        values, report = optimize(graph, values, self.config.solver, self.solver_logger)
        reports.append(report)
        if warm_start:
            set_gnss_kernel(graph, kernel)
            values, report = optimize(graph, values, self.config.solver, self.solver_logger)
            reports.append(report)

        elapsed = time.perf_counter() - started
        count = len(dataset.epochs)
        estimates = {epoch: EpochEstimate.from_values(values, epoch) for epoch in range(count)}
        result = self._result(problem, estimates, reports, [elapsed / count] * count)
        result.gnss_residuals = graph.residual_statistics(values)
        return result

    def fuse_incremental(
        self,
        dataset: Dataset,
        lag: int,
        problem: Optional[FusionProblem] = None,
    ) -> FusionResult:
        """Add one epoch at a time and re-solve a window of ``lag`` past epochs.

        A lag at least as long as the dataset never marginalizes and so
        re-solves the whole history at every epoch.
        """
        problem = problem or prepare_problem(dataset, self.config, reanchor=False)
        kernel = self.config.kernel()
        smoother = FixedLagSmoother(lag, self.config.solver, self.solver_logger)
        wall_times: List[float] = []

        for epoch, observations in enumerate(dataset.epochs):
            started = time.perf_counter()
            if epoch == 0:
                estimate = problem.initial[0]
            else:
                previous = smoother.estimate(epoch - 1)
                state = predict_state(
                    previous.state, previous.bias, problem.preintegrated[epoch - 1], problem.gravity
                )
                estimate = EpochEstimate(state, previous.bias, previous.clock)
            smoother.add_epoch(epoch, estimate.state, estimate.bias, estimate.clock)
            if epoch == 0:
                self._add_priors(smoother.graph, estimate)
            else:
                self._link(smoother.graph, problem, epoch)
            self._add_gnss(smoother.graph, problem, epoch, observations, kernel)
            smoother.update(epoch)
            elapsed = time.perf_counter() - started
            wall_times.append(elapsed)
            self.solver_logger.log_epoch_timing(self.name, epoch, elapsed)

        result = self._result(problem, smoother.estimates(), smoother.reports, wall_times)
        result.gnss_residuals = smoother.graph.residual_statistics(smoother.values)
        return result

    def _result(
        self,
        problem: FusionProblem,
        estimates: Dict[int, EpochEstimate],
        reports: List[SolverReport],
        wall_times: List[float],
    ) -> FusionResult:
        trajectory = Trajectory()
        clocks, biases = [], []
        for epoch in sorted(estimates):
            estimate = estimates[epoch]
            trajectory.append(problem.epoch_times[epoch], estimate.state)
            clocks.append(estimate.clock)
            biases.append(estimate.bias)
        return FusionResult(
            name=self.name,
            trajectory=trajectory,
            clocks=clocks,
            biases=biases,
            reports=list(reports),
            epoch_times=wall_times,
        )


def run_wls(dataset: Dataset) -> FusionResult:
    """Epoch-by-epoch WLS; epochs without a fix are left out."""
    trajectory = Trajectory()
    clocks: List[float] = []
    wall_times: List[float] = []
    seed = None
    for index, epoch in enumerate(dataset.epochs):
        started = time.perf_counter()
        try:
            fix = wls_solve_epoch(epoch.observations, init=seed)
        except EstimationError as exc:
            logger.warning(f"No WLS fix at epoch {index}: {exc}", extra={"epoch": index})
            continue
        wall_times.append(time.perf_counter() - started)
        if fix.converged:
            seed = (fix.position_array, fix.clock)
        trajectory.append(epoch.time, NavState.at_rest(fix.position_array))
        clocks.append(fix.clock)
    return FusionResult(name="WLS", trajectory=trajectory, clocks=clocks, epoch_times=wall_times)


def run_ekf(
    dataset: Dataset,
    config: Optional[EkfConfig] = None,
    fuse_config: Optional[FuseConfig] = None,
    solver_logger: Optional[SolverLogger] = None,
    problem: Optional[FusionProblem] = None,
) -> FusionResult:
    """Tightly coupled EKF initialized like the factor graph."""
    fuse_config = fuse_config or FuseConfig()
    config = config or EkfConfig.from_noise(
        fuse_config.imu_noise,
        clock_walk_sigma=fuse_config.clock_walk_sigma,
        gnss_rate=dataset.gnss_rate,
        prior=fuse_config.prior,
        gravity=fuse_config.gravity,
    )
    problem = problem or prepare_problem(dataset, fuse_config, reanchor=False)
    first = problem.initial[0]
    ekf = ErrorStateEkf(config, problem.gravity, solver_logger)
    ekf.initialize(EkfState.initial(
        first.state, first.bias, ClockState(first.clock), config, problem.epoch_times[0]
    ))

    trajectory = Trajectory()
    clocks: List[float] = []
    biases: List[ImuBias] = []
    for epoch, observations in enumerate(dataset.epochs):
        samples = problem.imu_groups[epoch - 1] if epoch > 0 else []
        output = ekf.step(epoch, samples, observations.time, observations.observations)
        trajectory.append(output.time, output.nav)
        clocks.append(output.clock)
        biases.append(ekf.state.bias)
    return FusionResult(
        name="EKF", trajectory=trajectory, clocks=clocks, biases=biases, epoch_times=list(ekf.epoch_times)
    )


@dataclass
class ComparisonResult:
    """Metrics of several estimators on one dataset."""

    metrics: Dict[str, ErrorMetrics]
    results: Dict[str, FusionResult]
    reference: str = "RFGO"
    baseline: str = "SFGO"

    @property
    def rmse_reduction(self) -> float:
        """RMSE reduction (%) of the reference over the baseline."""
        return improvement(self.metrics[self.reference], self.metrics[self.baseline])["RMSE"]

    def to_text(self) -> str:
        report = format_metrics_report(self.metrics, reference=self.reference)
        return report + f"rmse_reduction={self.reference}_vs_{self.baseline} value={self.rmse_reduction:.2f}%\n"


def compare(
    dataset: Dataset,
    config: Optional[FuseConfig] = None,
    mode: ErrorMode = ErrorMode.HORIZONTAL,
    estimators: Sequence[str] = COMPARISON_ORDER,
    solver_logger: Optional[SolverLogger] = None,
) -> ComparisonResult:
    """Run baselines, SFGO, RFGO and the classic m-estimators and score them against truth.

    Raises:
        ConfigurationError: If the dataset has no truth trajectory.
    """
    if dataset.truth is None:
        raise ConfigurationError("comparison needs a truth trajectory")
    config = config or FuseConfig()
    losses = {
        "SFGO": KernelKind.L2,
        "RFGO": KernelKind.BARRON,
        "FGO-Huber": KernelKind.HUBER,
        "FGO-Cauchy": KernelKind.CAUCHY,
        "FGO-Tukey": KernelKind.TUKEY,
    }

    batch = prepare_problem(dataset, config, reanchor=config.window == 0)
    results: Dict[str, FusionResult] = {}
    for name in estimators:
        if name == "WLS":
            results[name] = run_wls(dataset)
        elif name == "EKF":
            results[name] = run_ekf(dataset, fuse_config=config, solver_logger=solver_logger, problem=batch)
        elif name in losses:
            variant = config.model_copy(update={"loss": losses[name], "threshold": None})
            results[name] = FusionEngine(variant, solver_logger).fuse(dataset, batch)
        else:
            raise ConfigurationError(f"unknown estimator {name!r}", field="estimators")

    metrics = {name: compute_metrics(result.trajectory, dataset.truth, mode) for name, result in results.items()}
    comparison = ComparisonResult(metrics=metrics, results=results)
    if "RFGO" in metrics and "SFGO" in metrics:
        logger.info(
            f"RFGO reduces {mode.value} RMSE by {comparison.rmse_reduction:.1f}% vs SFGO",
            extra={"reduction": comparison.rmse_reduction},
        )
    return comparison


def timing(
    dataset: Dataset,
    config: Optional[FuseConfig] = None,
    lag: int = TIMING_LAG,
    solver_logger: Optional[SolverLogger] = None,
) -> Dict[str, TimingStats]:
    """Per-epoch wall time of the EKF, a windowed RFGO and full-history RFGO."""
    config = config or FuseConfig()
    problem = prepare_problem(dataset, config, reanchor=False)
    engine = FusionEngine(config, solver_logger)
    runs = {
        "EKF": run_ekf(dataset, fuse_config=config, solver_logger=solver_logger, problem=problem),
        f"RFGO-window{lag}": engine.fuse_incremental(dataset, lag, problem),
        "RFGO-full": engine.fuse_incremental(dataset, max(len(dataset.epochs), 1), problem),
    }
    return {name: TimingStats(estimator=name, per_epoch=run.epoch_times) for name, run in runs.items()}


def format_timing_report(stats: Dict[str, TimingStats]) -> str:
    """``key=value`` lines with mean/median per-epoch time and ratios to the fastest."""
    fastest = min((s.mean for s in stats.values() if s.mean > 0), default=0.0)
    lines = []
    for name, entry in stats.items():
        ratio = entry.mean / fastest if fastest > 0 else math.nan
        lines.append(
            f"estimator={name} epochs={len(entry.per_epoch)} mean_s={entry.mean:.6f} "
            f"median_s={entry.median:.6f} ratio={ratio:.2f}"
        )
    return "\n".join(lines) + "\n"
