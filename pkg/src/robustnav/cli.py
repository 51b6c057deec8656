"""Command-line interface.

Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from robustnav import __version__
from robustnav.exceptions import ConfigurationError, RobustNavError
from robustnav.fileio import (
    CONFIG_FILE,
    IMU_FILE,
    OBS_FILE,
    OUTLIER_FILE,
    TRUTH_FILE,
    load_solution_csv,
    load_truth_csv,
    read_scenario_config,
    write_cdf_csv,
    write_imu_csv,
    write_metrics,
    write_obs_csv,
    write_outliers_csv,
    write_pdf_csv,
    write_scenario_config,
    write_solution_csv,
)
from robustnav.fusion import Dataset, FusionEngine, compare, format_timing_report, run_ekf, run_wls, timing
from robustnav.logging import setup_logging
from robustnav.metrics import compute_cdf, compute_metrics, compute_pdf, error_norms, format_cdf_report, format_metrics
from robustnav.models import EkfConfig, ErrorMode, FuseConfig, GridSpec, ObjectiveKind, ScenarioConfig
from robustnav.robust import KernelKind
from robustnav.scenario import generate_scenario
from robustnav.tuning import format_tune_report, grid_search

logger = logging.getLogger(__name__)

LOSS_CHOICES = [KernelKind.L2.value, KernelKind.HUBER.value, KernelKind.TUKEY.value,
                KernelKind.CAUCHY.value, KernelKind.BARRON.value]


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fuse_config(args: argparse.Namespace, dataset: Dataset) -> FuseConfig:
    overrides: Dict[str, Any] = {}
    for name in ("mode", "loss", "alpha", "c", "threshold", "window"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "single_stage", False):
        overrides["two_stage"] = False
    try:
        if dataset.config is not None:
            return FuseConfig.for_scenario(dataset.config, **overrides)
        return FuseConfig(**overrides)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid fusion settings: {exc.errors()[0]['msg']}") from exc


def cmd_simulate(args: argparse.Namespace) -> int:
    config = read_scenario_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    scenario = generate_scenario(config)
    out = Path(args.out)
    write_imu_csv(out / IMU_FILE, scenario.imu)
    write_obs_csv(out / OBS_FILE, scenario.epochs)
    write_solution_csv(out / TRUTH_FILE, scenario.truth)
    write_scenario_config(out / CONFIG_FILE, config)
    write_outliers_csv(out / OUTLIER_FILE, scenario.outliers)
    logger.info(f"Wrote scenario to {out}", extra={"out": str(out)})
    return 0


def cmd_fuse(args: argparse.Namespace) -> int:
    dataset = Dataset.from_directory(args.input)
    engine = FusionEngine(_fuse_config(args, dataset))
    result = engine.fuse(dataset)
    write_solution_csv(args.out, result.trajectory)
    if args.report:
        _emit("\n".join(report.to_text() for report in result.reports) + "\n", args.report)
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    dataset = Dataset.from_directory(args.input)
    if args.kind == "wls":
        result = run_wls(dataset)
    else:
        fuse_config = _fuse_config(args, dataset)
        ekf_config = EkfConfig.from_noise(
            fuse_config.imu_noise,
            clock_walk_sigma=fuse_config.clock_walk_sigma,
            gnss_rate=dataset.gnss_rate,
            gate_sigma=args.gate_sigma,
            prior=fuse_config.prior,
        )
        result = run_ekf(dataset, ekf_config, fuse_config)
    write_solution_csv(args.out, result.trajectory)
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    dataset = Dataset.from_directory(args.input)
    try:
        grid = GridSpec.from_ranges(args.alpha_grid, args.c_grid)
    except ValueError as exc:
        raise ConfigurationError(f"invalid grid: {exc}", field="grid") from exc
    result = grid_search(
        dataset,
        grid,
        objective=args.objective,
        config=_fuse_config(args, dataset),
        workers=args.workers,
    )
    _emit(format_tune_report(result), args.report)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    metrics = compute_metrics(load_solution_csv(args.est), load_truth_csv(args.truth), ErrorMode(args.mode))
    _emit(format_metrics(metrics, Path(args.est).stem) + "\n", args.report)
    if args.csv:
        write_metrics(args.csv, metrics, name=Path(args.est).stem)
    return 0


def cmd_cdf(args: argparse.Namespace) -> int:
    norms = error_norms(load_solution_csv(args.est), load_truth_csv(args.truth), ErrorMode(args.mode))
    cdf = compute_cdf(norms)
    if args.out:
        write_cdf_csv(args.out, cdf)
    if args.pdf:
        write_pdf_csv(args.pdf, compute_pdf(norms, bins=args.bins))
    _emit(format_cdf_report(cdf), args.report)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    dataset = Dataset.from_directory(args.input)
    result = compare(dataset, _fuse_config(args, dataset), ErrorMode(args.metric_mode))
    _emit(result.to_text(), args.report)
    if args.csv:
        write_metrics(args.csv, result.metrics)
    return 0


def cmd_timing(args: argparse.Namespace) -> int:
    dataset = Dataset.from_directory(args.input)
    stats = timing(dataset, _fuse_config(args, dataset), lag=args.lag)
    _emit(format_timing_report(stats), args.report)
    return 0


def _add_fusion_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--in", dest="input", required=True, help="Dataset directory")
    parser.add_argument("--mode", choices=["tc", "lc"], help="Coupling (default tc)")
    parser.add_argument("--loss", choices=LOSS_CHOICES, help="GNSS loss (default barron)")
    parser.add_argument("--alpha", type=float, help="Barron shape (default -0.75)")
    parser.add_argument("--c", type=float, help="Barron scale (default 1.2)")
    parser.add_argument("--threshold", type=float, help="Huber/Tukey threshold or Cauchy scale")
    parser.add_argument("--window", type=int, help="Sliding-window lag; 0 runs a full batch")
    parser.add_argument("--single-stage", action="store_true", help="Skip the quadratic warm start")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    parser = argparse.ArgumentParser(
        prog="robustnav",
        description="Robust GNSS/IMU factor-graph fusion",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Generate a synthetic dataset")
    simulate.add_argument("--config", help="Scenario key-value file")
    simulate.add_argument("--out", required=True, help="Output directory")
    simulate.add_argument("--seed", type=int)
    simulate.set_defaults(handler=cmd_simulate)

    fuse = commands.add_parser("fuse", help="Factor-graph fusion")
    _add_fusion_flags(fuse)
    fuse.add_argument("--out", required=True, help="Solution CSV")
    fuse.add_argument("--report", help="Solver report file")
    fuse.set_defaults(handler=cmd_fuse)

    baseline = commands.add_parser("baseline", help="WLS or EKF baseline")
    baseline.add_argument("--kind", choices=["wls", "ekf"], required=True)
    baseline.add_argument("--in", dest="input", required=True)
    baseline.add_argument("--out", required=True)
    baseline.add_argument("--gate-sigma", type=float, default=5.0)
    baseline.set_defaults(handler=cmd_baseline)

    tune = commands.add_parser("tune", help="Barron (alpha, c) grid search")
    _add_fusion_flags(tune)
    tune.add_argument("--objective", choices=[kind.value for kind in ObjectiveKind])
    tune.add_argument("--alpha-grid", help="lo:hi:step (default -4:4:0.5)")
    tune.add_argument("--c-grid", help="lo:hi:step (default 0.1:2:0.1)")
    tune.add_argument("--workers", type=int, default=1)
    tune.add_argument("--report")
    tune.set_defaults(handler=cmd_tune)

    evaluate = commands.add_parser("eval", help="Error metrics against truth")
    evaluate.add_argument("--est", required=True)
    evaluate.add_argument("--truth", required=True)
    evaluate.add_argument("--mode", choices=["2d", "3d"], default="2d")
    evaluate.add_argument("--report")
    evaluate.add_argument("--csv", help="Machine-readable metrics")
    evaluate.set_defaults(handler=cmd_eval)

    cdf = commands.add_parser("cdf", help="Error CDF and PDF data")
    cdf.add_argument("--est", required=True)
    cdf.add_argument("--truth", required=True)
    cdf.add_argument("--mode", choices=["2d", "3d"], default="2d")
    cdf.add_argument("--out", help="CDF CSV")
    cdf.add_argument("--pdf", help="Histogram CSV")
    cdf.add_argument("--bins", type=int, default=64)
    cdf.add_argument("--report")
    cdf.set_defaults(handler=cmd_cdf)

    comparison = commands.add_parser("compare", help="Compare all estimators against truth")
    _add_fusion_flags(comparison)
    comparison.add_argument("--metric-mode", dest="metric_mode", choices=["2d", "3d"], default="2d")
    comparison.add_argument("--report")
    comparison.add_argument("--csv")
    comparison.set_defaults(handler=cmd_compare)

    timer = commands.add_parser("timing", help="Per-epoch wall time of EKF and RFGO")
    _add_fusion_flags(timer)
    timer.add_argument("--lag", type=int, default=10)
    timer.add_argument("--report")
    timer.set_defaults(handler=cmd_timing)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2

    setup_logging("DEBUG" if args.verbose else args.log_level)
    try:
        return args.handler(args)
    except (RobustNavError, OSError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"robustnav {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
