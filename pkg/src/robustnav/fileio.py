"""CSV and scenario-config reading and writing.

Floats are written with 17 significant digits so that every double survives
a write/load cycle unchanged.
"""

import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError
from scipy.spatial.transform import Rotation

from robustnav.exceptions import ConfigurationError, DataFormatError
from robustnav.models import CdfReport, ErrorMetrics, ImuNoiseParams, OutlierConfig, PdfReport, ScenarioConfig
from robustnav.outliers import OutlierRecord
from robustnav.state import EpochObservations, ImuSample, NavState, SatObservation, Trajectory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"
IMU_COLUMNS = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
OBS_COLUMNS = ["t", "sat_id", "sat_x", "sat_y", "sat_z", "pseudorange", "sigma"]
TRAJECTORY_COLUMNS = ["t", "x", "y", "z", "vx", "vy", "vz", "qw", "qx", "qy", "qz"]
OUTLIER_COLUMNS = ["t", "sat_id", "bias"]
METRIC_COLUMNS = [
    "estimator", "mode", "rmse", "mean_error", "max_error", "std_dev",
    "rmse_east", "rmse_north", "rmse_up", "count", "dropped",
]

IMU_FILE = "imu.csv"
OBS_FILE = "obs.csv"
TRUTH_FILE = "truth.csv"
CONFIG_FILE = "scenario.cfg"
OUTLIER_FILE = "outliers.csv"

_PARSER_LINE = re.compile(r"line (\d+)")
_NESTED_MODELS: Dict[str, type] = {"imu_noise": ImuNoiseParams, "outliers": OutlierConfig}


def _read_table(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    """Read a CSV as strings and check its header.

    An empty file yields an empty frame with the expected columns.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(columns))
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        raise DataFormatError(
            f"malformed row: {exc}", path=str(path), line=int(match.group(1)) if match else None
        ) from exc

    if list(frame.columns) != list(columns):
        raise DataFormatError(
            f"expected header {','.join(columns)}, got {','.join(map(str, frame.columns))}",
            path=str(path),
            line=1,
        )
    return frame


def _parse_rows(path: PathLike, frame: pd.DataFrame, integer_columns: Iterable[str] = ()) -> List[Tuple[int, Dict[str, Any]]]:
    """Convert string cells to numbers, naming the file line of a bad cell."""
    integers = set(integer_columns)
    rows = []
    for index, record in enumerate(frame.to_dict("records")):
        line = index + 2
        parsed: Dict[str, Any] = {}
        for column, cell in record.items():
            if not isinstance(cell, str) or not cell.strip():
                raise DataFormatError(f"missing value for {column!r}", path=str(path), line=line)
            try:
                parsed[column] = int(cell) if column in integers else float(cell)
            except ValueError as exc:
                raise DataFormatError(
                    f"cannot parse {column}={cell!r}", path=str(path), line=line
                ) from exc
            if column not in integers and not np.isfinite(parsed[column]):
                raise DataFormatError(f"non-finite {column}", path=str(path), line=line)
        rows.append((line, parsed))
    return rows


def _check_increasing(path: PathLike, line: int, previous: Optional[float], current: float, strict: bool = True) -> None:
    if previous is None:
        return
    if current < previous or (strict and current == previous):
        raise DataFormatError(
            f"timestamp {current!r} does not follow {previous!r}", path=str(path), line=line
        )


def load_imu_csv(path: PathLike) -> List[ImuSample]:
    """Load ``t,gx,gy,gz,ax,ay,az`` rows.

    Raises:
        DataFormatError: On a malformed row or non-increasing timestamps.
    """
    frame = _read_table(path, IMU_COLUMNS)
    samples: List[ImuSample] = []
    previous = None
    for line, row in _parse_rows(path, frame):
        _check_increasing(path, line, previous, row["t"])
        previous = row["t"]
        samples.append(ImuSample(
            timestamp=row["t"],
            gyro=np.array([row["gx"], row["gy"], row["gz"]]),
            accel=np.array([row["ax"], row["ay"], row["az"]]),
        ))
    logger.debug(f"Loaded {len(samples)} IMU samples from {path}", extra={"path": str(path)})
    return samples


def load_obs_csv(path: PathLike) -> List[EpochObservations]:
    """Load pseudoranges grouped into epochs by equal timestamps.

    Raises:
        DataFormatError: On a malformed row or decreasing timestamps.
    """
    frame = _read_table(path, OBS_COLUMNS)
    epochs: List[EpochObservations] = []
    previous = None
    for line, row in _parse_rows(path, frame, integer_columns=("sat_id",)):
        _check_increasing(path, line, previous, row["t"], strict=False)
        previous = row["t"]
        try:
            observation = SatObservation(
                sat_id=row["sat_id"],
                time=row["t"],
                sat_position=np.array([row["sat_x"], row["sat_y"], row["sat_z"]]),
                pseudorange=row["pseudorange"],
                sigma=row["sigma"],
            )
        except ConfigurationError as exc:
            raise DataFormatError(exc.message, path=str(path), line=line) from exc
        if not epochs or epochs[-1].time != row["t"]:
            epochs.append(EpochObservations(row["t"], []))
        epochs[-1].observations.append(observation)
    logger.debug(f"Loaded {len(epochs)} observation epochs from {path}", extra={"path": str(path)})
    return epochs


def load_truth_csv(path: PathLike) -> Trajectory:
    """Load a ``t,x,y,z,vx,vy,vz,qw,qx,qy,qz`` trajectory.

    Raises:
        DataFormatError: On a malformed row, a zero quaternion or
            non-increasing timestamps.
    """
    frame = _read_table(path, TRAJECTORY_COLUMNS)
    trajectory = Trajectory()
    previous = None
    for line, row in _parse_rows(path, frame):
        _check_increasing(path, line, previous, row["t"])
        previous = row["t"]
        quaternion = np.array([row["qx"], row["qy"], row["qz"], row["qw"]])
        if np.linalg.norm(quaternion) < 1e-12:
            raise DataFormatError("zero quaternion", path=str(path), line=line)
        trajectory.append(row["t"], NavState(
            position=np.array([row["x"], row["y"], row["z"]]),
            velocity=np.array([row["vx"], row["vy"], row["vz"]]),
            orientation=Rotation.from_quat(quaternion).as_matrix(),
        ))
    return trajectory


load_solution_csv = load_truth_csv


def _write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_imu_csv(path: PathLike, samples: Sequence[ImuSample]) -> None:
    """Write IMU samples."""
    data = np.array([np.concatenate([[s.timestamp], s.gyro, s.accel]) for s in samples]).reshape(-1, 7)
    _write_frame(path, pd.DataFrame(data, columns=IMU_COLUMNS))


def write_obs_csv(path: PathLike, epochs: Sequence[EpochObservations]) -> None:
    """Write pseudoranges, one row per observation."""
    rows = [
        {
            "t": obs.time,
            "sat_id": obs.sat_id,
            "sat_x": obs.sat_position[0],
            "sat_y": obs.sat_position[1],
            "sat_z": obs.sat_position[2],
            "pseudorange": obs.pseudorange,
            "sigma": obs.sigma,
        }
        for epoch in epochs
        for obs in epoch
    ]
    _write_frame(path, pd.DataFrame(rows, columns=OBS_COLUMNS))


def write_solution_csv(path: PathLike, trajectory: Trajectory) -> None:
    """Write a trajectory with scalar-first unit quaternions (``qw >= 0``)."""
    rows = []
    for t, state in zip(trajectory.times, trajectory.states):
        qx, qy, qz, qw = Rotation.from_matrix(state.orientation).as_quat()
        if qw < 0.0:
            qx, qy, qz, qw = -qx, -qy, -qz, -qw
        rows.append([t, *state.position, *state.velocity, qw, qx, qy, qz])
    _write_frame(path, pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS))


write_truth_csv = write_solution_csv


def write_outliers_csv(path: PathLike, records: Sequence[OutlierRecord]) -> None:
    """Write simulation-only outlier metadata."""
    rows = [{"t": r.time, "sat_id": r.sat_id, "bias": r.bias} for r in records]
    _write_frame(path, pd.DataFrame(rows, columns=OUTLIER_COLUMNS))


def load_outliers_csv(path: PathLike) -> List[OutlierRecord]:
    """Load outlier metadata written by :func:`write_outliers_csv`."""
    frame = _read_table(path, OUTLIER_COLUMNS)
    return [
        OutlierRecord(row["t"], row["sat_id"], row["bias"])
        for _, row in _parse_rows(path, frame, integer_columns=("sat_id",))
    ]


def write_metrics(path: PathLike, report: Union[ErrorMetrics, Mapping[str, ErrorMetrics]], name: str = "estimate") -> None:
    """Write one metrics row per estimator.

    Args:
        path: Output CSV.
        report: A single report or reports keyed by estimator name.
        name: Estimator name used for a single report.
    """
    reports = {name: report} if isinstance(report, ErrorMetrics) else dict(report)
    rows = []
    for estimator, metrics in reports.items():
        row = {"estimator": estimator, **metrics.model_dump()}
        row["mode"] = metrics.mode.value
        rows.append(row)
    _write_frame(path, pd.DataFrame(rows, columns=METRIC_COLUMNS))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            if all(isinstance(v, int) for item in value for v in item):
                return ", ".join(f"{start}:{end}" for start, end in value)
            return "; ".join(",".join(repr(float(v)) for v in item) for item in value)
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def format_scenario_config(config: ScenarioConfig) -> str:
    """Render a config as flat ``key = value`` lines."""
    lines = []
    for name in ScenarioConfig.model_fields:
        value = getattr(config, name)
        if isinstance(value, BaseModel):
            for sub_name in type(value).model_fields:
                lines.append(f"{name}.{sub_name} = {_format_value(getattr(value, sub_name))}")
        else:
            lines.append(f"{name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_scenario_config(path: PathLike, config: ScenarioConfig) -> None:
    """Write the flat key-value scenario file."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_scenario_config(config), encoding="utf-8")


def parse_scenario_config(text: str) -> ScenarioConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Raises:
        ConfigurationError: On an unknown, duplicate or malformed key, or a
            value the config model rejects. The error names the line.
    """
    values: Dict[str, Any] = {}
    lines: Dict[Tuple[str, ...], int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"expected 'key = value', got {raw.strip()!r}", line=number)

        path = tuple(key.split("."))
        if len(path) == 1 and path[0] in ScenarioConfig.model_fields and path[0] not in _NESTED_MODELS:
            target = values
        elif len(path) == 2 and path[0] in _NESTED_MODELS and path[1] in _NESTED_MODELS[path[0]].model_fields:
            target = values.setdefault(path[0], {})
        else:
            raise ConfigurationError(f"unknown key {key!r}", field=key, line=number)
        if path in lines:
            raise ConfigurationError(f"duplicate key {key!r}", field=key, line=number)
        lines[path] = number
        target[path[-1]] = value.strip()

    try:
        return ScenarioConfig(**values)
    except ValidationError as exc:
        error = exc.errors()[0]
        location = tuple(str(part) for part in error["loc"])
        line = next(
            (lines[location[:size]] for size in (2, 1) if location[:size] in lines), None
        )
        raise ConfigurationError(
            f"invalid {'.'.join(location) or 'config'}: {error['msg']}",
            field=".".join(location) or None,
            line=line,
        ) from exc


def read_scenario_config(path: PathLike) -> ScenarioConfig:
    """Read a scenario file."""
    return parse_scenario_config(Path(path).read_text(encoding="utf-8"))


def write_cdf_csv(path: PathLike, cdf: CdfReport) -> None:
    """Write ``error,fraction`` pairs of an empirical CDF."""
    _write_frame(path, pd.DataFrame({"error": cdf.samples, "fraction": cdf.fractions}))


def write_pdf_csv(path: PathLike, pdf: PdfReport) -> None:
    """Write histogram bins as ``lower,upper,density`` rows."""
    _write_frame(path, pd.DataFrame({
        "lower": pdf.edges[:-1],
        "upper": pdf.edges[1:],
        "density": pdf.density,
    }))
