"""WGS84 geodetic, ECEF and local ENU frames.

Angles are radians internally; degrees appear only at I/O boundaries.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from robustnav.exceptions import ConfigurationError, ConvergenceError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

SPEED_OF_LIGHT = 299792458.0

_MAX_ITERATIONS = 20
_LAT_TOLERANCE = 1e-12
_HEIGHT_TOLERANCE = 1e-9


def _normalize_longitude(lon: float) -> float:
    wrapped = math.remainder(lon, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class GeodeticCoord:
    """Latitude/longitude (rad) and ellipsoidal height (m)."""

    latitude: float
    longitude: float
    height: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.latitude, self.longitude, self.height)):
            raise ConfigurationError("Geodetic coordinates must be finite")
        if abs(self.latitude) > math.pi / 2:
            raise ConfigurationError(f"Latitude {self.latitude} rad outside [-pi/2, pi/2]")
        object.__setattr__(self, "longitude", _normalize_longitude(self.longitude))

    @classmethod
    def from_degrees(cls, latitude: float, longitude: float, height: float = 0.0) -> "GeodeticCoord":
        """Create from degrees (I/O boundary helper)."""
        return cls(math.radians(latitude), math.radians(longitude), height)

    def to_degrees(self) -> tuple:
        """Latitude and longitude in degrees, height in meters."""
        return math.degrees(self.latitude), math.degrees(self.longitude), self.height


@dataclass(frozen=True)
class EcefCoord:
    """Earth-Centered Earth-Fixed position (m)."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ConfigurationError("ECEF coordinates must be finite")

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "EcefCoord":
        """Create from a length-3 sequence."""
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        """Components as a numpy vector."""
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class EnuCoord:
    """East/North/Up offset (m) relative to a :class:`FrameRef`."""

    east: float
    north: float
    up: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.east, self.north, self.up)):
            raise ConfigurationError("ENU coordinates must be finite")

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "EnuCoord":
        """Create from a length-3 sequence."""
        east, north, up = (float(v) for v in values)
        return cls(east, north, up)

    def as_array(self) -> np.ndarray:
        """Components as a numpy vector."""
        return np.array([self.east, self.north, self.up])


def enu_rotation(latitude: float, longitude: float) -> np.ndarray:
    """Rotation taking ECEF vectors into the local ENU frame."""
    sin_lat, cos_lat = math.sin(latitude), math.cos(latitude)
    sin_lon, cos_lon = math.sin(longitude), math.cos(longitude)
    return np.array([
        [-sin_lon, cos_lon, 0.0],
        [-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat],
        [cos_lat * cos_lon, cos_lat * sin_lon, sin_lat],
    ])


@dataclass(frozen=True)
class FrameRef:
    """Local tangent-plane reference with cached rotation and origin."""

    origin: GeodeticCoord
    rotation: np.ndarray = field(repr=False, compare=False)
    origin_ecef: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def at(cls, origin: GeodeticCoord) -> "FrameRef":
        """Build the frame tangent to the ellipsoid at ``origin``."""
        rotation = enu_rotation(origin.latitude, origin.longitude)
        origin_ecef = geodetic_to_ecef(origin).as_array()
        rotation.setflags(write=False)
        origin_ecef.setflags(write=False)
        return cls(origin=origin, rotation=rotation, origin_ecef=origin_ecef)

    @classmethod
    def from_ecef(cls, point: EcefCoord) -> "FrameRef":
        """Build the frame at an ECEF point."""
        return cls.at(ecef_to_geodetic(point))

    def to_enu(self, points: np.ndarray) -> np.ndarray:
        """Vectorized ECEF -> ENU for an (N, 3) array."""
        return (np.asarray(points, dtype=float) - self.origin_ecef) @ self.rotation.T

    def to_ecef(self, points: np.ndarray) -> np.ndarray:
        """Vectorized ENU -> ECEF for an (N, 3) array."""
        return np.asarray(points, dtype=float) @ self.rotation + self.origin_ecef


def geodetic_to_ecef(g: GeodeticCoord) -> EcefCoord:
    """Closed-form WGS84 geodetic to ECEF mapping."""
    sin_lat, cos_lat = math.sin(g.latitude), math.cos(g.latitude)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    return EcefCoord(
        (n + g.height) * cos_lat * math.cos(g.longitude),
        (n + g.height) * cos_lat * math.sin(g.longitude),
        (n * (1.0 - WGS84_E2) + g.height) * sin_lat,
    )


def ecef_to_geodetic(e: EcefCoord) -> GeodeticCoord:
    """Invert :func:`geodetic_to_ecef` by fixed-point latitude iteration.

    Raises:
        ConfigurationError: For the Earth's center.
        ConvergenceError: If latitude/height do not settle in 20 iterations.
    """
    x, y, z = e.x, e.y, e.z
    p = math.hypot(x, y)
    if p == 0.0 and z == 0.0:
        raise ConfigurationError("Geodetic coordinates undefined at the Earth's center")

    if p == 0.0:
        latitude = math.copysign(math.pi / 2, z)
        return GeodeticCoord(latitude, 0.0, abs(z) - WGS84_B)

    longitude = math.atan2(y, x)
    latitude = math.atan2(z, p * (1.0 - WGS84_E2))
    height = 0.0
    for _ in range(_MAX_ITERATIONS):
        sin_lat = math.sin(latitude)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
        new_height = p * math.cos(latitude) + z * sin_lat - WGS84_A * WGS84_A / n
        new_latitude = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + new_height)))
        converged = (
            abs(new_latitude - latitude) < _LAT_TOLERANCE
            and abs(new_height - height) < _HEIGHT_TOLERANCE
        )
        latitude, height = new_latitude, new_height
        if converged:
            return GeodeticCoord(latitude, longitude, height)

    raise ConvergenceError(
        "ecef_to_geodetic did not converge",
        iterations=_MAX_ITERATIONS,
        residual=abs(new_height - height),
    )


def ecef_to_enu(e: EcefCoord, ref: FrameRef) -> EnuCoord:
    """Express an ECEF point in the local ENU frame of ``ref``."""
    return EnuCoord.from_array(ref.rotation @ (e.as_array() - ref.origin_ecef))


def enu_to_ecef(local: EnuCoord, ref: FrameRef) -> EcefCoord:
    """Inverse of :func:`ecef_to_enu`."""
    return EcefCoord.from_array(ref.rotation.T @ local.as_array() + ref.origin_ecef)
