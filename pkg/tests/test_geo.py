"""Tests for geodetic frames and conversions."""

import math

import numpy as np
import pytest

from robustnav.exceptions import ConfigurationError
from robustnav.geo import (
    WGS84_A,
    WGS84_B,
    EcefCoord,
    EnuCoord,
    FrameRef,
    GeodeticCoord,
    ecef_to_enu,
    ecef_to_geodetic,
    enu_to_ecef,
    geodetic_to_ecef,
)


class TestGeodetic:
    """Tests for geodetic/ECEF conversion."""

    def test_equator_prime_meridian(self):
        """Test the origin of latitude and longitude maps onto the x axis."""
        ecef = geodetic_to_ecef(GeodeticCoord(0.0, 0.0, 0.0))

        assert ecef.x == pytest.approx(WGS84_A)
        assert ecef.y == pytest.approx(0.0, abs=1e-9)
        assert ecef.z == pytest.approx(0.0, abs=1e-9)

    def test_round_trip(self):
        """Test geodetic -> ECEF -> geodetic recovers the input."""
        original = GeodeticCoord.from_degrees(22.3, 114.17, 10.0)

        recovered = ecef_to_geodetic(geodetic_to_ecef(original))

        assert recovered.latitude == pytest.approx(original.latitude, abs=1e-11)
        assert recovered.longitude == pytest.approx(original.longitude, abs=1e-11)
        assert recovered.height == pytest.approx(original.height, abs=1e-6)

    def test_north_pole(self):
        """Test a point on the polar axis has latitude pi/2."""
        geodetic = ecef_to_geodetic(EcefCoord(0.0, 0.0, WGS84_B + 5.0))

        assert geodetic.latitude == pytest.approx(math.pi / 2)
        assert geodetic.height == pytest.approx(5.0)

    def test_earth_center_rejected(self):
        """Test the Earth's center has no geodetic coordinates."""
        with pytest.raises(ConfigurationError):
            ecef_to_geodetic(EcefCoord(0.0, 0.0, 0.0))

    def test_longitude_wrapped(self):
        """Test longitudes are normalized into (-pi, pi]."""
        coord = GeodeticCoord.from_degrees(0.0, 190.0)

        assert math.degrees(coord.longitude) == pytest.approx(-170.0)

    def test_latitude_out_of_range(self):
        """Test latitudes beyond the poles are rejected."""
        with pytest.raises(ConfigurationError):
            GeodeticCoord.from_degrees(91.0, 0.0)

    def test_non_finite_ecef_rejected(self):
        """Test ECEF coordinates must be finite."""
        with pytest.raises(ConfigurationError):
            EcefCoord(float("nan"), 0.0, 0.0)


class TestLocalFrame:
    """Tests for the ENU frame."""

    def test_origin_maps_to_zero(self, frame):
        """Test the frame origin has zero ENU coordinates."""
        enu = ecef_to_enu(EcefCoord.from_array(frame.origin_ecef), frame)

        np.testing.assert_allclose(enu.as_array(), np.zeros(3), atol=1e-8)

    def test_rotation_is_orthonormal(self, frame):
        """Test the ENU rotation is a proper rotation."""
        np.testing.assert_allclose(frame.rotation @ frame.rotation.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(frame.rotation) == pytest.approx(1.0)

    def test_up_is_ellipsoid_normal(self, frame):
        """Test raising the height moves a point along local up."""
        lat, lon, height = frame.origin.latitude, frame.origin.longitude, frame.origin.height
        raised = geodetic_to_ecef(GeodeticCoord(lat, lon, height + 100.0))

        enu = ecef_to_enu(raised, frame)

        assert enu.up == pytest.approx(100.0, abs=1e-6)
        assert enu.east == pytest.approx(0.0, abs=1e-6)
        assert enu.north == pytest.approx(0.0, abs=1e-6)

    def test_enu_round_trip(self, frame):
        """Test ENU -> ECEF -> ENU recovers the offset."""
        offset = EnuCoord(120.0, -45.0, 3.0)

        back = ecef_to_enu(enu_to_ecef(offset, frame), frame)

        np.testing.assert_allclose(back.as_array(), offset.as_array(), atol=1e-7)

    def test_vectorized_matches_scalar(self, frame):
        """Test array conversions agree with the per-point functions."""
        points = np.array([[10.0, 20.0, 1.0], [-5.0, 3.0, 0.5]])

        ecef = frame.to_ecef(points)

        for row, point in zip(ecef, points):
            expected = enu_to_ecef(EnuCoord.from_array(point), frame).as_array()
            np.testing.assert_allclose(row, expected, atol=1e-8)
        np.testing.assert_allclose(frame.to_enu(ecef), points, atol=1e-7)

    def test_from_ecef_uses_point_as_origin(self):
        """Test a frame built at an ECEF point is centered there."""
        point = geodetic_to_ecef(GeodeticCoord.from_degrees(-33.9, 151.2, 40.0))

        frame = FrameRef.from_ecef(point)

        np.testing.assert_allclose(frame.origin_ecef, point.as_array(), atol=1e-6)
