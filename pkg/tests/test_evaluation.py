"""
Tests for geodesic errors, summary statistics and the error CDF.
"""

import json
import math

import numpy as np
import pytest

from app.evaluation.metrics import (
    EARTH_RADIUS_KM, cdf, error_distances, error_stats, haversine, summarize_errors,
)
from app.utils.exceptions import InsufficientDataError, LengthMismatchError


@pytest.mark.unit
class TestHaversine:
    """Test great-circle distances."""

    def test_same_point(self):
        assert haversine((22.3, 114.1), (22.3, 114.1)) == 0.0

    def test_half_circumference(self):
        assert haversine((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * EARTH_RADIUS_KM)

    def test_one_degree_of_latitude(self):
        assert haversine((0.0, 0.0), (1.0, 0.0)) == pytest.approx(2 * math.pi * EARTH_RADIUS_KM / 360)

    def test_antipodes_stay_finite(self):
        assert haversine((45.0, 10.0), (-45.0, -170.0)) == pytest.approx(math.pi * EARTH_RADIUS_KM)

    def test_vectorized(self):
        d = haversine(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([[0.0, 0.0], [10.0, 10.0]]))
        assert d.tolist() == [0.0, 0.0]

    def test_symmetric(self):
        a, b = (22.2, 113.9), (22.5, 114.3)
        assert haversine(a, b) == haversine(b, a)

    def test_new_york_to_los_angeles(self):
        assert haversine((40.7128, -74.0060), (34.0522, -118.2437)) == pytest.approx(3936.0, rel=0.01)


@pytest.mark.unit
class TestErrorStats:
    """Test average, median and max error summaries."""

    def test_even_median_is_midpoint(self):
        stats = summarize_errors([4.0, 1.0, 3.0, 2.0])

        assert stats.average_km == 2.5
        assert stats.median_km == 2.5
        assert stats.max_km == 4.0
        assert stats.n == 4

    def test_paired_predictions(self):
        truth = [(0.0, 0.0), (0.0, 0.0)]
        stats = error_stats([(0.0, 0.0), (1.0, 0.0)], truth)

        assert stats.max_km == pytest.approx(2 * math.pi * EARTH_RADIUS_KM / 360)
        assert stats.median_km == pytest.approx(stats.max_km / 2)

    def test_permuting_pairs_keeps_stats(self):
        """Test that reordering prediction/truth pairs together leaves the summary unchanged."""
        rng = np.random.default_rng(5)
        pred = np.column_stack([rng.uniform(22.1, 22.6, 25), rng.uniform(113.8, 114.4, 25)])
        truth = np.column_stack([rng.uniform(22.1, 22.6, 25), rng.uniform(113.8, 114.4, 25)])
        base = error_stats(pred, truth)

        for _ in range(10):
            order = rng.permutation(25)
            stats = error_stats(pred[order], truth[order])

            assert stats.average_km == pytest.approx(base.average_km, rel=1e-12)
            assert stats.median_km == pytest.approx(base.median_km, rel=1e-12)
            assert stats.max_km == pytest.approx(base.max_km, rel=1e-12)
            assert stats.n == base.n

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            error_distances([(0.0, 0.0)], [(0.0, 0.0), (1.0, 1.0)])

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            summarize_errors([])

    def test_json(self):
        data = json.loads(summarize_errors([1.0]).to_json())
        assert data == {"average_km": 1.0, "median_km": 1.0, "max_km": 1.0, "n": 1}


@pytest.mark.unit
class TestCdf:
    """Test the empirical error CDF."""

    def test_points(self):
        """Test sorting, duplicate collapsing and the exact final fraction."""
        series = cdf([3.0, 1.0, 2.0, 2.0])

        assert series.points == ((1.0, 0.25), (2.0, 0.75), (3.0, 1.0))

    def test_last_fraction_is_exactly_one(self):
        series = cdf(np.random.default_rng(0).exponential(size=7))

        assert series.points[-1][1] == 1.0
        fractions = [f for _, f in series.points]
        assert fractions == sorted(fractions)

    def test_csv(self):
        lines = cdf([1.0, 2.0]).to_csv().decode("utf-8").splitlines()
        assert lines == ["error_km,cumulative_fraction", "1.0,0.5", "2.0,1.0"]

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            cdf([])

    def test_covering_area_extents(self):
        """Test the New York State covering-area extents within 2%."""
        north_south = haversine((40.54, -72.78), (44.75, -72.78))
        east_west = haversine((40.54, -72.78), (40.54, -79.30))

        assert north_south == pytest.approx(467.98, rel=0.02)
        assert east_west == pytest.approx(550.63, rel=0.02)
