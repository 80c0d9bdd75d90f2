"""Geometry primitives: arc midpoints, distances, segment intersection."""

import math

import numpy as np
import pytest

from restoregraph.geometry import (
    arc_midpoint,
    bounding_box,
    point_to_polyline_distance,
    point_to_segment_distance,
    polyline_length,
    polyline_min_distance,
    segment_segment_distance,
    segments_intersect,
)


def resampled_midpoint(polyline, samples=10_000):
    """Oracle: resample at uniform arc length, take the middle sample.

    samples is forced odd so one sample sits exactly at half length.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    seg = np.diff(pts, axis=0)
    seg_len = np.sqrt((seg * seg).sum(axis=1))
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    n = samples + 1 if samples % 2 == 0 else samples
    ts = np.linspace(0.0, cum[-1], n)
    xs = np.interp(ts, cum, pts[:, 0])
    ys = np.interp(ts, cum, pts[:, 1])
    return float(xs[n // 2]), float(ys[n // 2])


class TestArcMidpoint:
    def test_straight_segment(self):
        assert arc_midpoint([(0, 0), (10, 0)]) == (5.0, 0.0)

    def test_l_polyline_lands_on_corner(self):
        # length 8, half is 4, exactly at the corner vertex
        assert arc_midpoint([(0, 0), (4, 0), (4, 4)]) == (4.0, 0.0)

    def test_matches_resampling_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pts = [tuple(v) for v in rng.uniform(-100, 100, size=(5, 2))]
            got = arc_midpoint(pts)
            want = resampled_midpoint(pts)
            assert math.hypot(got[0] - want[0], got[1] - want[1]) < 1e-6

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError, match="zero length"):
            arc_midpoint([(1, 1), (1, 1)])

    def test_midpoint_halves_arc_length(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pts = [tuple(v) for v in rng.uniform(0, 50, size=(4, 2))]
            mid = arc_midpoint(pts)
            total = polyline_length(pts)
            # rebuild the first half by walking to the midpoint
            walked = 0.0
            prev = pts[0]
            for cur in pts[1:]:
                step = math.dist(prev, cur)
                if walked + step >= total / 2 - 1e-9:
                    walked += math.dist(prev, mid)
                    break
                walked += step
                prev = cur
            assert walked == pytest.approx(total / 2, abs=1e-9)


class TestPointDistances:
    def test_projection_inside_segment(self):
        assert point_to_segment_distance((5, 3), (0, 0), (10, 0)) == 3.0

    def test_projection_clamped_to_endpoint(self):
        assert point_to_segment_distance((13, 4), (0, 0), (10, 0)) == 5.0

    def test_degenerate_segment_is_point_distance(self):
        assert point_to_segment_distance((3, 4), (0, 0), (0, 0)) == 5.0

    def test_polyline_takes_minimum_over_segments(self):
        poly = [(0, 0), (10, 0), (10, 10)]
        assert point_to_polyline_distance((11, 10), poly) == 1.0
        assert point_to_polyline_distance((5, -2), poly) == 2.0

    def test_point_on_line_is_zero(self):
        assert point_to_polyline_distance((4, 0), [(0, 0), (10, 0)]) == 0.0


class TestSegmentIntersection:
    def test_proper_crossing(self):
        assert segments_intersect((0, 0), (10, 10), (0, 10), (10, 0))

    def test_shared_endpoint(self):
        assert segments_intersect((0, 0), (5, 0), (5, 0), (5, 5))

    def test_t_junction(self):
        assert segments_intersect((0, 0), (10, 0), (5, 0), (5, 5))

    def test_parallel_disjoint(self):
        assert not segments_intersect((0, 0), (10, 0), (0, 1), (10, 1))

    def test_collinear_overlapping(self):
        assert segments_intersect((0, 0), (5, 0), (3, 0), (8, 0))

    def test_collinear_disjoint(self):
        assert not segments_intersect((0, 0), (2, 0), (3, 0), (5, 0))

    def test_near_miss(self):
        assert not segments_intersect((0, 0), (4, 0), (4.1, -1), (4.1, 1))


class TestSegmentSegmentDistance:
    def test_crossing_is_zero(self):
        assert segment_segment_distance((0, 0), (10, 10), (0, 10), (10, 0)) == 0.0

    def test_parallel_gap(self):
        assert segment_segment_distance((0, 0), (10, 0), (0, 3), (10, 3)) == 3.0

    def test_endpoint_to_interior(self):
        assert segment_segment_distance((0, 0), (4, 0), (5, -2), (5, 2)) == 1.0

    def test_matches_sampling_oracle(self):
        rng = np.random.default_rng(3)
        ts = np.linspace(0, 1, 400)
        for _ in range(30):
            a1, a2, b1, b2 = (tuple(v) for v in rng.uniform(-10, 10, size=(4, 2)))
            got = segment_segment_distance(a1, a2, b1, b2)
            pa = np.outer(1 - ts, a1) + np.outer(ts, a2)
            pb = np.outer(1 - ts, b1) + np.outer(ts, b2)
            diff = pa[:, None, :] - pb[None, :, :]
            approx = np.sqrt((diff * diff).sum(axis=2)).min()
            # dense sampling only upper-bounds from above within grid spacing
            assert got <= approx + 1e-12
            assert got >= approx - 0.1


class TestPolylineMinDistance:
    def test_touching_polylines(self):
        assert polyline_min_distance([(0, 0), (5, 0)], [(5, 0), (5, 5)]) == 0.0

    def test_parallel_10m_apart(self):
        assert polyline_min_distance([(0, 0), (10, 0)], [(0, 10), (10, 10)]) == 10.0

    def test_bounding_box(self):
        assert bounding_box([(1, 7), (-2, 3), (4, 5)]) == (-2.0, 3.0, 4.0, 7.0)
