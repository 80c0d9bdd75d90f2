"""Planar geometry helpers for projected (meter) coordinates.

Polylines are sequences of (x, y) vertices. Buffers are evaluated as exact
point-to-polyline distances, which is equivalent to a round-capped buffer
without any polygonization.
"""

from __future__ import annotations

import math
from typing import Sequence

Point = tuple[float, float]


def polyline_length(points: Sequence[Point]) -> float:
    return sum(
        math.dist(points[i], points[i + 1]) for i in range(len(points) - 1)
    )


def arc_midpoint(points: Sequence[Point]) -> Point:
    """Point at half the total arc length along the polyline."""
    total = polyline_length(points)
    if total <= 0.0:
        raise ValueError("degenerate polyline: zero length")
    target = total / 2.0
    walked = 0.0
    for i in range(len(points) - 1):
        (x0, y0), (x1, y1) = points[i], points[i + 1]
        seg = math.dist(points[i], points[i + 1])
        if walked + seg >= target:
            f = (target - walked) / seg
            return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
        walked += seg
    return points[-1]


def point_to_segment_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        return math.dist(p, a)
    t = ((px - ax) * dx + (py - ay) * dy) / seg_sq
    t = min(1.0, max(0.0, t))
    return math.dist(p, (ax + t * dx, ay + t * dy))


def point_to_polyline_distance(p: Point, polyline: Sequence[Point]) -> float:
    return min(
        point_to_segment_distance(p, polyline[i], polyline[i + 1])
        for i in range(len(polyline) - 1)
    )


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool:
    """True for proper crossings and for touching/collinear overlap."""
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > 0) != (d2 > 0) or d1 == 0 or d2 == 0) and (
        (d3 > 0) != (d4 > 0) or d3 == 0 or d4 == 0
    ):
        # the sign test alone admits collinear disjoint segments; confirm by
        # distance when any orientation is exactly zero
        if d1 == 0 or d2 == 0 or d3 == 0 or d4 == 0:
            return (
                min(
                    point_to_segment_distance(a1, b1, b2),
                    point_to_segment_distance(a2, b1, b2),
                    point_to_segment_distance(b1, a1, a2),
                    point_to_segment_distance(b2, a1, a2),
                )
                == 0.0
            )
        return True
    return False


def segment_segment_distance(a1: Point, a2: Point, b1: Point, b2: Point) -> float:
    if segments_intersect(a1, a2, b1, b2):
        return 0.0
    return min(
        point_to_segment_distance(a1, b1, b2),
        point_to_segment_distance(a2, b1, b2),
        point_to_segment_distance(b1, a1, a2),
        point_to_segment_distance(b2, a1, a2),
    )


def polyline_min_distance(a: Sequence[Point], b: Sequence[Point]) -> float:
    best = math.inf
    for i in range(len(a) - 1):
        for j in range(len(b) - 1):
            best = min(best, segment_segment_distance(a[i], a[i + 1], b[j], b[j + 1]))
            if best == 0.0:
                return 0.0
    return best


def bounding_box(points: Sequence[Point]) -> tuple[float, float, float, float]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return (min(xs), min(ys), max(xs), max(ys))
