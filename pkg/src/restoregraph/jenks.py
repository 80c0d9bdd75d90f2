"""Jenks natural breaks: optimal 1-D classification into contiguous classes.

Fisher's optimal-partition dynamic program over the sorted values, exact
minimizer of the total within-class sum of squared deviations. On ties the
lowest break positions win, which keeps the output deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class BreakResult:
    breaks: tuple[float, ...]  # k-1 upper class boundaries, ascending
    assignment: tuple[int, ...]  # class index per input value, input order
    ssd: float  # total within-class sum of squared deviations


def _segment_ssd(prefix: list[float], prefix_sq: list[float], i: int, j: int) -> float:
    """SSD of sorted[i:j] from prefix sums; numerically clamped at zero."""
    count = j - i
    total = prefix[j] - prefix[i]
    total_sq = prefix_sq[j] - prefix_sq[i]
    return max(total_sq - total * total / count, 0.0)


def jenks_breaks(values: Sequence[float], k: int = 3) -> BreakResult:
    """Partition values into k contiguous classes minimizing within-class SSD.

    Returns the k-1 upper boundaries (the largest value of each class but
    the last) and a per-value class index aligned with the input order.
    """
    vals = [float(v) for v in values]
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(vals) < k:
        raise ValueError(f"need at least {k} values, got {len(vals)}")
    if any(not math.isfinite(v) for v in vals):
        raise ValueError("values must be finite")
    if len(set(vals)) < k:
        raise ValueError("degenerate breaks")

    order = sorted(range(len(vals)), key=lambda i: vals[i])
    data = [vals[i] for i in order]
    n = len(data)

    prefix = [0.0] * (n + 1)
    prefix_sq = [0.0] * (n + 1)
    for i, v in enumerate(data):
        prefix[i + 1] = prefix[i] + v
        prefix_sq[i + 1] = prefix_sq[i] + v * v

    # cost[c][j] = best SSD for the first j values in c classes
    inf = math.inf
    cost = [[inf] * (n + 1) for _ in range(k + 1)]
    split = [[0] * (n + 1) for _ in range(k + 1)]
    cost[0][0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            best, best_m = inf, c - 1
            for m in range(c - 1, j):
                if cost[c - 1][m] == inf:
                    continue
                candidate = cost[c - 1][m] + _segment_ssd(prefix, prefix_sq, m, j)
                if candidate < best:
                    best, best_m = candidate, m
            cost[c][j] = best
            split[c][j] = best_m

    # recover class boundaries (start index per class) from the split table
    bounds = [n]
    j = n
    for c in range(k, 0, -1):
        j = split[c][j]
        bounds.append(j)
    bounds.reverse()  # k+1 entries: 0 = bounds[0] < ... < bounds[k] = n

    sorted_classes = [0] * n
    for c in range(k):
        for i in range(bounds[c], bounds[c + 1]):
            sorted_classes[i] = c
    assignment = [0] * n
    for pos, original in enumerate(order):
        assignment[original] = sorted_classes[pos]

    breaks = tuple(data[bounds[c + 1] - 1] for c in range(k - 1))
    return BreakResult(breaks, tuple(assignment), cost[k][n])


def classify(value: float, breaks: Sequence[float]) -> int:
    """Class index of a value given ascending upper boundaries."""
    for c, b in enumerate(breaks):
        if value <= b:
            return c
    return len(breaks)
