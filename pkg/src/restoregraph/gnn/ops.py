"""Shared dense linear-algebra primitives for graph layers."""

from __future__ import annotations

import math

import numpy as np


def normalize_adjacency(adjacency) -> np.ndarray:
    """Symmetric renormalized adjacency D^(-1/2) (A + I) D^(-1/2).

    Degrees come from A + I, so every row has degree >= 1 and the result
    is defined for isolated nodes.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(a.diagonal() != 0):
        raise ValueError("adjacency must have a zero diagonal")
    a_hat = a + np.eye(a.shape[0])
    deg = a_hat.sum(axis=1)
    return a_hat / np.sqrt(np.outer(deg, deg))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Glorot uniform init; the conventional scale for graph layers."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def segment_starts(sorted_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start offsets and segment ids of runs in a sorted id array."""
    if sorted_ids.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(np.diff(sorted_ids)) + 1
    starts = np.concatenate([[0], change])
    return starts, sorted_ids[starts]


def segment_softmax(scores: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Softmax within each contiguous segment of a sorted edge array.

    Scores may be (m,) or (m, heads); segments must be nonempty, which
    holds whenever self-loops are present.
    """
    shifted = scores - np.repeat(np.maximum.reduceat(scores, starts, axis=0),
                                 np.diff(np.append(starts, scores.shape[0])), axis=0)
    exp = np.exp(shifted)
    denom = np.add.reduceat(exp, starts, axis=0)
    return exp / np.repeat(denom, np.diff(np.append(starts, scores.shape[0])), axis=0)
