"""Post-prediction analysis: clustering and entity-structure reports.

K-means over road feature rows with silhouette-based model selection,
plus per-group merged entity graphs ranked by degree centrality. All
randomness flows through explicit seeds, so reports are reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .entity_graph import (
    EntityGraph,
    class_name,
    merge_road_graphs,
    top_centrality,
)

log = logging.getLogger("restoregraph.analysis")

MAX_LLOYD_ITERATIONS = 300
CENTER_SHIFT_TOL = 1e-9

SILHOUETTE_HEADER = "# restoregraph silhouette v1"
ASSIGNMENTS_HEADER = "# restoregraph clusters v1"
REPORT_HEADER = "# restoregraph structure-report v1"


@dataclass(frozen=True)
class ClusterResult:
    k: int
    assignments: dict[str, int]  # road_id -> cluster index
    centers: np.ndarray  # (k, d)
    silhouette: float
    seed: int
    labels: np.ndarray  # cluster index per input row
    sse: float
    history: tuple[float, ...]  # SSE after each assignment step

    def __post_init__(self):
        if not -1.0 <= self.silhouette <= 1.0:
            raise ValueError(f"silhouette {self.silhouette} outside [-1, 1]")
        if len(self.assignments) != len(self.labels):
            raise ValueError("assignments must cover every input row")
        if self.centers.shape[0] != self.k:
            raise ValueError("one center per cluster required")


@dataclass(frozen=True)
class SweepResult:
    best_k: int
    scores: dict[int, float]  # k -> mean silhouette
    seed: int


def _as_points(vectors) -> np.ndarray:
    points = np.ascontiguousarray(vectors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0 or points.shape[1] == 0:
        raise ValueError("expected a nonempty 2-d point array")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    return points


def _seed_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding: next center drawn with p proportional
    to squared distance from the chosen set."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def lloyd_iterations(
    vectors, centers
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd refinement until the max center shift drops below 1e-9.

    Returns final labels, final centers, and the SSE recorded after each
    assignment step (non-increasing). Clusters that come up empty are
    revived at the point currently worst served.
    """
    points = _as_points(vectors)
    centers = np.array(centers, dtype=np.float64)
    n = points.shape[0]
    rows = np.arange(n)
    history: list[float] = []
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        history.append(float(d2[rows, labels].sum()))
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            members = labels == c
            if members.any():
                new_centers[c] = points[members].mean(axis=0)
            else:
                new_centers[c] = points[int(d2[rows, labels].argmax())]
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < CENTER_SHIFT_TOL:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    history.append(float(d2[rows, labels].sum()))
    return labels, centers, history


def mean_silhouette(vectors, labels, dist: np.ndarray | None = None) -> float:
    """Mean silhouette coefficient; singleton clusters score 0."""
    points = _as_points(vectors)
    labels = np.asarray(labels)
    n = points.shape[0]
    if labels.shape != (n,):
        raise ValueError("one label per point required")
    if dist is None:
        dist = pairwise_distances(points)
    clusters = np.unique(labels)
    if clusters.size < 2:
        return 0.0
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        same = labels == own
        size = int(same.sum())
        if size <= 1:
            continue
        a = dist[i, same].sum() / (size - 1)
        b = min(dist[i, labels == c].mean() for c in clusters if c != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    deltas = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.maximum((deltas**2).sum(axis=2), 0.0))


def kmeans(vectors, k: int, seed: int = 0,
           ids: Sequence[str] | None = None,
           restarts: int = 8) -> ClusterResult:
    """Seeded k-means++ plus Lloyd refinement, best of several restarts."""
    points = _as_points(vectors)
    n = points.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available points")
    if restarts < 1:
        raise ValueError("need at least one restart")
    if np.unique(points, axis=0).shape[0] < k:
        raise ValueError("degenerate breaks in data")
    if ids is None:
        ids = [str(i) for i in range(n)]
    else:
        ids = [str(i) for i in ids]
        if len(ids) != n:
            raise ValueError("one id per point required")
        if len(set(ids)) != n:
            raise ValueError("duplicate point ids")

    # one seeded stream drives every restart, so the whole run is
    # reproducible; the lowest-SSE run wins, first on exact ties
    rng = np.random.default_rng(seed)
    best: tuple[np.ndarray, np.ndarray, list[float]] | None = None
    for _ in range(restarts):
        labels, centers, history = lloyd_iterations(
            points, _seed_centers(points, k, rng))
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centers, history)
    labels, centers, history = best
    silhouette = mean_silhouette(points, labels)
    assignments = {i: int(c) for i, c in zip(ids, labels)}
    return ClusterResult(k, assignments, centers, silhouette, seed,
                         labels, history[-1], tuple(history))


def best_k_of(scores: Mapping[int, float]) -> int:
    """Argmax of the silhouette scores; exact ties go to the smaller k."""
    if not scores:
        raise ValueError("no scores to choose from")
    return min(scores, key=lambda k: (-scores[k], k))


def silhouette_sweep(vectors, k_range: Sequence[int] | None = None,
                     seed: int = 0,
                     ids: Sequence[str] | None = None) -> SweepResult:
    """Mean silhouette for each candidate k; best k is the argmax."""
    points = _as_points(vectors)
    ks = sorted(set(int(k) for k in (k_range if k_range is not None
                                     else range(2, 21))))
    if not ks:
        raise ValueError("empty k range")
    if ks[0] < 2:
        raise ValueError("k must be at least 2")
    if points.shape[0] <= ks[-1]:
        raise ValueError(
            f"need more than {ks[-1]} points to sweep up to k={ks[-1]}")
    dist = pairwise_distances(points)
    scores = {}
    for k in ks:
        result = kmeans(points, k, seed, ids)
        scores[k] = mean_silhouette(points, result.labels, dist)
    return SweepResult(best_k_of(scores), scores, seed)


# ---------------------------------------------------------------------------
# Entity-structure reports


@dataclass(frozen=True)
class StructureReport:
    group: str
    graph: EntityGraph
    top: tuple[tuple[int, float], ...]  # (class_id, centrality), descending


def class_structure_graphs(
    groups: Mapping[str, Sequence[EntityGraph]], top_k: int = 10
) -> dict[str, StructureReport]:
    """Merge each group's road graphs and rank classes by centrality.

    Empty groups are skipped with a warning; groups whose merged graph
    has fewer than two nodes get an empty ranking.
    """
    reports: dict[str, StructureReport] = {}
    for group, graphs in groups.items():
        graphs = list(graphs)
        if not graphs:
            log.warning("group %r has no entity graphs, skipped", group)
            continue
        merged = merge_road_graphs(graphs)
        top = (tuple(top_centrality(merged, top_k))
               if merged.node_count >= 2 else ())
        reports[group] = StructureReport(group, merged, top)
    return reports


def format_structure_table(
    reports: Mapping[str, StructureReport],
    names: Mapping[int, str] | None = None,
) -> str:
    """Plain-text table: one column per group, one row per rank."""
    names = names or {}
    groups = list(reports)
    columns = {
        g: [f"{class_name(names, cid)} {value:.3f}"
            for cid, value in reports[g].top]
        for g in groups
    }
    depth = max((len(c) for c in columns.values()), default=0)
    widths = {
        g: max(len(g), max((len(s) for s in columns[g]), default=0))
        for g in groups
    }
    header = "rank  " + "  ".join(g.ljust(widths[g]) for g in groups)
    lines = [header]
    for row in range(depth):
        cells = []
        for g in groups:
            cell = columns[g][row] if row < len(columns[g]) else ""
            cells.append(cell.ljust(widths[g]))
        lines.append(f"{row + 1:<4}  " + "  ".join(cells))
    return "\n".join(line.rstrip() for line in lines) + "\n"


# ---------------------------------------------------------------------------
# Report files


def write_silhouette_table(path: str | Path, sweep: SweepResult) -> None:
    lines = [SILHOUETTE_HEADER, f"# best_k {sweep.best_k} seed {sweep.seed}",
             "k,silhouette"]
    for k in sorted(sweep.scores):
        lines.append(f"{k},{sweep.scores[k]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_silhouette_table(path: str | Path) -> SweepResult:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != SILHOUETTE_HEADER:
        raise ValueError(f"{path}: unknown format version")
    meta = lines[1].split()
    best_k, seed = int(meta[2]), int(meta[4])
    scores = {}
    for line in lines[3:]:
        if not line.strip():
            continue
        k, score = line.split(",")
        scores[int(k)] = float(score)
    return SweepResult(best_k, scores, seed)


def write_assignments(path: str | Path, result: ClusterResult) -> None:
    lines = [ASSIGNMENTS_HEADER,
             f"# k {result.k} seed {result.seed} "
             f"silhouette {result.silhouette:.17g}",
             "road_id,cluster"]
    for road_id in sorted(result.assignments):
        lines.append(f"{road_id},{result.assignments[road_id]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_assignments(path: str | Path) -> dict[str, int]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ASSIGNMENTS_HEADER:
        raise ValueError(f"{path}: unknown format version")
    assignments = {}
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#") or line == "road_id,cluster":
            continue
        road_id, cluster = line.rsplit(",", 1)
        assignments[road_id] = int(cluster)
    return assignments


def write_structure_report(path: str | Path, table: str) -> None:
    Path(path).write_text(REPORT_HEADER + "\n" + table)
