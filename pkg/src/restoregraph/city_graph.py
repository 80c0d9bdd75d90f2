"""City-level road graph: nodes, buffered feature aggregation, spatial weights.

Roads become nodes at their arc-length midpoints. Node features are the
per-dimension means of the feature points lying within 25 m of the road
polyline, concatenated by group (perception, spatial, socioeconomic) and
min-max normalized per column. Adjacency comes from either K-nearest
midpoints (symmetrized by union) or Queen contiguity on the polylines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import (
    arc_midpoint as _polyline_midpoint,
    bounding_box,
    point_to_polyline_distance,
    polyline_length,
    polyline_min_distance,
)

GROUP_ORDER = ("perception", "spatial", "socioeconomic")
LABEL_NAMES = ("low", "medium", "high")
UNLABELED = -1

DEFAULT_BUFFER = 25.0
DEFAULT_KNN_K = 5
DEFAULT_QUEEN_TOL = 0.01

ROADS_HEADER = "# restoregraph roads v1"
POINTS_HEADER = "# restoregraph feature-points v1"
LABELS_HEADER = "# restoregraph labels v1"
NODES_HEADER = "# restoregraph city-nodes v1"
ADJACENCY_HEADER = "# restoregraph adjacency v1"
BUNDLE_LABELS_HEADER = "# restoregraph node-labels v1"
FEATURES_FORMAT = "restoregraph-features"
FEATURES_VERSION = 1


@dataclass(frozen=True)
class RoadSegment:
    road_id: str
    polyline: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.polyline)
        if len(pts) < 2:
            raise ValueError(f"road {self.road_id!r}: fewer than 2 vertices")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError(f"road {self.road_id!r}: repeated consecutive vertex {a}")
        if polyline_length(pts) <= 0.0:
            raise ValueError(f"road {self.road_id!r}: zero length")
        object.__setattr__(self, "polyline", pts)

    @property
    def midpoint(self) -> tuple[float, float]:
        return _polyline_midpoint(self.polyline)


@dataclass(frozen=True)
class FeaturePoint:
    location: tuple[float, float]
    groups: Mapping[str, np.ndarray]

    def __post_init__(self):
        groups = {}
        for name, vec in self.groups.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"group {name!r} is not a vector")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"group {name!r} contains non-finite values")
            groups[name] = arr
        object.__setattr__(self, "groups", groups)
        object.__setattr__(
            self, "location", (float(self.location[0]), float(self.location[1]))
        )


@dataclass(frozen=True)
class SpatialWeights:
    """Sparse symmetric boolean adjacency over n road nodes."""

    n: int
    scheme: str  # "knn" | "queen"
    edges: frozenset[tuple[int, int]]  # undirected, (i, j) with i < j
    directed_relation_count: int

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")

    def dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def neighbor_lists(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return [sorted(nbrs) for nbrs in out]


@dataclass
class CityGraph:
    road_ids: list[str]
    midpoints: np.ndarray  # (n, 2)
    X: np.ndarray  # (n, D) float64
    weights: SpatialWeights
    labels: np.ndarray  # (n,) int, UNLABELED where unknown
    group_spans: dict[str, tuple[int, int]]

    def __post_init__(self):
        n = len(self.road_ids)
        # one memory layout everywhere keeps matrix products bit-reproducible
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.midpoints = np.ascontiguousarray(self.midpoints, dtype=np.float64)
        if self.X.shape[0] != n or self.midpoints.shape != (n, 2):
            raise ValueError("row count mismatch between roads and features")
        if self.weights.n != n:
            raise ValueError("weights node count mismatch")
        if self.labels.shape != (n,):
            raise ValueError("labels length mismatch")
        bad = self.labels[(self.labels != UNLABELED) & ((self.labels < 0) | (self.labels > 2))]
        if bad.size:
            raise ValueError(f"labels outside {{0,1,2}}: {sorted(set(bad.tolist()))}")
        covered = sorted(self.group_spans.values())
        edges = [0] + [e for _, e in covered]
        starts = [s for s, _ in covered] + [self.X.shape[1]]
        if edges != starts:
            raise ValueError(f"group spans do not partition columns: {self.group_spans}")

    @property
    def n(self) -> int:
        return len(self.road_ids)

    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED


def arc_midpoint(road: RoadSegment) -> tuple[float, float]:
    """Midpoint by arc length; the graph node position for this road."""
    return _polyline_midpoint(road.polyline)


def aggregate_features(
    road: RoadSegment,
    points: Sequence[FeaturePoint],
    half_width: float = DEFAULT_BUFFER,
    group_dims: Mapping[str, int] | None = None,
) -> tuple[np.ndarray, int]:
    """Mean feature vector over points within half_width of the polyline.

    Selection is inclusive (distance <= half_width). Groups are concatenated
    in canonical order. Zero coverage yields a zero vector.
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    dims = dict(group_dims) if group_dims else _infer_group_dims(points)
    names = [g for g in GROUP_ORDER if g in dims]
    extra = set(dims) - set(GROUP_ORDER)
    if extra:
        raise ValueError(f"unknown feature groups: {sorted(extra)}")
    width = sum(dims[g] for g in names)

    selected = []
    for p in points:
        _check_point_groups(p, dims)
        if point_to_polyline_distance(p.location, road.polyline) <= half_width:
            selected.append(np.concatenate([p.groups[g] for g in names]) if names else np.zeros(0))
    if not selected:
        return np.zeros(width), 0
    return np.mean(selected, axis=0), len(selected)


def _infer_group_dims(points: Sequence[FeaturePoint]) -> dict[str, int]:
    if not points:
        raise ValueError("cannot infer feature group dimensions from zero points")
    return {name: vec.shape[0] for name, vec in points[0].groups.items()}


def _check_point_groups(point: FeaturePoint, dims: Mapping[str, int]) -> None:
    got = {name: vec.shape[0] for name, vec in point.groups.items()}
    want = {k: v for k, v in dims.items()}
    if got != want:
        raise ValueError(f"feature point groups {got} do not match dataset {want}")


def knn_weights(
    midpoints: np.ndarray,
    k: int = DEFAULT_KNN_K,
    road_ids: Sequence[str] | None = None,
) -> SpatialWeights:
    """K nearest midpoints per node, symmetrized by union.

    The directed relation count is exactly n*k; distance ties are broken by
    ascending road id.
    """
    pts = np.asarray(midpoints, dtype=np.float64)
    n = pts.shape[0]
    if n <= k:
        raise ValueError(f"need more than k={k} nodes, got {n}")
    if road_ids is None:
        rank = np.arange(n)
    else:
        rank = np.empty(n, dtype=np.int64)
        rank[sorted(range(n), key=lambda i: road_ids[i])] = np.arange(n)

    edges: set[tuple[int, int]] = set()
    chunk = 512
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        for local, i in enumerate(range(start, stop)):
            row = dist[local].copy()
            row[i] = np.inf
            order = np.lexsort((rank, row))
            for j in order[:k]:
                edges.add((min(i, int(j)), max(i, int(j))))
    return SpatialWeights(n, "knn", frozenset(edges), n * k)


def queen_weights(
    roads: Sequence[RoadSegment], tol: float = DEFAULT_QUEEN_TOL
) -> SpatialWeights:
    """Roads are adjacent when their polylines intersect, touch, or pass
    within the snap tolerance. Isolated roads keep an all-zero row."""
    n = len(roads)
    if n < 2:
        raise ValueError("need at least 2 roads")
    boxes = [bounding_box(r.polyline) for r in roads]
    edges: set[tuple[int, int]] = set()
    for i in range(n):
        xi0, yi0, xi1, yi1 = boxes[i]
        for j in range(i + 1, n):
            xj0, yj0, xj1, yj1 = boxes[j]
            if xj0 > xi1 + tol or xi0 > xj1 + tol or yj0 > yi1 + tol or yi0 > yj1 + tol:
                continue
            if polyline_min_distance(roads[i].polyline, roads[j].polyline) <= tol:
                edges.add((i, j))
    return SpatialWeights(n, "queen", frozenset(edges), 2 * len(edges))


def normalize_features(X: np.ndarray, group_spans: Mapping[str, tuple[int, int]]) -> np.ndarray:
    """Min-max scale each column to [0, 1]; constant columns map to 0."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    width = sum(e - s for s, e in group_spans.values())
    if width != X.shape[1]:
        raise ValueError("group spans do not cover the feature columns")
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    out = np.zeros_like(X)
    nonconst = span > 0
    out[:, nonconst] = (X[:, nonconst] - lo[nonconst]) / span[nonconst]
    return out


def assemble_city_graph(
    roads: Sequence[RoadSegment],
    points: Sequence[FeaturePoint],
    labels: Mapping[str, str] | None,
    scheme: str = "knn",
    half_width: float = DEFAULT_BUFFER,
    knn_k: int = DEFAULT_KNN_K,
    queen_tol: float = DEFAULT_QUEEN_TOL,
    street_vectors: Mapping[str, Sequence[float]] | None = None,
) -> CityGraph:
    """Combine midpoints, aggregated normalized features, weights and labels.

    When street_vectors is given, those per-road vectors become the
    "spatial" feature group, replacing any spatial columns carried by the
    points themselves.
    """
    ids = [r.road_id for r in roads]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate road_ids: {dupes}")

    dims = _infer_group_dims(points) if points else {}
    if street_vectors is not None:
        missing = [i for i in ids if i not in street_vectors]
        if missing:
            raise ValueError(f"street vectors missing for roads: {missing[:5]}")

    point_names = [g for g in GROUP_ORDER if g in dims]
    offsets = {}
    cursor = 0
    for g in point_names:
        offsets[g] = cursor
        cursor += dims[g]
    rows = [
        aggregate_features(r, points, half_width, dims)[0] if points else np.zeros(0)
        for r in roads
    ]

    spans: dict[str, tuple[int, int]] = {}
    parts_per_road: list[list[np.ndarray]] = [[] for _ in roads]
    cursor = 0
    for g in GROUP_ORDER:
        if g == "spatial" and street_vectors is not None:
            width = len(next(iter(street_vectors.values())))
            for idx, road in enumerate(roads):
                sv = np.asarray(street_vectors[road.road_id], dtype=np.float64)
                if sv.shape != (width,):
                    raise ValueError(f"street vector length mismatch for {road.road_id!r}")
                parts_per_road[idx].append(sv)
            spans[g] = (cursor, cursor + width)
            cursor += width
        elif g in point_names:
            width = dims[g]
            offset = offsets[g]
            for idx in range(len(roads)):
                parts_per_road[idx].append(rows[idx][offset:offset + width])
            spans[g] = (cursor, cursor + width)
            cursor += width

    X = (
        np.vstack([np.concatenate(parts) for parts in parts_per_road])
        if cursor
        else np.zeros((len(roads), 0))
    )
    X = normalize_features(X, spans)

    midpoints = np.array([arc_midpoint(r) for r in roads], dtype=np.float64)
    if scheme == "knn":
        weights = knn_weights(midpoints, knn_k, ids)
    elif scheme == "queen":
        weights = queen_weights(roads, queen_tol)
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")

    label_arr = np.full(len(roads), UNLABELED, dtype=np.int64)
    if labels:
        unknown = sorted(set(labels) - set(ids))
        if unknown:
            raise ValueError(f"labels reference unknown roads: {unknown[:5]}")
        for idx, rid in enumerate(ids):
            if rid in labels:
                name = labels[rid]
                if name not in LABEL_NAMES:
                    raise ValueError(f"unknown class {name!r} for road {rid!r}")
                label_arr[idx] = LABEL_NAMES.index(name)

    return CityGraph(ids, midpoints, X, weights, label_arr, spans)


# ---------------------------------------------------------------------------
# File formats


def _check_version_comments(lines: list[str], expected: str, path) -> None:
    for line in lines:
        if line.startswith("# restoregraph"):
            if line.strip() != expected:
                raise ValueError(f"{path}: unknown format version {line.strip()!r}")
            return


def read_roads(path: str | Path) -> list[RoadSegment]:
    """Roads file: "road_id; x1 y1; x2 y2; ..." per line."""
    path = Path(path)
    lines = path.read_text().splitlines()
    _check_version_comments(lines, ROADS_HEADER, path)
    roads = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(";")]
        if len(parts) < 3:
            raise ValueError(f"{path}: road line needs id and 2+ vertices: {line!r}")
        vertices = []
        for token in parts[1:]:
            x, y = token.split()
            vertices.append((float(x), float(y)))
        roads.append(RoadSegment(parts[0], tuple(vertices)))
    return roads


def write_roads(path: str | Path, roads: Sequence[RoadSegment]) -> None:
    lines = [ROADS_HEADER]
    for r in roads:
        coords = "; ".join(f"{x!r} {y!r}" for x, y in r.polyline)
        lines.append(f"{r.road_id}; {coords}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_feature_points(path: str | Path) -> list[FeaturePoint]:
    path = Path(path)
    lines = path.read_text().splitlines()
    _check_version_comments(lines, POINTS_HEADER, path)
    dims: dict[str, int] = {}
    for line in lines:
        if line.startswith("# columns:"):
            tokens = line.removeprefix("# columns:").split()
            for token in tokens:
                if token in ("x", "y"):
                    continue
                name, _, width = token.partition("[")
                dims[name] = int(width.rstrip("]"))
            break
    if not dims:
        raise ValueError(f"{path}: missing '# columns:' header")
    names = [g for g in GROUP_ORDER if g in dims]
    width = sum(dims.values())
    points = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [float(t) for t in line.split()]
        if len(vals) != 2 + width:
            raise ValueError(f"{path}: expected {2 + width} columns, got {len(vals)}")
        groups = {}
        cursor = 2
        for g in names:
            groups[g] = np.array(vals[cursor:cursor + dims[g]])
            cursor += dims[g]
        points.append(FeaturePoint((vals[0], vals[1]), groups))
    return points


def write_feature_points(path: str | Path, points: Sequence[FeaturePoint]) -> None:
    if not points:
        raise ValueError("no feature points to write")
    dims = _infer_group_dims(points)
    names = [g for g in GROUP_ORDER if g in dims]
    columns = " ".join([f"{g}[{dims[g]}]" for g in names])
    lines = [POINTS_HEADER, f"# columns: x y {columns}"]
    for p in points:
        _check_point_groups(p, dims)
        vals = [p.location[0], p.location[1]]
        for g in names:
            vals.extend(p.groups[g].tolist())
        lines.append(" ".join(repr(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels(path: str | Path) -> dict[str, str]:
    path = Path(path)
    lines = path.read_text().splitlines()
    _check_version_comments(lines, LABELS_HEADER, path)
    labels = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#") or line == "road_id,class":
            continue
        rid, _, name = line.partition(",")
        name = name.strip()
        if name not in LABEL_NAMES:
            raise ValueError(f"{path}: unknown class {name!r}")
        labels[rid.strip()] = name
    return labels


def write_labels(path: str | Path, labels: Mapping[str, str]) -> None:
    lines = [LABELS_HEADER, "road_id,class"]
    for rid in sorted(labels):
        lines.append(f"{rid},{labels[rid]}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_bundle(graph: CityGraph, directory: str | Path) -> None:
    """Write a CityGraph as a directory bundle (text + binary features)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    node_lines = [NODES_HEADER]
    for rid, (x, y) in zip(graph.road_ids, graph.midpoints):
        node_lines.append(f"{rid} {float(x)!r} {float(y)!r}")
    (directory / "nodes.txt").write_text("\n".join(node_lines) + "\n")

    header = {
        "format": FEATURES_FORMAT,
        "version": FEATURES_VERSION,
        "rows": graph.n,
        "cols": int(graph.X.shape[1]),
        "dtype": "<f8",
        "groups": {g: list(span) for g, span in graph.group_spans.items()},
    }
    payload = json.dumps(header, sort_keys=True).encode() + b"\n"
    payload += np.ascontiguousarray(graph.X, dtype="<f8").tobytes()
    (directory / "features.bin").write_bytes(payload)

    w = graph.weights
    adj_lines = [
        ADJACENCY_HEADER,
        f"scheme {w.scheme}",
        f"n {w.n}",
        f"directed_relations {w.directed_relation_count}",
    ]
    for i, j in sorted(w.edges):
        adj_lines.append(f"{i} {j}")
    (directory / "adjacency.txt").write_text("\n".join(adj_lines) + "\n")

    label_lines = [BUNDLE_LABELS_HEADER, "road_id,class"]
    for rid, lab in zip(graph.road_ids, graph.labels):
        name = "unlabeled" if lab == UNLABELED else LABEL_NAMES[lab]
        label_lines.append(f"{rid},{name}")
    (directory / "labels.txt").write_text("\n".join(label_lines) + "\n")


def load_bundle(directory: str | Path) -> CityGraph:
    directory = Path(directory)

    node_lines = (directory / "nodes.txt").read_text().splitlines()
    if not node_lines or node_lines[0] != NODES_HEADER:
        raise ValueError(f"{directory}/nodes.txt: unknown format version")
    road_ids, midpoints = [], []
    for line in node_lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        rid, x, y = line.split()
        road_ids.append(rid)
        midpoints.append((float(x), float(y)))

    raw = (directory / "features.bin").read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline])
    if header.get("format") != FEATURES_FORMAT or header.get("version") != FEATURES_VERSION:
        raise ValueError(f"{directory}/features.bin: unknown format version")
    X = np.frombuffer(raw[newline + 1:], dtype=header["dtype"]).reshape(
        header["rows"], header["cols"]
    ).copy()
    spans = {g: (int(s), int(e)) for g, (s, e) in header["groups"].items()}

    adj_lines = (directory / "adjacency.txt").read_text().splitlines()
    if not adj_lines or adj_lines[0] != ADJACENCY_HEADER:
        raise ValueError(f"{directory}/adjacency.txt: unknown format version")
    scheme = adj_lines[1].split()[1]
    n = int(adj_lines[2].split()[1])
    directed = int(adj_lines[3].split()[1])
    edges = set()
    for line in adj_lines[4:]:
        if not line.strip():
            continue
        i, j = (int(t) for t in line.split())
        edges.add((i, j))
    weights = SpatialWeights(n, scheme, frozenset(edges), directed)

    label_lines = (directory / "labels.txt").read_text().splitlines()
    if not label_lines or label_lines[0] != BUNDLE_LABELS_HEADER:
        raise ValueError(f"{directory}/labels.txt: unknown format version")
    labels = np.full(n, UNLABELED, dtype=np.int64)
    index = {rid: i for i, rid in enumerate(road_ids)}
    for line in label_lines[1:]:
        line = line.strip()
        if not line or line.startswith("#") or line == "road_id,class":
            continue
        rid, _, name = line.partition(",")
        if name != "unlabeled":
            labels[index[rid]] = LABEL_NAMES.index(name)

    return CityGraph(road_ids, np.array(midpoints), X, weights, labels, spans)
