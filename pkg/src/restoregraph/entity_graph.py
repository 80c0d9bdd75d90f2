"""Entity graphs built from street scene segmentation rasters.

Each raster assigns one of K = 150 semantic class ids to every pixel. A
class present in the raster becomes one node located at the mean pixel
coordinate of that class, and two nodes are joined by an undirected edge
when their centroids lie closer than a pixel threshold (45 by default).
Per-image graphs from the same road are merged by set union.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NUM_CLASSES = 150
DEFAULT_THRESHOLD = 45.0

NODE_FILE_HEADER = "# restoregraph entity-nodes v1"
EDGE_FILE_HEADER = "# restoregraph entity-edges v1"


@dataclass(frozen=True)
class SegmentationMap:
    """Per-pixel class ids for one street view image."""

    classes: np.ndarray  # (height, width) integer array
    image_id: str
    road_id: str
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        arr = np.asarray(self.classes)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("empty segmentation map")
        if arr.min() < 0 or arr.max() >= self.num_classes:
            raise ValueError(
                f"class id out of range [0, {self.num_classes}) in image {self.image_id!r}"
            )
        object.__setattr__(self, "classes", arr)

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]


@dataclass(frozen=True)
class EntityNode:
    """One entity class with its mean pixel coordinate (x, y)."""

    class_id: int
    centroid: tuple[float, float]


@dataclass(frozen=True)
class EntityGraph:
    """Undirected graph over entity classes; at most one node per class id."""

    nodes: Mapping[int, tuple[float, float]]  # class_id -> centroid
    edges: frozenset[tuple[int, int]]  # (i, j) with i < j
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on class {i}")
            if i not in self.nodes or j not in self.nodes:
                raise ValueError(f"edge ({i}, {j}) references missing node")
            if i > j:
                raise ValueError(f"edge ({i}, {j}) not in canonical (min, max) order")

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def neighbors(self, class_id: int) -> set[int]:
        out = set()
        for i, j in self.edges:
            if i == class_id:
                out.add(j)
            elif j == class_id:
                out.add(i)
        return out

    def degree(self, class_id: int) -> int:
        return sum(1 for i, j in self.edges if class_id in (i, j))


def compute_class_centroids(seg: SegmentationMap) -> list[EntityNode]:
    """Mean pixel coordinate per class id present in the raster.

    All regions of a class are pooled into a single centroid. Coordinates
    are (x, y) = (column, row) in pixel units.
    """
    arr = seg.classes
    if arr.size == 0:
        raise ValueError("empty segmentation map")
    nodes = []
    for cid in np.unique(arr):
        rows, cols = np.nonzero(arr == cid)
        nodes.append(EntityNode(int(cid), (float(cols.mean()), float(rows.mean()))))
    return nodes


def build_entity_graph(
    nodes: Iterable[EntityNode], threshold: float = DEFAULT_THRESHOLD
) -> EntityGraph:
    """Join nodes whose centroid distance is strictly below the threshold.

    Boundary equality (dist == threshold) yields no edge.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    node_map = {}
    for node in nodes:
        if node.class_id in node_map:
            raise ValueError(f"duplicate node for class {node.class_id}")
        node_map[node.class_id] = node.centroid
    ids = sorted(node_map)
    edges = set()
    for a in range(len(ids)):
        xa, ya = node_map[ids[a]]
        for b in range(a + 1, len(ids)):
            xb, yb = node_map[ids[b]]
            if math.hypot(xa - xb, ya - yb) < threshold:
                edges.add((ids[a], ids[b]))
    return EntityGraph(node_map, frozenset(edges), threshold)


def graph_from_segmentation(
    seg: SegmentationMap, threshold: float = DEFAULT_THRESHOLD
) -> EntityGraph:
    return build_entity_graph(compute_class_centroids(seg), threshold)


def merge_road_graphs(graphs: Sequence[EntityGraph]) -> EntityGraph:
    """Union of per-image graphs for one road.

    Node set is the union of class ids with the representative centroid
    taken as the unweighted mean of per-image centroids; edge set is the
    plain union. Associative and commutative at the set level.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("road has no images")
    thresholds = {g.threshold for g in graphs}
    if len(thresholds) > 1:
        raise ValueError(f"mixed thresholds in merge: {sorted(thresholds)}")
    sums: dict[int, list[float]] = {}
    for g in graphs:
        for cid, (x, y) in g.nodes.items():
            acc = sums.setdefault(cid, [0.0, 0.0, 0])
            acc[0] += x
            acc[1] += y
            acc[2] += 1
    nodes = {cid: (sx / k, sy / k) for cid, (sx, sy, k) in sums.items()}
    edges = frozenset(e for g in graphs for e in g.edges)
    return EntityGraph(nodes, edges, thresholds.pop())


def degree_centrality(graph: EntityGraph, class_id: int) -> float:
    """Node degree divided by (n - 1); requires at least two nodes."""
    n = graph.node_count
    if n < 2:
        raise ValueError("centrality undefined")
    if class_id not in graph.nodes:
        raise ValueError(f"class {class_id} is not a node of the graph")
    return graph.degree(class_id) / (n - 1)


def top_centrality(graph: EntityGraph, k: int) -> list[tuple[int, float]]:
    """Top-k (class_id, centrality) pairs, descending, ties by ascending id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if graph.node_count == 0:
        return []
    if graph.node_count < 2:
        raise ValueError("centrality undefined")
    ranked = sorted(
        ((cid, degree_centrality(graph, cid)) for cid in graph.nodes),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[: min(k, len(ranked))]


# ---------------------------------------------------------------------------
# File formats


def read_raster(path: str | Path, image_id: str = "", road_id: str = "") -> SegmentationMap:
    """Read a raster file: header line "width height K", then row-major ids."""
    path = Path(path)
    tokens = path.read_text().split()
    if len(tokens) < 3:
        raise ValueError(f"raster {path}: missing header")
    width, height, num_classes = (int(t) for t in tokens[:3])
    if width <= 0 or height <= 0:
        raise ValueError(f"raster {path}: non-positive dimensions")
    body = tokens[3:]
    if len(body) != width * height:
        raise ValueError(
            f"raster {path}: expected {width * height} ids, found {len(body)}"
        )
    arr = np.array([int(t) for t in body], dtype=np.int64).reshape(height, width)
    return SegmentationMap(arr, image_id or path.stem, road_id, num_classes)


def write_raster(path: str | Path, seg: SegmentationMap) -> None:
    lines = [f"{seg.width} {seg.height} {seg.num_classes}"]
    for row in seg.classes:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> list[tuple[str, str]]:
    """Manifest rows (image_file, road_id), one "file,road_id" per line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ValueError(f"manifest line {line!r}: expected 'file,road_id'")
        rows.append((parts[0], parts[1]))
    return rows


def write_graph(graph: EntityGraph, node_path: str | Path, edge_path: str | Path) -> None:
    """Export as a node file "class_id x y" and an edge list "class_i class_j"."""
    node_lines = [NODE_FILE_HEADER, f"# threshold {graph.threshold!r}"]
    for cid in sorted(graph.nodes):
        x, y = graph.nodes[cid]
        node_lines.append(f"{cid} {x!r} {y!r}")
    Path(node_path).write_text("\n".join(node_lines) + "\n")
    edge_lines = [EDGE_FILE_HEADER]
    for i, j in sorted(graph.edges):
        edge_lines.append(f"{i} {j}")
    Path(edge_path).write_text("\n".join(edge_lines) + "\n")


def read_graph(node_path: str | Path, edge_path: str | Path) -> EntityGraph:
    node_lines = Path(node_path).read_text().splitlines()
    if not node_lines or node_lines[0] != NODE_FILE_HEADER:
        raise ValueError(f"{node_path}: unknown node file version")
    threshold = DEFAULT_THRESHOLD
    nodes = {}
    for line in node_lines[1:]:
        if line.startswith("# threshold "):
            threshold = float(line.split()[-1])
            continue
        if not line.strip() or line.startswith("#"):
            continue
        cid, x, y = line.split()
        nodes[int(cid)] = (float(x), float(y))
    edge_lines = Path(edge_path).read_text().splitlines()
    if not edge_lines or edge_lines[0] != EDGE_FILE_HEADER:
        raise ValueError(f"{edge_path}: unknown edge file version")
    edges = set()
    for line in edge_lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        i, j = (int(t) for t in line.split())
        edges.add((min(i, j), max(i, j)))
    return EntityGraph(nodes, frozenset(edges), threshold)


def load_class_names(path: str | Path) -> dict[int, str]:
    """Id-to-name table, one "id<TAB>name" per line."""
    names = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cid, _, name = line.partition("\t")
        names[int(cid)] = name.strip()
    return names


def class_name(names: Mapping[int, str], class_id: int) -> str:
    return names.get(class_id, f"class_{class_id}")
