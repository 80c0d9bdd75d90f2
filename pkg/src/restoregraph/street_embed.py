"""Fixed-length spatial structure vectors for roads.

Each road's merged entity graph is encoded by random-walk skip-gram
embeddings (dimension 32), pushed through two fixed-seed graph
propagation layers (32 then 16 wide) and mean-pooled, then projected to
the 5-dimensional street vector consumed by the city graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .entity_graph import EntityGraph
from .gnn.ops import glorot, normalize_adjacency, relu

STREET_VECTOR_DIM = 5
PROP_WIDTHS = (32, 16)
VECTORS_HEADER = "# restoregraph street-vectors v1"

_BATCH = 1024


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    embed_dim: int = 32
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        counts = {
            "walks_per_node": self.walks_per_node,
            "walk_length": self.walk_length,
            "window": self.window,
            "negatives": self.negatives,
            "epochs": self.epochs,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.embed_dim < 2:
            raise ValueError(f"embed_dim must be >= 2, got {self.embed_dim}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class StreetStructureVector:
    road_id: str
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != STREET_VECTOR_DIM:
            raise ValueError(
                f"street vector must have length {STREET_VECTOR_DIM}, got {len(vals)}"
            )
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("street vector contains non-finite values")
        object.__setattr__(self, "values", vals)


def _generate_walks(
    graph: EntityGraph, cfg: WalkConfig, rng: np.random.Generator
) -> list[list[int]]:
    order = sorted(graph.nodes)
    neighbors = {v: sorted(graph.neighbors(v)) for v in order}
    walks = []
    for _round in range(cfg.walks_per_node):
        for start in order:
            walk = [start]
            current = start
            for _step in range(cfg.walk_length - 1):
                nbrs = neighbors[current]
                if not nbrs:
                    break
                current = nbrs[rng.integers(len(nbrs))]
                walk.append(current)
            walks.append(walk)
    return walks


def random_walks(graph: EntityGraph, cfg: WalkConfig) -> list[list[int]]:
    """Truncated uniform random walks, walks_per_node from every node.

    A walk stops early at a node with no neighbors.
    """
    if not graph.nodes:
        raise ValueError("empty entity graph")
    return _generate_walks(graph, cfg, np.random.default_rng(cfg.seed))


def deepwalk_embed(graph: EntityGraph, cfg: WalkConfig) -> dict[int, np.ndarray]:
    """Skip-gram embeddings with negative sampling over walk co-occurrences.

    Deterministic for a fixed cfg.seed. Nodes that never co-occur inside a
    window (isolated nodes) keep their initialization.
    """
    if not graph.nodes:
        raise ValueError("empty entity graph")
    order = sorted(graph.nodes)
    index = {v: i for i, v in enumerate(order)}
    n = len(order)

    rng = np.random.default_rng(cfg.seed)
    walks = [
        np.array([index[v] for v in walk], dtype=np.int64)
        for walk in _generate_walks(graph, cfg, rng)
    ]

    centers_parts, contexts_parts = [], []
    for walk in walks:
        for offset in range(1, cfg.window + 1):
            if walk.size <= offset:
                break
            centers_parts.append(walk[:-offset])
            contexts_parts.append(walk[offset:])
            centers_parts.append(walk[offset:])
            contexts_parts.append(walk[:-offset])
    w_in = rng.uniform(-0.5, 0.5, size=(n, cfg.embed_dim)) / cfg.embed_dim
    if not centers_parts:
        return {v: w_in[index[v]].copy() for v in order}
    centers = np.concatenate(centers_parts)
    contexts = np.concatenate(contexts_parts)

    counts = np.zeros(n, dtype=np.float64)
    for walk in walks:
        counts += np.bincount(walk, minlength=n)
    noise = counts ** 0.75
    noise /= noise.sum()

    w_out = np.zeros((n, cfg.embed_dim))
    lr = cfg.learning_rate
    for _epoch in range(cfg.epochs):
        perm = rng.permutation(centers.size)
        for lo in range(0, perm.size, _BATCH):
            sel = perm[lo:lo + _BATCH]
            c, o = centers[sel], contexts[sel]
            neg = rng.choice(n, size=(sel.size, cfg.negatives), p=noise)

            u = w_in[c]
            v_pos = w_out[o]
            v_neg = w_out[neg]
            g_pos = _sigmoid((u * v_pos).sum(axis=1)) - 1.0
            g_neg = _sigmoid(np.einsum("bd,bkd->bk", u, v_neg))

            grad_u = g_pos[:, None] * v_pos + np.einsum("bk,bkd->bd", g_neg, v_neg)
            np.add.at(w_in, c, -lr * grad_u)
            np.add.at(w_out, o, -lr * g_pos[:, None] * u)
            np.add.at(
                w_out,
                neg.reshape(-1),
                -lr * (g_neg[:, :, None] * u[:, None, :]).reshape(-1, cfg.embed_dim),
            )

    return {v: w_in[index[v]].copy() for v in order}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def projection_weights(
    embed_dim: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed-seed weights for the propagation stack and the final readout.

    These are never trained; they form a deterministic structure-aware
    projection on top of the walk embeddings.
    """
    rng = np.random.default_rng(seed)
    w1 = glorot(rng, embed_dim, PROP_WIDTHS[0])
    w2 = glorot(rng, PROP_WIDTHS[0], PROP_WIDTHS[1])
    w3 = glorot(rng, PROP_WIDTHS[1], STREET_VECTOR_DIM)
    return w1, w2, w3


def embed_road(
    road_id: str, graph: EntityGraph, cfg: WalkConfig, seed: int = 0
) -> StreetStructureVector:
    """Walk embeddings -> two propagation layers -> mean pool -> 5 values."""
    embeddings = deepwalk_embed(graph, cfg)
    order = sorted(graph.nodes)
    index = {v: i for i, v in enumerate(order)}
    h = np.vstack([embeddings[v] for v in order])

    n = len(order)
    a = np.zeros((n, n))
    for i, j in graph.edges:
        a[index[i], index[j]] = a[index[j], index[i]] = 1.0
    a_norm = normalize_adjacency(a)

    w1, w2, w3 = projection_weights(cfg.embed_dim, seed)
    h = relu(a_norm @ h @ w1)
    h = relu(a_norm @ h @ w2)
    pooled = h.mean(axis=0)
    return StreetStructureVector(road_id, tuple((pooled @ w3).tolist()))


def write_street_vectors(path, vectors) -> None:
    lines = [VECTORS_HEADER]
    for vec in vectors:
        lines.append(vec.road_id + " " + " ".join(repr(v) for v in vec.values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_street_vectors(path) -> list[StreetStructureVector]:
    path = Path(path)
    lines = path.read_text().splitlines()
    vectors = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# restoregraph") and line != VECTORS_HEADER:
                raise ValueError(f"{path}: unknown format version {line!r}")
            continue
        tokens = line.split()
        vectors.append(
            StreetStructureVector(tokens[0], tuple(float(t) for t in tokens[1:]))
        )
    return vectors
