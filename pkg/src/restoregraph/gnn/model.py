"""Model assembly, semi-supervised training, evaluation, ablation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..city_graph import GROUP_ORDER, UNLABELED, CityGraph, SpatialWeights
from .layers import (
    AttentionLayer,
    DenseLayer,
    GraphConvLayer,
    NeighborMeanLayer,
    cross_entropy_loss,
    softmax,
    softmax_cross_entropy_backward,
)
from .ops import normalize_adjacency

NUM_CLASSES = 3
ARCHES = ("gcn", "gat", "sage", "mlp")

CHECKPOINT_FORMAT = "restoregraph-model"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "gcn"
    hidden: tuple[int, ...] = (64, 32)
    heads: int = 4
    epochs: int = 500
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    seed: int = 0
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self):
        if self.arch not in ARCHES:
            raise ValueError(f"unknown arch {self.arch!r}")
        hidden = tuple(int(w) for w in self.hidden)
        if not hidden or any(w < 1 for w in hidden):
            raise ValueError("hidden must be a nonempty list of positive widths")
        object.__setattr__(self, "hidden", hidden)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        split = tuple(float(f) for f in self.split)
        if len(split) != 3 or any(f <= 0 for f in split):
            raise ValueError("split needs 3 positive fractions")
        if abs(sum(split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(split)}")
        object.__setattr__(self, "split", split)


@dataclass
class TrainReport:
    loss_curve: list[float]
    accuracy: float
    macro_f1: float
    confusion: np.ndarray  # (3, 3), rows = true class
    wall_time_s: float
    seed: int
    arch: str
    val_accuracy: float
    val_macro_f1: float


class GnnModel:
    """A trained (or freshly initialized) layer stack over one graph shape."""

    def __init__(self, cfg: ModelConfig, in_dim: int):
        self.cfg = cfg
        self.in_dim = in_dim
        rng = np.random.default_rng(cfg.seed)
        dims = [in_dim, *cfg.hidden, NUM_CLASSES]
        self.layers = []
        for li, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            last = li == len(dims) - 2
            act = "identity" if last else "relu"
            if cfg.arch == "gcn":
                self.layers.append(GraphConvLayer(rng, d_in, d_out, act))
            elif cfg.arch == "mlp":
                self.layers.append(DenseLayer(rng, d_in, d_out, act))
            elif cfg.arch == "sage":
                self.layers.append(NeighborMeanLayer(rng, d_in, d_out, act))
            elif cfg.arch == "gat":
                heads = 1 if last else cfg.heads
                reduce = "mean" if last else "concat"
                self.layers.append(
                    AttentionLayer(rng, d_in, d_out, heads, act, reduce)
                )

    def bind(self, weights: SpatialWeights) -> None:
        """Attach the graph structure every layer will propagate over."""
        if self.cfg.arch == "gcn":
            ctx = normalize_adjacency(weights.dense())
        elif self.cfg.arch == "mlp":
            ctx = None
        elif self.cfg.arch == "sage":
            a = weights.dense().astype(np.float64)
            deg = a.sum(axis=1, keepdims=True)
            ctx = np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)
        elif self.cfg.arch == "gat":
            ctx = gat_edges(weights)
        for layer in self.layers:
            layer.bind(ctx)

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def backward(self, d_logits: np.ndarray) -> np.ndarray:
        d = d_logits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d


def gat_edges(weights: SpatialWeights) -> tuple[np.ndarray, np.ndarray, int]:
    """Directed (dst, src) arrays with self-loops, sorted by (dst, src)."""
    n = weights.n
    dst = [np.arange(n)]
    src = [np.arange(n)]
    if weights.edges:
        e = np.array(sorted(weights.edges), dtype=np.int64)
        dst.append(e[:, 0])
        src.append(e[:, 1])
        dst.append(e[:, 1])
        src.append(e[:, 0])
    dst_arr = np.concatenate(dst)
    src_arr = np.concatenate(src)
    order = np.lexsort((src_arr, dst_arr))
    return dst_arr[order], src_arr[order], n


def stratified_split(
    labels: np.ndarray,
    fractions: tuple[float, float, float],
    seed: int,
    allow_degenerate: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean train/val/test masks over labeled nodes, per-class shares.

    Every class present in the labels lands at least one node in each
    split. Unlabeled nodes belong to no split.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    rng = np.random.default_rng(seed)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    present = [c for c in range(NUM_CLASSES) if (labels == c).any()]
    if not allow_degenerate:
        short = [c for c in range(NUM_CLASSES)
                 if 0 < (labels == c).sum() < 3 or (labels == c).sum() == 0]
        if len(present) < NUM_CLASSES or short:
            raise ValueError("degenerate split: every class needs >= 3 labeled nodes")
    for c in present:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_tr = max(1, int(round(idx.size * fractions[0])))
        n_val = max(1, int(round(idx.size * fractions[1])))
        n_tr = min(n_tr, idx.size - 2) if idx.size >= 3 else max(1, idx.size - 2)
        n_val = min(n_val, idx.size - n_tr - 1) if idx.size - n_tr >= 2 else 0
        masks[0][idx[:n_tr]] = True
        if n_val > 0:
            masks[1][idx[n_tr:n_tr + n_val]] = True
            masks[2][idx[n_tr + n_val:]] = True
        else:
            masks[2][idx[n_tr:]] = True
    if not masks[2].any():
        raise ValueError("degenerate split: empty test set")
    return masks[0], masks[1], masks[2]


class Adam:
    """Adam with additive L2 weight decay on the gradient."""

    def __init__(self, params, lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = p.grad + self.wd * p.value
            p.m = b1 * p.m + (1 - b1) * g
            p.v = b2 * p.v + (1 - b2) * (g * g)
            m_hat = p.m / (1 - b1 ** self.t)
            v_hat = p.v / (1 - b2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    graph: CityGraph, cfg: ModelConfig, allow_degenerate: bool = False
) -> tuple[GnnModel, TrainReport]:
    """Full-batch deterministic training on the graph's labeled nodes."""
    t0 = time.perf_counter()
    labels = graph.labels
    train_mask, val_mask, test_mask = stratified_split(
        labels, cfg.split, cfg.seed, allow_degenerate
    )

    model = GnnModel(cfg, graph.X.shape[1])
    model.bind(graph.weights)
    optimizer = Adam(model.params(), cfg.learning_rate, cfg.weight_decay)

    safe_labels = np.where(labels == UNLABELED, 0, labels)
    loss_curve = []
    for _epoch in range(cfg.epochs):
        probs = softmax(model.logits(graph.X))
        loss_curve.append(cross_entropy_loss(probs, safe_labels, train_mask))
        d_logits = softmax_cross_entropy_backward(probs, safe_labels, train_mask)
        for p in model.params():
            p.zero_grad()
        model.backward(d_logits)
        optimizer.step()

    acc, f1, confusion = evaluate(model, graph, test_mask)
    val_acc, val_f1, _ = evaluate(model, graph, val_mask) if val_mask.any() else (
        float("nan"), float("nan"), None)
    report = TrainReport(
        loss_curve=loss_curve,
        accuracy=acc,
        macro_f1=f1,
        confusion=confusion,
        wall_time_s=time.perf_counter() - t0,
        seed=cfg.seed,
        arch=cfg.arch,
        val_accuracy=val_acc,
        val_macro_f1=val_f1,
    )
    return model, report


def evaluate(
    model: GnnModel, graph: CityGraph, mask: np.ndarray
) -> tuple[float, float, np.ndarray]:
    """Accuracy, macro-F1 and 3x3 confusion (rows = true) on masked nodes."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    pred = model.predict(graph.X)
    return score_predictions(graph.labels[mask], pred[mask])


def score_predictions(
    true: np.ndarray, pred: np.ndarray
) -> tuple[float, float, np.ndarray]:
    true = np.asarray(true)
    pred = np.asarray(pred)
    for name, arr in (("true", true), ("predicted", pred)):
        if arr.size == 0 or arr.min() < 0 or arr.max() >= NUM_CLASSES:
            raise ValueError(f"{name} classes must be in 0..{NUM_CLASSES - 1}")
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    accuracy = float(confusion.trace() / confusion.sum())
    f1s = []
    for c in range(NUM_CLASSES):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return accuracy, float(np.mean(f1s)), confusion


def keep_groups(graph: CityGraph, groups_to_keep: Sequence[str]) -> CityGraph:
    """A copy of the graph restricted to the named feature groups."""
    keep = [g for g in GROUP_ORDER if g in groups_to_keep]
    if not keep:
        raise ValueError("must keep at least one feature group")
    unknown = sorted(set(groups_to_keep) - set(graph.group_spans))
    if unknown:
        raise ValueError(f"unknown feature groups: {unknown}")
    cols = []
    spans = {}
    cursor = 0
    for g in keep:
        s, e = graph.group_spans[g]
        cols.extend(range(s, e))
        spans[g] = (cursor, cursor + (e - s))
        cursor += e - s
    return CityGraph(
        graph.road_ids,
        graph.midpoints,
        graph.X[:, cols],
        graph.weights,
        graph.labels,
        spans,
    )


def ablate(
    graph: CityGraph, groups_to_keep: Sequence[str], cfg: ModelConfig
) -> TrainReport:
    """Drop the other groups' columns entirely, retrain, report."""
    _, report = train(keep_groups(graph, groups_to_keep), cfg)
    return report


def ablation_battery(
    graph: CityGraph, cfg: ModelConfig
) -> dict[str, TrainReport]:
    """Five experiments: everything, drop each group, spatial alone."""
    groups = [g for g in GROUP_ORDER if g in graph.group_spans]
    runs: dict[str, list[str]] = {"all": list(groups)}
    for g in ("spatial", "perception", "socioeconomic"):
        if g in groups and len(groups) > 1:
            runs[f"without {g}"] = [x for x in groups if x != g]
    if "spatial" in groups and len(groups) > 1:
        runs["only spatial"] = ["spatial"]
    return {name: ablate(graph, keep, cfg) for name, keep in runs.items()}


# ---------------------------------------------------------------------------
# Checkpoints and report export


def save_model(model: GnnModel, path: str | Path) -> None:
    arrays = [p.value for p in model.params()]
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": model.cfg.arch,
        "in_dim": model.in_dim,
        "hidden": list(model.cfg.hidden),
        "heads": model.cfg.heads,
        "seed": model.cfg.seed,
        "epochs": model.cfg.epochs,
        "learning_rate": model.cfg.learning_rate,
        "weight_decay": model.cfg.weight_decay,
        "split": list(model.cfg.split),
        "shapes": [list(a.shape) for a in arrays],
        "dtype": "<f8",
    }
    payload = json.dumps(header, sort_keys=True).encode() + b"\n"
    for a in arrays:
        payload += np.ascontiguousarray(a, dtype="<f8").tobytes()
    Path(path).write_bytes(payload)


def load_model(path: str | Path) -> GnnModel:
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline])
    if (header.get("format") != CHECKPOINT_FORMAT
            or header.get("version") != CHECKPOINT_VERSION):
        raise ValueError(f"{path}: unknown checkpoint format version")
    cfg = ModelConfig(
        arch=header["arch"],
        hidden=tuple(header["hidden"]),
        heads=header["heads"],
        epochs=header["epochs"],
        learning_rate=header["learning_rate"],
        weight_decay=header["weight_decay"],
        seed=header["seed"],
        split=tuple(header["split"]),
    )
    model = GnnModel(cfg, header["in_dim"])
    offset = newline + 1
    params = model.params()
    if len(params) != len(header["shapes"]):
        raise ValueError(f"{path}: checkpoint parameter count mismatch")
    for p, shape in zip(params, header["shapes"]):
        shape = tuple(shape)
        if p.value.shape != shape:
            raise ValueError(f"{path}: shape mismatch {p.value.shape} vs {shape}")
        count = int(np.prod(shape))
        p.value = np.frombuffer(
            raw, dtype="<f8", count=count, offset=offset
        ).reshape(shape).copy()
        offset += count * 8
    return model


def report_row(report: TrainReport, scheme: str = "") -> dict:
    return {
        "model": report.arch.upper(),
        "scheme": scheme,
        "accuracy": round(report.accuracy, 4),
        "macro_f1": round(report.macro_f1, 4),
        "wall_time_s": round(report.wall_time_s, 2),
        "seed": report.seed,
    }


def format_report_table(rows: Sequence[Mapping]) -> str:
    """Fixed-width text table of evaluation rows."""
    headers = ["model", "scheme", "accuracy", "macro_f1", "wall_time_s", "seed"]
    widths = {h: max(len(h), *(len(str(r.get(h, ""))) for r in rows)) for h in headers}
    lines = ["  ".join(h.ljust(widths[h]) for h in headers)]
    lines.append("  ".join("-" * widths[h] for h in headers))
    for r in rows:
        lines.append("  ".join(str(r.get(h, "")).ljust(widths[h]) for h in headers))
    return "\n".join(lines)
