"""Sequential pipeline: build -> embed -> assemble -> train -> analyze.

Every stage reads files written by earlier stages, writes versioned
outputs under the configured output directory, and records provenance
(config snapshot, seeds, output digests, timings) in provenance/.
Outputs are pure functions of the config, so a rerun either skips a
finished stage or rewrites byte-identical files; only provenance
records carry wall-clock times. A failed stage leaves a .incomplete
marker naming the error instead of a completion record.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .analysis import (
    class_structure_graphs,
    format_structure_table,
    kmeans,
    silhouette_sweep,
    write_assignments,
    write_silhouette_table,
    write_structure_report,
)
from .city_graph import (
    LABEL_NAMES,
    assemble_city_graph,
    load_bundle,
    read_feature_points,
    read_labels,
    read_roads,
    save_bundle,
)
from .config import PipelineConfig, config_hash, config_text
from .entity_graph import (
    EntityGraph,
    graph_from_segmentation,
    load_class_names,
    merge_road_graphs,
    read_graph,
    read_manifest,
    read_raster,
    write_graph,
)
from .gnn.model import load_model, save_model, train
from .street_embed import embed_road, read_street_vectors, write_street_vectors

log = logging.getLogger("restoregraph.pipeline")

PROVENANCE_FORMAT = "restoregraph-provenance"
PROVENANCE_VERSION = 1
INDEX_HEADER = "# restoregraph entity-index v1"
TRAIN_REPORT_HEADER = "# restoregraph train-report v1"

STAGE_NAMES = ("build", "embed", "assemble", "train", "analyze")


class StageError(RuntimeError):
    """A stage failed; the message always names the stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class StageRecord:
    stage: str
    skipped: bool
    elapsed_s: float
    outputs: tuple[str, ...]


# ---------------------------------------------------------------------------
# Per-stage output locations


def stage_outputs(cfg: PipelineConfig, stage: str) -> list[Path]:
    out = Path(cfg.out_dir)
    table = {
        "build": [out / "entity_graphs" / "index.txt"],
        "embed": [out / "street_vectors.txt"],
        "assemble": [out / "city_graph" / p
                     for p in ("nodes.txt", "features.bin",
                               "adjacency.txt", "labels.txt")],
        "train": [out / "model.ckpt", out / "train_report.txt"],
        "analyze": [out / "silhouette.txt", out / "clusters.txt",
                    out / "structure_report.txt"],
    }
    return table[stage]


def _entity_graph_paths(cfg: PipelineConfig, road_id: str) -> tuple[Path, Path]:
    base = Path(cfg.out_dir) / "entity_graphs"
    return base / f"{road_id}.nodes.txt", base / f"{road_id}.edges.txt"


def _read_index(cfg: PipelineConfig) -> list[str]:
    path = Path(cfg.out_dir) / "entity_graphs" / "index.txt"
    lines = path.read_text().splitlines()
    if not lines or lines[0] != INDEX_HEADER:
        raise ValueError(f"{path}: unknown format version")
    return [line.strip() for line in lines[1:] if line.strip()]


def _load_entity_graphs(cfg: PipelineConfig) -> dict[str, EntityGraph]:
    return {
        rid: read_graph(*_entity_graph_paths(cfg, rid))
        for rid in _read_index(cfg)
    }


# ---------------------------------------------------------------------------
# Stage bodies


def run_build(cfg: PipelineConfig) -> None:
    """Segmentation rasters -> one merged entity graph per road."""
    manifest_dir = Path(cfg.rasters_path).parent
    by_road: dict[str, list[EntityGraph]] = {}
    for filename, road_id in read_manifest(cfg.rasters_path):
        seg = read_raster(manifest_dir / filename,
                          image_id=Path(filename).stem, road_id=road_id)
        by_road.setdefault(road_id, []).append(
            graph_from_segmentation(seg, cfg.entity_threshold))

    base = Path(cfg.out_dir) / "entity_graphs"
    base.mkdir(parents=True, exist_ok=True)
    road_ids = sorted(by_road)
    for rid in road_ids:
        merged = merge_road_graphs(by_road[rid])
        write_graph(merged, *_entity_graph_paths(cfg, rid))
    (base / "index.txt").write_text(
        "\n".join([INDEX_HEADER, *road_ids]) + "\n")


def run_embed(cfg: PipelineConfig) -> None:
    """Per-road entity graphs -> street structure vectors."""
    graphs = _load_entity_graphs(cfg)
    vectors = [
        embed_road(rid, graphs[rid], cfg.walk, seed=cfg.walk.seed)
        for rid in sorted(graphs)
    ]
    write_street_vectors(Path(cfg.out_dir) / "street_vectors.txt", vectors)


def run_assemble(cfg: PipelineConfig) -> None:
    """Roads + points + labels + street vectors -> city graph bundle."""
    roads = read_roads(cfg.roads_path)
    points = read_feature_points(cfg.points_path)
    labels = read_labels(cfg.labels_path)
    vectors = {
        v.road_id: v.values
        for v in read_street_vectors(Path(cfg.out_dir) / "street_vectors.txt")
    }
    graph = assemble_city_graph(
        roads, points, labels,
        scheme=cfg.scheme, half_width=cfg.half_width,
        knn_k=cfg.knn_k, queen_tol=cfg.queen_tol,
        street_vectors=vectors,
    )
    save_bundle(graph, Path(cfg.out_dir) / "city_graph")


def run_train(cfg: PipelineConfig) -> None:
    """City graph -> trained model checkpoint + metrics report."""
    graph = load_bundle(Path(cfg.out_dir) / "city_graph")
    model, report = train(graph, cfg.model)
    save_model(model, Path(cfg.out_dir) / "model.ckpt")

    # wall time stays out of this file so reruns are byte-identical
    lines = [
        TRAIN_REPORT_HEADER,
        f"arch {report.arch}",
        f"scheme {cfg.scheme}",
        f"seed {report.seed}",
        f"test_accuracy {report.accuracy:.6f}",
        f"test_macro_f1 {report.macro_f1:.6f}",
        f"val_accuracy {report.val_accuracy:.6f}",
        f"val_macro_f1 {report.val_macro_f1:.6f}",
        "confusion " + " ".join(str(int(v)) for v in report.confusion.ravel()),
    ]
    (Path(cfg.out_dir) / "train_report.txt").write_text("\n".join(lines) + "\n")


def _predictions(cfg: PipelineConfig):
    """Load the bundle and checkpoint, predict a class for every road."""
    out = Path(cfg.out_dir)
    graph = load_bundle(out / "city_graph")
    model = load_model(out / "model.ckpt")
    model.bind(graph.weights)
    return graph, model.predict(graph.X)


def run_cluster(cfg: PipelineConfig) -> None:
    """Cluster the roads predicted as the configured class."""
    out = Path(cfg.out_dir)
    graph, pred = _predictions(cfg)

    target = LABEL_NAMES.index(cfg.cluster_class)
    chosen = np.flatnonzero(pred == target)
    if chosen.size < 4:
        raise ValueError(
            f"only {chosen.size} roads predicted {cfg.cluster_class!r}; "
            "need at least 4 to cluster")
    vectors = graph.X[chosen]
    ids = [graph.road_ids[i] for i in chosen]

    k_max = min(cfg.k_max, chosen.size - 1)
    sweep = silhouette_sweep(vectors, range(cfg.k_min, k_max + 1),
                             seed=cfg.analysis_seed)
    write_silhouette_table(out / "silhouette.txt", sweep)
    result = kmeans(vectors, sweep.best_k, seed=cfg.analysis_seed, ids=ids)
    write_assignments(out / "clusters.txt", result)


def run_report(cfg: PipelineConfig) -> None:
    """Entity-structure table for every predicted class."""
    graph, pred = _predictions(cfg)
    graphs = _load_entity_graphs(cfg)
    groups: dict[str, list[EntityGraph]] = {name: [] for name in LABEL_NAMES}
    for i, rid in enumerate(graph.road_ids):
        if rid in graphs:
            groups[LABEL_NAMES[int(pred[i])]].append(graphs[rid])
    reports = class_structure_graphs(groups, top_k=cfg.top_k)
    names = (load_class_names(cfg.names_path)
             if cfg.names_path is not None else None)
    write_structure_report(Path(cfg.out_dir) / "structure_report.txt",
                           format_structure_table(reports, names))


def run_analyze(cfg: PipelineConfig) -> None:
    """Predictions -> clustering of the chosen class + structure report."""
    run_cluster(cfg)
    run_report(cfg)


_STAGE_BODIES: Mapping[str, Callable[[PipelineConfig], None]] = {
    "build": run_build,
    "embed": run_embed,
    "assemble": run_assemble,
    "train": run_train,
    "analyze": run_analyze,
}


# ---------------------------------------------------------------------------
# Provenance and orchestration


def _provenance_dir(cfg: PipelineConfig) -> Path:
    return Path(cfg.out_dir) / "provenance"


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_provenance(cfg: PipelineConfig, stage: str, elapsed: float) -> None:
    outputs = stage_outputs(cfg, stage)
    record = {
        "format": PROVENANCE_FORMAT,
        "version": PROVENANCE_VERSION,
        "stage": stage,
        "config_sha256": config_hash(cfg),
        "config": config_text(cfg),
        "elapsed_s": round(elapsed, 3),
        "written_unix": round(time.time(), 3),
        "outputs": {
            str(p.relative_to(cfg.out_dir)): _digest(p) for p in outputs
        },
    }
    pdir = _provenance_dir(cfg)
    pdir.mkdir(parents=True, exist_ok=True)
    (pdir / f"{stage}.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")


def _mark_incomplete(cfg: PipelineConfig, stage: str, error: BaseException) -> None:
    pdir = _provenance_dir(cfg)
    pdir.mkdir(parents=True, exist_ok=True)
    (pdir / f"{stage}.json").unlink(missing_ok=True)
    (pdir / f"{stage}.incomplete").write_text(
        json.dumps({"stage": stage, "error": str(error)}) + "\n")


def stage_is_current(cfg: PipelineConfig, stage: str) -> bool:
    """True when a completion record matches the config and outputs exist."""
    record_path = _provenance_dir(cfg) / f"{stage}.json"
    if not record_path.is_file():
        return False
    try:
        record = json.loads(record_path.read_text())
    except json.JSONDecodeError:
        return False
    if (record.get("format") != PROVENANCE_FORMAT
            or record.get("version") != PROVENANCE_VERSION
            or record.get("config_sha256") != config_hash(cfg)):
        return False
    return all(p.is_file() for p in stage_outputs(cfg, stage))


def run_stage(cfg: PipelineConfig, stage: str, force: bool = False) -> StageRecord:
    """Run one stage; skip when its outputs are already current."""
    if stage not in _STAGE_BODIES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGE_NAMES}")
    if not force and stage_is_current(cfg, stage):
        log.info("stage %s up to date, skipped", stage)
        return StageRecord(stage, True, 0.0, tuple(
            str(p) for p in stage_outputs(cfg, stage)))

    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        _STAGE_BODIES[stage](cfg)
    except Exception as exc:
        _mark_incomplete(cfg, stage, exc)
        raise StageError(stage, exc) from exc
    elapsed = time.perf_counter() - started
    (_provenance_dir(cfg) / f"{stage}.incomplete").unlink(missing_ok=True)
    _write_provenance(cfg, stage, elapsed)
    log.info("stage %s finished in %.2fs", stage, elapsed)
    return StageRecord(stage, False, elapsed, tuple(
        str(p) for p in stage_outputs(cfg, stage)))


def run_pipeline(
    cfg: PipelineConfig, force: bool = False
) -> list[StageRecord]:
    """All five stages in order; any failure aborts the remainder."""
    return [run_stage(cfg, stage, force=force) for stage in STAGE_NAMES]
