"""Command-line surface for the road-quality toolkit.

Stage commands (build-entity-graphs, embed-streets, build-city-graph,
train, cluster, report) read one config file; repeated --set flags
override config keys. Standalone commands (fixture, label, rate-serve,
evaluate, ablate) take direct flags. Exit codes: 0 success, 1 usage,
2 data error, 3 numeric failure. Set RESTOREGRAPH_LOG to a logging
level name (DEBUG, INFO, ...) for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .city_graph import read_roads
from .config import PipelineConfig, load_config
from .fixture import FixtureSpec, generate_fixture
from .gnn.model import (
    ablation_battery,
    evaluate,
    load_model,
    stratified_split,
    train,
)
from .city_graph import load_bundle
from .labeling import (
    composite_scores,
    label_roads,
    read_image_manifest,
    read_ledger,
    replay_ledger,
    write_label_set,
)
from .rating_service import RatingService, serve
from .trueskill import TrueSkillParams

log = logging.getLogger("restoregraph.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_NUMERIC_ERRORS = (FloatingPointError, ZeroDivisionError, OverflowError,
                   np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for data
    # errors, so route parse failures through UsageError instead
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key, e.g. --set model.epochs=200")
    parser.add_argument(
        "--force", action="store_true",
        help="rerun even when outputs are already current")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="restoregraph",
                     description="street-graph restoration-quality toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("build-entity-graphs", "segmentation rasters to per-road entity graphs"),
        ("embed-streets", "entity graphs to street structure vectors"),
        ("build-city-graph", "roads, points, labels to the city graph bundle"),
        ("train", "train the configured model on the city graph"),
        ("cluster", "cluster roads predicted as the configured class"),
        ("report", "entity-structure table per predicted class"),
    ):
        _add_config_flags(sub.add_parser(name, help=help_text))

    p = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    _add_config_flags(p)

    p = sub.add_parser("ablate", help="feature-group ablation battery")
    _add_config_flags(p)

    p = sub.add_parser("fixture", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--roads", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--field-scale", type=float, default=0.5)
    p.add_argument("--points-per-road", type=int, default=3)
    p.add_argument("--images-per-road", type=int, default=2)

    p = sub.add_parser("label", help="ledger + manifest to road labels")
    p.add_argument("--ledger", required=True, help="vote ledger file")
    p.add_argument("--manifest", required=True, help="image manifest csv")
    p.add_argument("--roads", required=True, help="roads file")
    p.add_argument("--out", required=True, help="label set file to write")
    p.add_argument("--half-width", type=float, default=25.0)

    p = sub.add_parser("rate-serve", help="run the rating HTTP service")
    p.add_argument("--manifest", required=True, help="image manifest csv")
    p.add_argument("--images", default=None,
                   help="image directory (default: manifest directory)")
    p.add_argument("--ledger", required=True, help="vote ledger path")
    p.add_argument("--static", default=None, help="static asset directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)

    return parser


# ---------------------------------------------------------------------------
# Command bodies


_STAGE_FOR_COMMAND = {
    "build-entity-graphs": "build",
    "embed-streets": "embed",
    "build-city-graph": "assemble",
    "train": "train",
}


def _run_stage_command(args) -> int:
    cfg = load_config(args.config, args.set)
    stage = _STAGE_FOR_COMMAND[args.command]
    record = pipeline.run_stage(cfg, stage, force=args.force)
    state = "up to date" if record.skipped else f"done in {record.elapsed_s:.2f}s"
    print(f"{stage}: {state}")
    for path in record.outputs:
        print(f"  {path}")
    return EXIT_OK


def _run_cluster(args) -> int:
    cfg = load_config(args.config, args.set)
    pipeline.run_cluster(cfg)
    print(f"cluster: wrote {cfg.out_dir}/silhouette.txt and {cfg.out_dir}/clusters.txt")
    return EXIT_OK


def _run_report(args) -> int:
    cfg = load_config(args.config, args.set)
    pipeline.run_report(cfg)
    print(f"report: wrote {cfg.out_dir}/structure_report.txt")
    return EXIT_OK


def _run_evaluate(args) -> int:
    cfg = load_config(args.config, args.set)
    graph = load_bundle(Path(cfg.out_dir) / "city_graph")
    model = load_model(Path(cfg.out_dir) / "model.ckpt")
    model.bind(graph.weights)
    _, _, test_mask = stratified_split(
        graph.labels, cfg.model.split, cfg.model.seed)
    acc, f1, confusion = evaluate(model, graph, test_mask)
    print(f"arch {model.cfg.arch}")
    print(f"scheme {cfg.scheme}")
    print(f"test_accuracy {acc:.6f}")
    print(f"test_macro_f1 {f1:.6f}")
    print("confusion " + " ".join(str(int(v)) for v in confusion.ravel()))
    return EXIT_OK


def _run_ablate(args) -> int:
    cfg = load_config(args.config, args.set)
    graph = load_bundle(Path(cfg.out_dir) / "city_graph")
    battery = ablation_battery(graph, cfg.model)
    width = max(len(name) for name in battery)
    print(f"{'experiment'.ljust(width)}  accuracy  macro_f1")
    for name, report in battery.items():
        print(f"{name.ljust(width)}  {report.accuracy:.4f}    {report.macro_f1:.4f}")
    return EXIT_OK


def _run_fixture(args) -> int:
    spec = FixtureSpec(
        roads=args.roads, seed=args.seed, signal=args.signal,
        noise=args.noise, field_scale=args.field_scale,
        points_per_road=args.points_per_road,
        images_per_road=args.images_per_road,
    )
    paths = generate_fixture(spec, args.out)
    print(f"fixture: wrote {paths.root}")
    return EXIT_OK


def _run_label(args) -> int:
    records = read_ledger(args.ledger)
    manifest = read_image_manifest(args.manifest)
    state = replay_ledger([r.image_id for r in manifest], records,
                          TrueSkillParams())
    scores, incomplete = composite_scores(state)
    if incomplete:
        log.warning("%d images missing comparisons were skipped", len(incomplete))
    if not scores:
        raise ValueError("no image has comparisons on every indicator")
    location = {r.image_id: (r.x, r.y) for r in manifest}
    scored_points = [(location[img], score) for img, score in scores.items()]
    labels = label_roads(scored_points, read_roads(args.roads),
                         half_width=args.half_width)
    write_label_set(args.out, labels)
    print(f"label: wrote {args.out} ({len(labels.classes)} roads)")
    return EXIT_OK


def _run_rate_serve(args) -> int:
    manifest = read_image_manifest(args.manifest)
    image_dir = args.images or str(Path(args.manifest).parent)
    service = RatingService(
        manifest, image_dir, args.ledger,
        static_dir=args.static, seed=args.seed,
    )
    serve(service, host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "build-entity-graphs": _run_stage_command,
    "embed-streets": _run_stage_command,
    "build-city-graph": _run_stage_command,
    "train": _run_stage_command,
    "cluster": _run_cluster,
    "report": _run_report,
    "evaluate": _run_evaluate,
    "ablate": _run_ablate,
    "fixture": _run_fixture,
    "label": _run_label,
    "rate-serve": _run_rate_serve,
}


def _classify(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, pipeline.StageError) else exc
    if isinstance(cause, _NUMERIC_ERRORS):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    level = os.environ.get("RESTOREGRAPH_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if level in ("DEBUG", "INFO", "WARNING", "ERROR",
                                 "CRITICAL") else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, json.JSONDecodeError,
            pipeline.StageError, *_NUMERIC_ERRORS) as exc:
        code = _classify(exc)
        kind = "numeric failure" if code == EXIT_NUMERIC else "data error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
