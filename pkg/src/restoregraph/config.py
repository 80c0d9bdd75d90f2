"""Plain-text pipeline configuration: sectioned key = value pairs.

A config file drives the whole pipeline. Lines look like
"model.epochs = 500"; blank lines and # comments are ignored. Relative
paths resolve against the config file's directory, so a config can ship
inside a dataset directory. Command-line overrides use the same
"section.key=value" spelling and are applied before validation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .city_graph import (
    DEFAULT_BUFFER,
    DEFAULT_KNN_K,
    DEFAULT_QUEEN_TOL,
    LABEL_NAMES,
)
from .entity_graph import DEFAULT_THRESHOLD
from .gnn.model import ModelConfig
from .street_embed import WalkConfig
from .trueskill import TrueSkillParams


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view of one config file; every field has a working default."""

    roads_path: Path = Path("roads.txt")
    rasters_path: Path = Path("rasters/manifest.txt")
    points_path: Path = Path("feature_points.txt")
    labels_path: Path = Path("labels.txt")
    names_path: Path | None = None
    out_dir: Path = Path("out")

    entity_threshold: float = DEFAULT_THRESHOLD
    scheme: str = "knn"
    half_width: float = DEFAULT_BUFFER
    knn_k: int = DEFAULT_KNN_K
    queen_tol: float = DEFAULT_QUEEN_TOL

    walk: WalkConfig = field(default_factory=WalkConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    trueskill: TrueSkillParams = field(default_factory=TrueSkillParams)

    k_min: int = 2
    k_max: int = 20
    analysis_seed: int = 0
    top_k: int = 10
    cluster_class: str = "high"

    def __post_init__(self):
        if self.entity_threshold <= 0:
            raise ValueError("entity.threshold must be positive")
        if self.scheme not in ("knn", "queen"):
            raise ValueError("graph.scheme must be 'knn' or 'queen'")
        if self.half_width <= 0:
            raise ValueError("graph.half_width must be positive")
        if self.knn_k < 1:
            raise ValueError("graph.knn_k must be >= 1")
        if self.queen_tol < 0:
            raise ValueError("graph.queen_tol must be non-negative")
        if not 2 <= self.k_min <= self.k_max:
            raise ValueError("analysis.k_min..k_max must satisfy 2 <= min <= max")
        if self.top_k < 1:
            raise ValueError("analysis.top_k must be >= 1")
        if self.cluster_class not in LABEL_NAMES:
            raise ValueError(f"analysis.cluster_class must be one of {LABEL_NAMES}")


# flat "section.key" name -> (target, attribute, type)
_PATH_KEYS = {
    "paths.roads": "roads_path",
    "paths.rasters": "rasters_path",
    "paths.feature_points": "points_path",
    "paths.labels": "labels_path",
    "paths.names": "names_path",
    "paths.out": "out_dir",
}
_SCALAR_KEYS = {
    "entity.threshold": ("entity_threshold", float),
    "graph.scheme": ("scheme", str),
    "graph.half_width": ("half_width", float),
    "graph.knn_k": ("knn_k", int),
    "graph.queen_tol": ("queen_tol", float),
    "analysis.k_min": ("k_min", int),
    "analysis.k_max": ("k_max", int),
    "analysis.seed": ("analysis_seed", int),
    "analysis.top_k": ("top_k", int),
    "analysis.cluster_class": ("cluster_class", str),
}
_WALK_KEYS = {
    f"walk.{name}": (name, int if name != "learning_rate" else float)
    for name in ("walks_per_node", "walk_length", "window", "embed_dim",
                 "negatives", "epochs", "learning_rate", "seed")
}
_MODEL_TYPES = {
    "arch": str, "hidden": str, "heads": int, "epochs": int,
    "learning_rate": float, "weight_decay": float, "seed": int, "split": str,
}
_MODEL_KEYS = {f"model.{name}": (name, kind) for name, kind in _MODEL_TYPES.items()}
_TRUESKILL_KEYS = {
    f"trueskill.{name}": (name, float)
    for name in ("mu0", "sigma0", "beta", "tau", "draw_probability")
}

KNOWN_KEYS = (set(_PATH_KEYS) | set(_SCALAR_KEYS) | set(_WALK_KEYS)
              | set(_MODEL_KEYS) | set(_TRUESKILL_KEYS))


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key -> value strings; duplicate keys and junk lines are errors."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ValueError(f"line {lineno}: empty key or value in {raw!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def config_from_mapping(
    values: Mapping[str, str], base_dir: str | Path = "."
) -> PipelineConfig:
    """Typed config from raw strings; unknown keys are rejected."""
    base_dir = Path(base_dir)
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")

    kwargs: dict = {}
    for key, attr in _PATH_KEYS.items():
        if key in values:
            kwargs[attr] = base_dir / values[key]
    for key, (attr, kind) in _SCALAR_KEYS.items():
        if key in values:
            try:
                kwargs[attr] = kind(values[key])
            except ValueError as exc:
                raise ValueError(f"{key}: {exc}") from exc

    def section(keys, config_type, special=()):
        picked = {}
        for key, (attr, kind) in keys.items():
            if key not in values:
                continue
            try:
                picked[attr] = (special[attr](values[key])
                                if attr in special else kind(values[key]))
            except ValueError as exc:
                raise ValueError(f"{key}: {exc}") from exc
        return config_type(**picked)

    kwargs["walk"] = section(_WALK_KEYS, WalkConfig)
    kwargs["model"] = section(
        _MODEL_KEYS, ModelConfig,
        special={"hidden": _int_tuple, "split": _float_tuple})
    kwargs["trueskill"] = section(_TRUESKILL_KEYS, TrueSkillParams)
    return PipelineConfig(**kwargs)


def apply_overrides(
    values: dict[str, str], overrides: Iterable[str]
) -> dict[str, str]:
    """Merge "key=value" strings over file values; last writer wins."""
    merged = dict(values)
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key or not value:
            raise ValueError(f"override must look like section.key=value: {item!r}")
        merged[key] = value
    return merged


def load_config(
    path: str | Path, overrides: Iterable[str] = ()
) -> PipelineConfig:
    """Parse, override, type, and path-check a config file."""
    path = Path(path)
    values = apply_overrides(parse_config_text(path.read_text()), overrides)
    cfg = config_from_mapping(values, base_dir=path.parent)
    check_input_paths(cfg)
    return cfg


def check_input_paths(cfg: PipelineConfig) -> None:
    """Every referenced input must exist before any stage runs."""
    checks = [
        ("paths.roads", cfg.roads_path),
        ("paths.rasters", cfg.rasters_path),
        ("paths.feature_points", cfg.points_path),
        ("paths.labels", cfg.labels_path),
    ]
    if cfg.names_path is not None:
        checks.append(("paths.names", cfg.names_path))
    for key, p in checks:
        if not Path(p).is_file():
            raise FileNotFoundError(f"{key}: no such file: {p}")


def config_text(cfg: PipelineConfig) -> str:
    """Canonical serialization: every key, sorted, one per line."""
    values: dict[str, str] = {}
    for key, attr in _PATH_KEYS.items():
        p = getattr(cfg, attr)
        if p is not None:
            values[key] = str(p)
    for key, (attr, _) in _SCALAR_KEYS.items():
        values[key] = str(getattr(cfg, attr))
    for keys, obj in ((_WALK_KEYS, cfg.walk), (_MODEL_KEYS, cfg.model),
                      (_TRUESKILL_KEYS, cfg.trueskill)):
        for key, (attr, _) in keys.items():
            value = getattr(obj, attr)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            values[key] = str(value)
    lines = [f"{key} = {values[key]}" for key in sorted(values)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: PipelineConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()
