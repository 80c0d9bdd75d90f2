"""Synthetic desk-scale datasets with planted, recoverable structure.

A fixture is a grid road network whose 3-class road labels follow a
smooth latent field, so neighboring roads mostly share a class. Feature
points carry per-group signal of configurable strength, segmentation
rasters put class-specific entities in the scenes, and a small rating
corpus links road midpoints to images. Everything is a pure function of
the FixtureSpec, so equal specs produce identical directories.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .city_graph import (
    CityGraph,
    FeaturePoint,
    LABEL_NAMES,
    RoadSegment,
    assemble_city_graph,
    write_feature_points,
    write_labels,
    write_roads,
)
from .entity_graph import SegmentationMap, write_raster
from .labeling import ImageRecord, write_image_manifest

FIXTURE_SPEC_FORMAT = "restoregraph-fixture"
FIXTURE_SPEC_VERSION = 1

GROUP_DIMS = {"perception": 6, "spatial": 4, "socioeconomic": 4}
DEFAULT_GROUP_SIGNAL = {"perception": 0.55, "spatial": 1.0,
                        "socioeconomic": 0.2}

# entity id table shared by rasters, reports, and rating images
ENTITY_NAMES = {
    1: "Building", 2: "Car", 3: "Road", 4: "Sidewalk", 5: "Fence",
    6: "Wall", 7: "Person", 8: "Signboard", 9: "Streetlight",
    10: "Tree", 11: "Grass", 12: "Water", 13: "Plant", 14: "Sky",
    15: "Mountain",
}
NUM_ENTITY_CLASSES = 150

# entity pools per label class: low-restoration scenes skew built,
# high-restoration scenes skew natural, medium mixes both
_CLASS_POOLS = (
    (1, 2, 5, 6, 8, 9, 7),
    (1, 2, 10, 13, 4, 9, 7),
    (10, 11, 12, 13, 15, 4, 7),
)

_PALETTE = {
    0: (30, 30, 30), 1: (128, 64, 64), 2: (200, 40, 40),
    3: (90, 90, 90), 4: (160, 160, 150), 5: (150, 110, 60),
    6: (120, 100, 90), 7: (230, 170, 120), 8: (240, 220, 60),
    9: (220, 220, 200), 10: (40, 140, 50), 11: (110, 190, 80),
    12: (60, 120, 210), 13: (70, 170, 110), 14: (170, 210, 240),
    15: (110, 120, 100),
}

RASTER_WIDTH = 64
RASTER_HEIGHT = 48


@dataclass(frozen=True)
class FixtureSpec:
    roads: int = 100
    seed: int = 0
    signal: float = 1.0
    group_signal: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_GROUP_SIGNAL))
    noise: float = 1.0
    field_scale: float = 0.5
    points_per_road: int = 3
    images_per_road: int = 2
    spacing: float = 100.0

    def __post_init__(self):
        if self.roads < 10:
            raise ValueError("fixture needs at least 10 roads")
        if self.signal < 0.0 or self.noise < 0.0:
            raise ValueError("signal and noise must be non-negative")
        if self.field_scale <= 0.0:
            raise ValueError("field_scale must be positive")
        if self.points_per_road < 1 or self.images_per_road < 1:
            raise ValueError("need at least one point and image per road")
        unknown = set(self.group_signal) - set(GROUP_DIMS)
        if unknown:
            raise ValueError(f"unknown feature groups: {sorted(unknown)}")
        object.__setattr__(self, "group_signal", dict(self.group_signal))

    def to_json(self) -> str:
        payload = dataclasses.asdict(self)
        payload["format"] = FIXTURE_SPEC_FORMAT
        payload["version"] = FIXTURE_SPEC_VERSION
        return json.dumps(payload, sort_keys=True)


def spec_from_json(text: str) -> FixtureSpec:
    payload = json.loads(text)
    if payload.pop("format", None) != FIXTURE_SPEC_FORMAT:
        raise ValueError("unknown fixture spec format")
    if payload.pop("version", None) != FIXTURE_SPEC_VERSION:
        raise ValueError("unknown fixture spec version")
    return FixtureSpec(**payload)


# ---------------------------------------------------------------------------
# Road network and labels


def grid_roads(count: int, spacing: float = 100.0) -> list[RoadSegment]:
    """First `count` segments of the smallest street grid that fits.

    Intersections are enumerated row-major; each contributes its east
    then its north segment, so ids are stable under truncation.
    """
    side = 2
    while 2 * side * (side - 1) < count:
        side += 1
    roads = []
    for j in range(side):
        for i in range(side):
            x, y = i * spacing, j * spacing
            if i < side - 1:
                roads.append((f"{x} {y}", (x, y), (x + spacing, y)))
            if j < side - 1:
                roads.append((f"{x} {y}", (x, y), (x, y + spacing)))
    roads = roads[:count]
    width = len(str(count - 1))
    return [
        RoadSegment(f"r{idx:0{width}d}", (a, b))
        for idx, (_, a, b) in enumerate(roads)
    ]


def planted_labels(midpoints: np.ndarray, rng: np.random.Generator,
                   waves: int = 4, scale: float = 0.5) -> np.ndarray:
    """Tertile classes of a smooth random field.

    `scale` sets the field wavelength relative to the map extent and so
    the label-region size: larger values give larger same-label regions
    (higher edge homophily).
    """
    midpoints = np.asarray(midpoints, dtype=np.float64)
    extent = float(midpoints.max(axis=0).max() - midpoints.min(axis=0).min())
    extent = max(extent, 1.0)
    z = np.zeros(midpoints.shape[0])
    for _ in range(waves):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([np.cos(angle), np.sin(angle)])
        wavelength = extent * rng.uniform(0.6, 1.2) * scale
        amp = rng.uniform(0.5, 1.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        z += amp * np.cos(2.0 * np.pi * (midpoints @ direction) / wavelength
                          + phase)
    cuts = np.quantile(z, [1.0 / 3.0, 2.0 / 3.0])
    return np.digitize(z, cuts).astype(np.int64)


def edge_homophily(graph: CityGraph) -> float:
    """Fraction of undirected edges joining same-label roads."""
    edges = graph.weights.edges
    if not edges:
        return 0.0
    same = sum(1 for i, j in edges if graph.labels[i] == graph.labels[j])
    return same / len(edges)


# ---------------------------------------------------------------------------
# Feature points


def _class_centers() -> dict[str, np.ndarray]:
    """Per-group class centers: one-hot directions on the first 3 columns."""
    centers = {}
    for group, dim in GROUP_DIMS.items():
        base = np.zeros((3, dim))
        for c in range(3):
            base[c, c % dim] = 1.0
        centers[group] = base
    return centers


def synth_feature_points(
    roads: Sequence[RoadSegment],
    labels: np.ndarray,
    spec: FixtureSpec,
    rng: np.random.Generator,
) -> list[FeaturePoint]:
    """Points near each midpoint carrying the road's noisy group vectors.

    Noise is drawn once per road (not per point), so averaging a road's
    points cannot silently cancel it; only graph neighbors can.
    """
    centers = _class_centers()
    points = []
    for road, label in zip(roads, labels):
        road_values = {}
        for group, dim in GROUP_DIMS.items():
            strength = spec.signal * spec.group_signal.get(group, 0.0)
            mean = strength * centers[group][int(label)]
            road_values[group] = mean + spec.noise * rng.standard_normal(dim)
        mx, my = road.midpoint
        for _ in range(spec.points_per_road):
            # keep points strictly inside the 25 m aggregation buffer
            dx, dy = rng.uniform(-10.0, 10.0, size=2)
            groups = {
                group: values + 0.02 * rng.standard_normal(values.shape)
                for group, values in road_values.items()
            }
            points.append(FeaturePoint((mx + dx, my + dy), groups))
    return points


# ---------------------------------------------------------------------------
# Segmentation rasters and rating images


def synth_raster(label: int, rng: np.random.Generator, image_id: str,
                 road_id: str) -> SegmentationMap:
    """A street scene whose entity mix reflects the road's class."""
    canvas = np.zeros((RASTER_HEIGHT, RASTER_WIDTH), dtype=np.int64)
    canvas[: RASTER_HEIGHT // 3, :] = 14  # sky band
    canvas[2 * RASTER_HEIGHT // 3:, :] = 3  # road band
    pool = _CLASS_POOLS[int(label)]
    for _ in range(int(rng.integers(4, 8))):
        cid = int(pool[int(rng.integers(len(pool)))])
        w = int(rng.integers(6, 14))
        h = int(rng.integers(6, 14))
        x = int(rng.integers(0, RASTER_WIDTH - w))
        y = int(rng.integers(0, RASTER_HEIGHT - h))
        canvas[y:y + h, x:x + w] = cid
    return SegmentationMap(canvas, image_id, road_id, NUM_ENTITY_CLASSES)


def render_image(seg: SegmentationMap) -> Image.Image:
    rgb = np.zeros((seg.height, seg.width, 3), dtype=np.uint8)
    for cid in np.unique(seg.classes):
        rgb[seg.classes == cid] = _PALETTE.get(int(cid), (250, 250, 250))
    return Image.fromarray(rgb, mode="RGB")


# ---------------------------------------------------------------------------
# Whole-fixture assembly


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    roads: Path
    feature_points: Path
    labels: Path
    raster_manifest: Path
    image_manifest: Path
    names: Path
    spec: Path


def synth_dataset(spec: FixtureSpec):
    """In-memory fixture: roads, points, per-road labels, label names."""
    rng = np.random.default_rng(spec.seed)
    roads = grid_roads(spec.roads, spec.spacing)
    midpoints = np.array([r.midpoint for r in roads])
    labels = planted_labels(midpoints, rng, scale=spec.field_scale)
    points = synth_feature_points(roads, labels, spec, rng)
    label_map = {
        road.road_id: LABEL_NAMES[int(label)]
        for road, label in zip(roads, labels)
    }
    return roads, points, labels, label_map, rng


def fixture_city_graph(spec: FixtureSpec, scheme: str = "knn") -> CityGraph:
    """Assembled city graph with every road labeled; no street vectors."""
    roads, points, _, label_map, _ = synth_dataset(spec)
    return assemble_city_graph(roads, points, label_map, scheme=scheme)


def generate_fixture(spec: FixtureSpec, out_dir: str | Path) -> FixturePaths:
    """Write the full dataset directory; identical for identical specs."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "rasters").mkdir(exist_ok=True)
    (root / "images").mkdir(exist_ok=True)

    roads, points, labels, label_map, rng = synth_dataset(spec)

    paths = FixturePaths(
        root=root,
        roads=root / "roads.txt",
        feature_points=root / "feature_points.txt",
        labels=root / "labels.txt",
        raster_manifest=root / "rasters" / "manifest.txt",
        image_manifest=root / "image_manifest.csv",
        names=root / "names.txt",
        spec=root / "fixture.json",
    )
    write_roads(paths.roads, roads)
    write_feature_points(paths.feature_points, points)
    write_labels(paths.labels, label_map)

    manifest_lines = ["# raster manifest: file,road_id"]
    image_records = []
    for road, label in zip(roads, labels):
        mx, my = road.midpoint
        for k in range(spec.images_per_road):
            image_id = f"img_{road.road_id}_{k}"
            seg = synth_raster(int(label), rng, image_id, road.road_id)
            raster_name = f"{image_id}.txt"
            write_raster(root / "rasters" / raster_name, seg)
            manifest_lines.append(f"{raster_name},{road.road_id}")
            if k == 0:
                png_name = f"{image_id}.png"
                render_image(seg).save(root / "images" / png_name)
                image_records.append(
                    ImageRecord(image_id, f"images/{png_name}", mx, my))
    paths.raster_manifest.write_text("\n".join(manifest_lines) + "\n")
    write_image_manifest(paths.image_manifest, image_records)

    name_lines = [f"{cid}\t{name}" for cid, name in sorted(ENTITY_NAMES.items())]
    paths.names.write_text("\n".join(name_lines) + "\n")
    paths.spec.write_text(spec.to_json() + "\n")
    return paths
