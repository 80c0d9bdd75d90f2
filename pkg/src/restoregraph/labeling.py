"""Pairwise rating workflow: scheduling, skill updates, road labels.

Raters compare two street images per screen on four restoration
indicators. Outcomes drive two-player skill updates; composite image
scores are the mean of the four indicator means; road scores average the
in-buffer image scores and natural-breaks split them into three classes.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .city_graph import LABEL_NAMES, RoadSegment
from .geometry import point_to_polyline_distance
from .jenks import classify, jenks_breaks
from .trueskill import Rating, TrueSkillParams, rate_draw, rate_win

INDICATORS = ("being_away", "extent", "fascination", "compatibility")
OUTCOMES = ("left", "right", "both", "neither")
TARGET_COMPARISONS = 20
DEFAULT_BUFFER = 25.0

LEDGER_FORMAT = "restoregraph-ledger"
LEDGER_VERSION = 1
MANIFEST_HEADER = "# restoregraph image-manifest v1"
LABEL_SET_HEADER = "# restoregraph road-labels v1"


@dataclass(frozen=True)
class VoteRecord:
    seq: int
    timestamp: float
    indicator: str
    left: str
    right: str
    outcome: str


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path: str
    x: float
    y: float


class RatingState:
    """Live ratings, counts, and the append-only vote ledger."""

    def __init__(self, image_ids: Iterable[str],
                 params: TrueSkillParams | None = None):
        ids = list(image_ids)
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids")
        self.params = params or TrueSkillParams()
        base = Rating(self.params.mu0, self.params.sigma0)
        self.ratings: dict[str, dict[str, Rating]] = {
            i: {ind: base for ind in INDICATORS} for i in ids
        }
        self.counts: dict[str, int] = {i: 0 for i in ids}
        self.indicator_counts: dict[str, dict[str, int]] = {
            i: {ind: 0 for ind in INDICATORS} for i in ids
        }
        self.ledger: list[VoteRecord] = []

    @property
    def image_ids(self) -> list[str]:
        return sorted(self.counts)

    def progress(self) -> dict:
        counts = list(self.counts.values())
        done = sum(1 for c in counts if c >= TARGET_COMPARISONS)
        return {
            "images": len(counts),
            "min_count": min(counts) if counts else 0,
            "complete_fraction": done / len(counts) if counts else 0.0,
        }


def next_pair(state: RatingState, indicator: str, seed: int = 0) -> tuple[str, str]:
    """A uniformly sampled pair among those with the lowest count sum.

    Deterministic for a fixed (state, indicator, seed): the sampling
    stream is derived from the seed and the ledger length, so a repeated
    call before any vote returns the same pair.
    """
    if indicator not in INDICATORS:
        raise ValueError(f"unknown indicator {indicator!r}")
    ids = state.image_ids
    if len(ids) < 2:
        raise ValueError("need at least 2 images to schedule a pair")

    key = f"{seed}:{indicator}:{len(state.ledger)}".encode()
    rng = np.random.default_rng(zlib.crc32(key))

    counts = state.counts
    values = sorted(set(counts.values()))
    lowest = [i for i in ids if counts[i] == values[0]]
    if len(lowest) >= 2:
        n = len(lowest)
        a = int(rng.integers(n))
        b = int(rng.integers(n - 1))
        if b >= a:
            b += 1
        return lowest[a], lowest[b]
    second = [i for i in ids if counts[i] == values[1]]
    a = lowest[0]
    b = second[int(rng.integers(len(second)))]
    return (a, b) if rng.integers(2) == 0 else (b, a)


def apply_vote(
    state: RatingState,
    pair: tuple[str, str],
    indicator: str,
    outcome: str,
    timestamp: float = 0.0,
) -> RatingState:
    """Rate one comparison and append it to the ledger (mutates state)."""
    left, right = pair
    for image in (left, right):
        if image not in state.ratings:
            raise ValueError(f"unknown image {image!r}")
    if left == right:
        raise ValueError("cannot compare an image with itself")
    if indicator not in INDICATORS:
        raise ValueError(f"unknown indicator {indicator!r}")
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome {outcome!r}")

    a = state.ratings[left][indicator]
    b = state.ratings[right][indicator]
    if outcome == "left":
        a, b = rate_win(a, b, state.params)
    elif outcome == "right":
        b, a = rate_win(b, a, state.params)
    elif outcome == "both":
        a, b = rate_draw(a, b, state.params)
    state.ratings[left][indicator] = a
    state.ratings[right][indicator] = b

    for image in (left, right):
        state.counts[image] += 1
        state.indicator_counts[image][indicator] += 1
    state.ledger.append(
        VoteRecord(len(state.ledger), timestamp, indicator, left, right, outcome)
    )
    return state


def composite_scores(state: RatingState) -> tuple[dict[str, float], list[str]]:
    """Mean of the four indicator means per image.

    Images missing a comparison on any indicator are returned in the
    second element instead of being scored.
    """
    scores: dict[str, float] = {}
    incomplete: list[str] = []
    for image in state.image_ids:
        if all(state.indicator_counts[image][ind] >= 1 for ind in INDICATORS):
            mus = [state.ratings[image][ind].mu for ind in INDICATORS]
            scores[image] = sum(mus) / len(INDICATORS)
        else:
            incomplete.append(image)
    return scores, incomplete


@dataclass(frozen=True)
class LabelSet:
    classes: Mapping[str, str]  # road_id -> low | medium | high
    breaks: tuple[float, float]
    scores: Mapping[str, float]  # road_id -> mean in-buffer score

    def __post_init__(self):
        if len(self.breaks) != 2 or not self.breaks[0] <= self.breaks[1]:
            raise ValueError("breaks must be two ascending thresholds")
        for rid, name in self.classes.items():
            if name not in LABEL_NAMES:
                raise ValueError(f"unknown class {name!r} for road {rid!r}")
            want = LABEL_NAMES[classify(self.scores[rid], self.breaks)]
            if name != want:
                raise ValueError(
                    f"road {rid!r}: class {name} inconsistent with thresholds"
                )


def label_roads(
    scored_points: Sequence[tuple[tuple[float, float], float]],
    roads: Sequence[RoadSegment],
    half_width: float = DEFAULT_BUFFER,
) -> LabelSet:
    """Mean in-buffer score per road, split into three natural classes.

    A point can contribute to several overlapping roads; roads without
    any in-buffer point stay out of the label set.
    """
    if not scored_points:
        raise ValueError("no scored points")
    road_scores: dict[str, float] = {}
    for road in roads:
        hits = [
            score
            for location, score in scored_points
            if point_to_polyline_distance(location, road.polyline) <= half_width
        ]
        if hits:
            road_scores[road.road_id] = sum(hits) / len(hits)
    if not road_scores:
        raise ValueError("no road receives any scored point")

    result = jenks_breaks(list(road_scores.values()), k=3)
    breaks = (result.breaks[0], result.breaks[1])
    classes = {
        rid: LABEL_NAMES[classify(score, breaks)]
        for rid, score in road_scores.items()
    }
    return LabelSet(classes, breaks, road_scores)


# ---------------------------------------------------------------------------
# Ledger persistence (line-delimited JSON, append-only, fsync on append)


def ledger_header_line() -> str:
    return json.dumps(
        {"format": LEDGER_FORMAT, "version": LEDGER_VERSION}, sort_keys=True
    )


def ledger_line(record: VoteRecord) -> str:
    return json.dumps(
        {
            "seq": record.seq,
            "timestamp": record.timestamp,
            "indicator": record.indicator,
            "left": record.left,
            "right": record.right,
            "outcome": record.outcome,
        },
        sort_keys=True,
    )


def append_ledger(fh: IO[str], record: VoteRecord) -> None:
    """Durable append: write one line, flush, fsync."""
    fh.write(ledger_line(record) + "\n")
    fh.flush()
    os.fsync(fh.fileno())


def open_ledger(path: str | Path) -> IO[str]:
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    fh = open(path, "a", encoding="utf-8")
    if fresh:
        fh.write(ledger_header_line() + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    return fh


def read_ledger(path: str | Path) -> list[VoteRecord]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        return []
    header = json.loads(lines[0])
    if (header.get("format") != LEDGER_FORMAT
            or header.get("version") != LEDGER_VERSION):
        raise ValueError(f"{path}: unknown ledger format version")
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        row = json.loads(line)
        records.append(
            VoteRecord(
                seq=row["seq"],
                timestamp=row["timestamp"],
                indicator=row["indicator"],
                left=row["left"],
                right=row["right"],
                outcome=row["outcome"],
            )
        )
    return records


def replay_ledger(
    image_ids: Iterable[str],
    records: Sequence[VoteRecord],
    params: TrueSkillParams | None = None,
) -> RatingState:
    """Rebuild the live state by reapplying every vote in ledger order."""
    state = RatingState(image_ids, params)
    for record in records:
        apply_vote(
            state,
            (record.left, record.right),
            record.indicator,
            record.outcome,
            record.timestamp,
        )
    return state


# ---------------------------------------------------------------------------
# Image manifest and label export


def read_image_manifest(path: str | Path) -> list[ImageRecord]:
    """Manifest rows: image_id,path,x,y."""
    path = Path(path)
    lines = path.read_text().splitlines()
    records = []
    seen = set()
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# restoregraph") and line != MANIFEST_HEADER:
                raise ValueError(f"{path}: unknown format version {line!r}")
            continue
        if line == "image_id,path,x,y":
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}: manifest row needs 4 fields: {line!r}")
        image_id, rel_path, x, y = (p.strip() for p in parts)
        if image_id in seen:
            raise ValueError(f"{path}: duplicate image id {image_id!r}")
        seen.add(image_id)
        records.append(ImageRecord(image_id, rel_path, float(x), float(y)))
    return records


def write_image_manifest(path: str | Path, records: Sequence[ImageRecord]) -> None:
    lines = [MANIFEST_HEADER, "image_id,path,x,y"]
    for r in records:
        lines.append(f"{r.image_id},{r.path},{r.x!r},{r.y!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_label_set(path: str | Path, labels: LabelSet) -> None:
    lines = [
        LABEL_SET_HEADER,
        f"# breaks {labels.breaks[0]!r} {labels.breaks[1]!r}",
        "road_id,class,score",
    ]
    for rid in sorted(labels.classes):
        lines.append(f"{rid},{labels.classes[rid]},{labels.scores[rid]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_label_set(path: str | Path) -> LabelSet:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != LABEL_SET_HEADER:
        raise ValueError(f"{path}: unknown format version")
    breaks = None
    classes: dict[str, str] = {}
    scores: dict[str, float] = {}
    for line in lines[1:]:
        line = line.strip()
        if line.startswith("# breaks"):
            _, _, rest = line.partition("# breaks ")
            b1, b2 = rest.split()
            breaks = (float(b1), float(b2))
            continue
        if not line or line.startswith("#") or line == "road_id,class,score":
            continue
        rid, name, score = line.split(",")
        classes[rid] = name
        scores[rid] = float(score)
    if breaks is None:
        raise ValueError(f"{path}: missing breaks line")
    return LabelSet(classes, breaks, scores)
