"""Dataset manifests and the on-disk formats they reference.

A manifest is a UTF-8 JSON document listing disasters (track + weather CSV),
buildings (footprint, location, split, optional label) and, per image phase
(``pre``/``post``), one embedding file per crop scale. Building order in the
manifest defines the row order of every embedding file.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

import jsonschema
import numpy as np

from ..errors import (
    CountMismatchError,
    DuplicateIdError,
    InputError,
    ManifestError,
    MissingFileError,
    MissingScenarioError,
)
from ..featurize import HurricaneTrack, TrackPoint
from ..geo import BuildingPolygon, GeoPoint, polygon_centroid_area
from .embeddings import read_embeddings, read_header

log = logging.getLogger(__name__)

SCALES = ("scale1", "scale4", "scale16", "scale32")
PHASES = ("pre", "post")
SPLITS = ("train", "val", "test")
DEFAULT_WEATHER_STEPS = 56  # 7 days x 8 readings
DEFAULT_MIN_AREA_PX2 = 1.0
DEFAULT_GSD_M = 0.5
TRACK_HEADER = ["timestamp_utc", "lat", "lon", "wind_kt", "pressure_mb"]


class DamageLabel(enum.IntEnum):
    NO_DAMAGE = 0
    MINOR = 1
    MAJOR = 2
    DESTROYED = 3

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @classmethod
    def parse(cls, value) -> "DamageLabel":
        if isinstance(value, str):
            key = value.strip().lower().replace("-", "_").replace(" ", "_")
            for label, name in _DISPLAY_NAMES.items():
                if key in (label.name.lower(), name.lower().replace(" ", "_")):
                    return label
            if key.isdigit():
                return cls(int(key))
            raise ValueError(f"unknown damage label {value!r}")
        return cls(int(value))


_DISPLAY_NAMES = {
    DamageLabel.NO_DAMAGE: "No Damage",
    DamageLabel.MINOR: "Minor Damage",
    DamageLabel.MAJOR: "Major Damage",
    DamageLabel.DESTROYED: "Destroyed",
}


class Scenario(str, enum.Enum):
    PROACTIVE = "proactive"
    REACTIVE = "reactive"

    @property
    def phase(self) -> str:
        return "pre" if self is Scenario.PROACTIVE else "post"


@dataclass(frozen=True)
class BuildingRecord:
    id: str
    polygon: BuildingPolygon
    location: GeoPoint
    disaster_id: str
    split: str
    label: Optional[DamageLabel] = None
    polygon_lonlat: Optional[tuple[tuple[float, float], ...]] = None


@dataclass(frozen=True)
class Disaster:
    id: str
    track: HurricaneTrack
    weather: np.ndarray  # T x F raw readings
    track_file: Optional[str] = None
    weather_file: Optional[str] = None


@dataclass
class EmbeddingRef:
    """Embedding source for one (phase, scale): a file on disk or an in-memory array."""

    path: Optional[Path] = None
    array: Optional[np.ndarray] = None

    def load(self) -> np.ndarray:
        if self.array is None:
            self.array = read_embeddings(self.path)
        return self.array


@dataclass
class Dataset:
    buildings: list[BuildingRecord]
    disasters: dict[str, Disaster]
    embeddings: dict[str, dict[str, EmbeddingRef]]
    metadata: dict = field(default_factory=dict)
    gsd_m: float = DEFAULT_GSD_M
    source: Optional[Path] = None

    def __len__(self):
        return len(self.buildings)

    def split_counts(self) -> dict[str, int]:
        counts = Counter(b.split for b in self.buildings)
        return {s: counts.get(s, 0) for s in SPLITS}

    def has_phase(self, phase: str) -> bool:
        refs = self.embeddings.get(phase, {})
        return all(s in refs for s in SCALES)

    def phase_embeddings(self, phase: str) -> list[np.ndarray]:
        if not self.has_phase(phase):
            raise MissingScenarioError(f"dataset has no complete '{phase}' embeddings")
        return [self.embeddings[phase][s].load() for s in SCALES]


MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["disasters", "buildings", "embeddings"],
    "properties": {
        "disasters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "track_file", "weather_file"],
                "properties": {
                    "id": {"type": "string"},
                    "track_file": {"type": "string"},
                    "weather_file": {"type": "string"},
                },
            },
        },
        "buildings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "disaster_id", "split", "lon", "lat", "polygon_px"],
                "properties": {
                    "id": {"type": "string"},
                    "disaster_id": {"type": "string"},
                    "split": {"enum": list(SPLITS)},
                    "label": {"type": ["integer", "string", "null"]},
                    "lon": {"type": "number"},
                    "lat": {"type": "number", "minimum": -90, "maximum": 90},
                    "polygon_px": {
                        "type": "array",
                        "minItems": 3,
                        "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}},
                    },
                    "polygon_lonlat": {
                        "type": "array",
                        "minItems": 3,
                        "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}},
                    },
                    "area_px2": {"type": "number"},
                },
            },
        },
        "embeddings": {
            "type": "object",
            "properties": {
                phase: {
                    "type": "object",
                    "required": list(SCALES),
                    "properties": {s: {"type": "string"} for s in SCALES},
                }
                for phase in PHASES
            },
        },
        "weather_steps": {"type": "integer", "minimum": 1},
        "gsd_m": {"type": "number", "exclusiveMinimum": 0},
        "metadata": {"type": "object"},
    },
}


def _parse_timestamp(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp()


def read_track_csv(path: str | os.PathLike, name: str = "") -> HurricaneTrack:
    if not os.path.exists(path):
        raise MissingFileError(path, "track file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACK_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ManifestError(f"{path}: track CSV missing columns {sorted(missing)}")
        points = []
        try:
            for row in reader:
                points.append(
                    TrackPoint(
                        GeoPoint(float(row["lat"]), float(row["lon"])),
                        _parse_timestamp(row["timestamp_utc"]),
                        float(row["wind_kt"]),
                        float(row["pressure_mb"]),
                    )
                )
            return HurricaneTrack(name or Path(path).stem, tuple(points))
        except (ValueError, TypeError) as exc:
            raise ManifestError(f"{path}: {exc}") from exc


def read_weather_csv(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a weather CSV into ``{disaster_id: T x F array}`` in file row order."""
    if not os.path.exists(path):
        raise MissingFileError(path, "weather file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["disaster_id", "timestamp_utc"] or len(header) < 3:
            raise ManifestError(f"{path}: weather CSV header must be disaster_id,timestamp_utc,f0..")
        expected = [f"f{i}" for i in range(len(header) - 2)]
        if header[2:] != expected:
            raise ManifestError(f"{path}: feature columns must be named {expected[0]}..{expected[-1]}")
        rows: dict[str, list[list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ManifestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.setdefault(row[0], []).append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return {k: np.asarray(v, dtype=float) for k, v in rows.items()}


def load_manifest(
    path: str | os.PathLike,
    phases: Iterable[str] = PHASES,
    min_area_px2: float = DEFAULT_MIN_AREA_PX2,
) -> Dataset:
    """Load and validate a manifest.

    Only the embedding files of ``phases`` are opened (header check against
    the building count); other phases are recorded but never touched.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path, "manifest")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise ManifestError(f"{path}: schema violation at '{where}': {exc.message}") from exc

    root = path.parent
    steps = doc.get("weather_steps", DEFAULT_WEATHER_STEPS)

    disasters: dict[str, Disaster] = {}
    weather_cache: dict[Path, dict[str, np.ndarray]] = {}
    n_features = None
    for d in doc["disasters"]:
        if d["id"] in disasters:
            raise DuplicateIdError(f"duplicate disaster id {d['id']!r}")
        track = read_track_csv(root / d["track_file"], name=d["id"])
        wpath = root / d["weather_file"]
        if wpath not in weather_cache:
            weather_cache[wpath] = read_weather_csv(wpath)
        series = weather_cache[wpath].get(d["id"])
        if series is None:
            raise ManifestError(f"{wpath}: no weather rows for disaster {d['id']!r}")
        if series.shape[0] != steps:
            raise ManifestError(
                f"{wpath}: disaster {d['id']!r} has {series.shape[0]} weather rows, expected {steps}"
            )
        if n_features is not None and series.shape[1] != n_features:
            raise ManifestError(f"{wpath}: inconsistent weather feature count for {d['id']!r}")
        n_features = series.shape[1]
        disasters[d["id"]] = Disaster(d["id"], track, series, d["track_file"], d["weather_file"])

    buildings = []
    seen = set()
    for b in doc["buildings"]:
        if b["id"] in seen:
            raise DuplicateIdError(f"duplicate building id {b['id']!r}")
        seen.add(b["id"])
        if b["disaster_id"] not in disasters:
            raise ManifestError(f"building {b['id']!r} references unknown disaster {b['disaster_id']!r}")
        buildings.append(_building_from_json(b, min_area_px2))

    embeddings: dict[str, dict[str, EmbeddingRef]] = {}
    wanted = set(phases)
    for phase, files in doc["embeddings"].items():
        if phase not in PHASES:
            raise ManifestError(f"unknown embedding phase {phase!r}")
        refs = {}
        dims = set()
        for scale in SCALES:
            epath = root / files[scale]
            if phase in wanted:
                count, dim = read_header(epath)
                if count != len(buildings):
                    raise CountMismatchError(
                        f"{epath}: {count} embedding rows for {len(buildings)} buildings"
                    )
                dims.add(dim)
            refs[scale] = EmbeddingRef(path=epath)
        if len(dims) > 1:
            raise ManifestError(f"'{phase}' embedding files disagree on dimension: {sorted(dims)}")
        embeddings[phase] = refs

    ds = Dataset(
        buildings=buildings,
        disasters=disasters,
        embeddings=embeddings,
        metadata=dict(doc.get("metadata", {})),
        gsd_m=float(doc.get("gsd_m", DEFAULT_GSD_M)),
        source=path,
    )
    _check_recorded_split_sizes(ds)
    log.info("loaded %s: %s", path, ds.split_counts())
    return ds


def _check_recorded_split_sizes(ds: Dataset) -> None:
    recorded = ds.metadata.get("split_sizes")
    if not recorded:
        return
    actual = ds.split_counts()
    for split, n in recorded.items():
        if actual.get(split) != n:
            log.warning("split %s has %s buildings, metadata records %s", split, actual.get(split), n)


def _building_from_json(b: dict, min_area_px2: float) -> BuildingRecord:
    verts = [tuple(v) for v in b["polygon_px"]]
    area = b.get("area_px2")
    if area is None:
        area = polygon_centroid_area(verts).area
    if not area > 0:
        log.warning("building %s has area %s px^2; using %s", b["id"], area, min_area_px2)
        area = min_area_px2
    try:
        location = GeoPoint(float(b["lat"]), float(b["lon"]))
        label = b.get("label")
        label = None if label is None else DamageLabel.parse(label)
    except ValueError as exc:
        raise ManifestError(f"building {b['id']!r}: {exc}") from exc
    lonlat = b.get("polygon_lonlat")
    return BuildingRecord(
        id=b["id"],
        polygon=BuildingPolygon(tuple(verts), location, float(area)),
        location=location,
        disaster_id=b["disaster_id"],
        split=b["split"],
        label=label,
        polygon_lonlat=None if lonlat is None else tuple(tuple(p) for p in lonlat),
    )


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def save_dataset(ds: Dataset, out_dir: str | os.PathLike) -> Path:
    """Write ``ds`` as manifest + CSV + embedding files; returns the manifest path.

    Output bytes depend only on the dataset contents.
    """
    from .embeddings import write_embeddings

    out = Path(out_dir)
    (out / "tracks").mkdir(parents=True, exist_ok=True)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)

    disasters_json = []
    weather_buf = io.StringIO()
    n_features = next(iter(ds.disasters.values())).weather.shape[1]
    w = csv.writer(weather_buf, lineterminator="\n")
    w.writerow(["disaster_id", "timestamp_utc"] + [f"f{i}" for i in range(n_features)])
    for did, disaster in ds.disasters.items():
        track_rel = f"tracks/{did}.csv"
        tbuf = io.StringIO()
        tw = csv.writer(tbuf, lineterminator="\n")
        tw.writerow(TRACK_HEADER)
        for p in disaster.track.points:
            tw.writerow([_num(p.timestamp), _num(p.position.lat), _num(p.position.lon),
                         _num(p.wind_speed), _num(p.pressure)])
        (out / track_rel).write_text(tbuf.getvalue(), encoding="utf-8")
        t0 = disaster.track.points[0].timestamp
        steps = disaster.weather.shape[0]
        for t, row in enumerate(disaster.weather):
            # readings every 3 h over the days preceding landfall
            ts = t0 - (steps - t) * 3 * 3600
            w.writerow([did, _num(ts)] + [_num(v) for v in row])
        disasters_json.append({"id": did, "track_file": track_rel, "weather_file": "weather.csv"})
    (out / "weather.csv").write_text(weather_buf.getvalue(), encoding="utf-8")

    emb_json = {}
    for phase, refs in ds.embeddings.items():
        emb_json[phase] = {}
        for scale in SCALES:
            rel = f"embeddings/{phase}_{scale}.glne"
            write_embeddings(out / rel, refs[scale].load())
            emb_json[phase][scale] = rel

    buildings_json = []
    for b in ds.buildings:
        entry = {
            "id": b.id,
            "disaster_id": b.disaster_id,
            "split": b.split,
            "label": None if b.label is None else int(b.label),
            "lon": b.location.lon,
            "lat": b.location.lat,
            "polygon_px": [list(v) for v in b.polygon.vertices],
            "area_px2": b.polygon.area_px2,
        }
        if b.polygon_lonlat is not None:
            entry["polygon_lonlat"] = [list(v) for v in b.polygon_lonlat]
        buildings_json.append(entry)

    doc = {
        "disasters": disasters_json,
        "buildings": buildings_json,
        "embeddings": emb_json,
        "weather_steps": int(next(iter(ds.disasters.values())).weather.shape[0]),
        "gsd_m": ds.gsd_m,
        "metadata": ds.metadata,
    }
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def footprint_lonlat(b: BuildingRecord, gsd_m: float = DEFAULT_GSD_M) -> list[list[float]]:
    """Building outline as a closed ``[lon, lat]`` ring.

    Uses ``polygon_lonlat`` when the manifest supplies it; otherwise places
    the pixel footprint around the building location on a local tangent
    plane with ``gsd_m`` metres per pixel (image y axis points south).
    """
    if b.polygon_lonlat is not None:
        ring = [list(map(float, p)) for p in b.polygon_lonlat]
    else:
        cx, cy = polygon_centroid_area(b.polygon.vertices).center
        lat0 = math.radians(b.location.lat)
        ring = []
        for x, y in b.polygon.vertices:
            east_m = (x - cx) * gsd_m
            north_m = -(y - cy) * gsd_m
            dlat = math.degrees(north_m / 6371000.0)
            dlon = math.degrees(east_m / (6371000.0 * max(math.cos(lat0), 1e-12)))
            ring.append([b.location.lon + dlon, b.location.lat + dlat])
    if ring[0] != ring[-1]:
        ring.append(list(ring[0]))
    return ring


def ensure_labels(ds: Dataset) -> None:
    unlabeled = [b.id for b in ds.buildings if b.label is None]
    if unlabeled:
        raise InputError(f"{len(unlabeled)} buildings have no label (first: {unlabeled[0]!r})")
