"""Deterministic synthetic hurricane datasets for desk-scale experiments.

The damage label is split into two latent factors: structural
vulnerability (``label // 2``), which pre-disaster imagery reveals, and
storm exposure (``label % 2``), which the track geometry and weather reveal.
No single modality identifies the label; combining them does. Post-disaster
embeddings carry the full label. ``signal_strength`` scales every
class-dependent shift, so 0 gives a chance-level task.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..featurize import HurricaneTrack, TrackPoint
from ..geo import EARTH_RADIUS_KM, BuildingPolygon, GeoPoint
from ..rng import make_rng
from .manifest import SCALES, BuildingRecord, DamageLabel, Dataset, Disaster, EmbeddingRef

DEFAULT_CLASS_PROBS = (0.48, 0.33, 0.11, 0.08)

IMAGE_SHIFT = 1.0
IMAGE_RANK = 32  # latent factors shared by all buildings
IMAGE_ISO_NOISE = 0.3
DISTANCE_LOG_SHIFT = 0.9
DISTANCE_LOG_NOISE = 0.3
DISASTER_PREFERENCE = 4.0
FIX_INTERVAL_S = 6 * 3600


@dataclass
class SyntheticConfig:
    n_examples: int = 2000
    class_probs: tuple[float, ...] = DEFAULT_CLASS_PROBS
    signal_strength: float = 1.0
    seed: int = 0
    embedding_dim: int = 768
    n_weather_features: int = 16
    weather_steps: int = 56
    n_disasters: int = 6
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    track_fixes: int = 16

    def __post_init__(self):
        p = np.asarray(self.class_probs, dtype=float)
        if p.shape != (4,) or np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"class_probs must be 4 non-negative values summing to 1, got {self.class_probs}")
        f = np.asarray(self.split_fractions, dtype=float)
        if f.shape != (3,) or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
            raise ValueError(f"split_fractions must be 3 values summing to 1, got {self.split_fractions}")
        if self.n_examples < 1 or self.n_disasters < 1 or self.embedding_dim < 1:
            raise ValueError("n_examples, n_disasters and embedding_dim must be positive")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be >= 0")
        self.class_probs = tuple(float(x) for x in self.class_probs)
        self.split_fractions = tuple(float(x) for x in self.split_fractions)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("class_probs", "split_fractions"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


def _destination(lat, lon, bearing_deg, dist_km):
    phi1, lam1 = math.radians(lat), math.radians(lon)
    brg = math.radians(bearing_deg)
    delta = dist_km / EARTH_RADIUS_KM
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(brg))
    lam2 = lam1 + math.atan2(
        math.sin(brg) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return math.degrees(phi2), (math.degrees(lam2) + 180.0) % 360.0 - 180.0


def _bearing(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return math.degrees(math.atan2(y, x))


def _stratified_splits(labels, fractions, rng):
    splits = np.empty(len(labels), dtype=object)
    names = ("train", "val", "test")
    for c in range(4):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n = len(idx)
        n_val = int(round(fractions[1] * n))
        n_test = int(round(fractions[2] * n))
        n_train = n - n_val - n_test
        bounds = np.cumsum([n_train, n_val, n_test])
        for name, part in zip(names, np.split(idx, bounds[:-1])):
            splits[part] = name
    return splits


def _make_track(rng, k, severity, n_fixes):
    lat, lon = 20.0 + rng.uniform(0, 6), -88.0 + rng.uniform(-6, 6)
    heading = 315.0 + rng.uniform(-30, 30)
    peak = 100.0 + 40.0 * severity
    t0 = 1_500_000_000 + k * 30 * 86400
    points = []
    for i in range(n_fixes):
        shape = math.sin(math.pi * i / max(n_fixes - 1, 1))
        wind = 35.0 + (peak - 35.0) * shape
        pressure = 1010.0 - 0.9 * (wind - 35.0)
        points.append(TrackPoint(GeoPoint(round(lat, 6), round(lon, 6)), float(t0 + i * FIX_INTERVAL_S),
                                 round(wind, 3), round(pressure, 3)))
        lat, lon = _destination(lat, lon, heading, 120.0 + rng.uniform(-20, 20))
        heading += rng.uniform(-8, 8)
    return HurricaneTrack(f"synth-{k:02d}", tuple(points))


def generate_synthetic(config: SyntheticConfig | dict | None = None) -> Dataset:
    """Build an in-memory dataset that is a pure function of ``config``."""
    if config is None:
        config = SyntheticConfig()
    elif isinstance(config, dict):
        config = SyntheticConfig.from_dict(config)
    cfg = config
    s = float(cfg.signal_strength)
    n, D, K = cfg.n_examples, cfg.embedding_dim, cfg.n_disasters

    labels = make_rng(cfg.seed, "labels").choice(4, size=n, p=np.asarray(cfg.class_probs))
    vulnerable = labels // 2
    exposed = labels % 2
    split = _stratified_splits(labels, cfg.split_fractions, make_rng(cfg.seed, "splits"))

    geo_rng = make_rng(cfg.seed, "geometry")
    severity = np.linspace(-1.0, 1.0, K) if K > 1 else np.zeros(1)
    tracks = [_make_track(geo_rng, k, severity[k], cfg.track_fixes) for k in range(K)]

    # exposed buildings favour the more severe storms
    wrng = make_rng(cfg.seed, "weather")
    loadings = wrng.normal(size=cfg.n_weather_features)
    offsets = wrng.normal(scale=5.0, size=cfg.n_weather_features) + 20.0
    disasters = {}
    for k, track in enumerate(tracks):
        series = (
            offsets
            + s * 2.0 * severity[k] * loadings
            + wrng.normal(scale=0.5, size=(cfg.weather_steps, cfg.n_weather_features))
        )
        disasters[track.name] = Disaster(track.name, track, np.round(series, 6))

    assign_rng = make_rng(cfg.seed, "assignment")
    logits = s * DISASTER_PREFERENCE * np.outer(2 * exposed - 1, severity)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    cum = probs.cumsum(axis=1)
    u = assign_rng.random(n)
    disaster_idx = np.minimum((u[:, None] > cum).sum(axis=1), K - 1)

    buildings = []
    for i in range(n):
        track = tracks[disaster_idx[i]]
        pts = track.points
        seg = int(geo_rng.integers(len(pts) // 4, max(len(pts) * 3 // 4, len(pts) // 4 + 1)))
        seg = min(seg, len(pts) - 2) if len(pts) > 1 else 0
        a = pts[seg].position
        b = pts[seg + 1].position if len(pts) > 1 else a
        frac = geo_rng.uniform(0.2, 0.8)
        base_lat = a.lat + frac * (b.lat - a.lat)
        base_lon = a.lon + frac * (b.lon - a.lon)
        heading = _bearing(a.lat, a.lon, b.lat, b.lon) if len(pts) > 1 else 0.0
        side = 90.0 if geo_rng.random() < 0.5 else -90.0
        log_d = math.log(40.0) + s * DISTANCE_LOG_SHIFT * (1 - 2 * exposed[i]) \
            + geo_rng.normal(scale=DISTANCE_LOG_NOISE)
        lat, lon = _destination(base_lat, base_lon, heading + side, math.exp(log_d))
        location = GeoPoint(round(lat, 7), round(lon, 7))

        w, h = geo_rng.uniform(6, 25, size=2)
        theta = geo_rng.uniform(0, math.pi)
        cx, cy = geo_rng.uniform(100, 924, size=2)
        c, sn = math.cos(theta), math.sin(theta)
        corners = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
        verts = tuple((round(cx + c * x - sn * y, 3), round(cy + sn * x + c * y, 3)) for x, y in corners)
        buildings.append(
            BuildingRecord(
                id=f"{track.name}-{i:05d}",
                polygon=BuildingPolygon(verts, location, round(float(w * h), 6)),
                location=location,
                disaster_id=track.name,
                split=str(split[i]),
                label=DamageLabel(int(labels[i])),
            )
        )

    emb_rng = make_rng(cfg.seed, "embeddings")
    embeddings: dict[str, dict[str, EmbeddingRef]] = {"pre": {}, "post": {}}
    for phase in ("pre", "post"):
        for scale in SCALES:
            base = emb_rng.normal(scale=0.5, size=D)
            if phase == "pre":
                direction = emb_rng.normal(size=D)
                direction /= np.linalg.norm(direction)
                means = np.outer(2 * vulnerable - 1, direction)
            else:
                dirs = emb_rng.normal(size=(4, D))
                dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
                means = dirs[labels]
            basis = emb_rng.normal(size=(IMAGE_RANK, D)) / math.sqrt(IMAGE_RANK)
            structured = emb_rng.normal(size=(n, IMAGE_RANK)) @ basis
            noise = emb_rng.normal(scale=IMAGE_ISO_NOISE, size=(n, D))
            matrix = base + s * IMAGE_SHIFT * means + structured + noise
            embeddings[phase][scale] = EmbeddingRef(array=matrix.astype(np.float32))

    meta = {"synthetic": asdict(cfg)}
    meta["synthetic"]["class_probs"] = list(cfg.class_probs)
    meta["synthetic"]["split_fractions"] = list(cfg.split_fractions)
    ds = Dataset(buildings=buildings, disasters=disasters, embeddings=embeddings, metadata=meta)
    meta["split_sizes"] = ds.split_counts()
    return ds
