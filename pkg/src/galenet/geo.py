"""Great-circle distance, polygon geometry and multi-scale crop windows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateAreaError, InvalidPolygonError

EARTH_RADIUS_KM = 6371.0

# Building spans ~11 px at Scale-1x.
CROP_TARGET_PX = 11.0
CROP_SIDE_PX = 224
DEFAULT_MULTIPLIERS = (1.0, 4.0, 16.0, 32.0)


def _normalize_lon(lon: float) -> float:
    return ((lon + 180.0) % 360.0) - 180.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not math.isfinite(self.lat):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not math.isfinite(self.lon):
            raise ValueError(f"longitude not finite: {self.lon}")
        object.__setattr__(self, "lon", _normalize_lon(float(self.lon)))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km between two points on a sphere of radius 6371 km."""
    return float(haversine_km_array(a.lat, a.lon, b.lat, b.lon))


def haversine_km_array(lat1, lon1, lat2, lon2):
    """Vectorised haversine over broadcastable arrays of degrees."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    h = np.clip(h, 0.0, 1.0)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))


class PolygonGeometry(NamedTuple):
    center: tuple[float, float]
    area: float
    degenerate: bool


def polygon_centroid_area(vertices: Sequence[Sequence[float]]) -> PolygonGeometry:
    """Shoelace area and area-weighted centroid of a (possibly messy) polygon.

    The closing edge is implicit. Zero-area polygons fall back to the vertex
    mean with ``degenerate=True``.
    """
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise InvalidPolygonError(f"polygon needs >= 3 (x, y) vertices, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidPolygonError("polygon has non-finite coordinates")
    # shift to the first vertex to limit cancellation
    origin = pts[0]
    x, y = (pts - origin).T
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    signed = 0.5 * cross.sum()
    if abs(signed) <= 1e-12 * max(1.0, float(np.abs(pts).max()) ** 2):
        cx, cy = pts.mean(axis=0)
        return PolygonGeometry((float(cx), float(cy)), 0.0, True)
    cx = ((x + xn) * cross).sum() / (6.0 * signed) + origin[0]
    cy = ((y + yn) * cross).sum() / (6.0 * signed) + origin[1]
    return PolygonGeometry((float(cx), float(cy)), float(abs(signed)), False)


@dataclass(frozen=True)
class BuildingPolygon:
    """Image-plane footprint of a building plus its geographic centroid."""

    vertices: tuple[tuple[float, float], ...]
    centroid: GeoPoint
    area_px2: float

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise InvalidPolygonError(f"polygon needs >= 3 vertices, got {len(verts)}")
        if not (self.area_px2 > 0):
            raise DegenerateAreaError(f"building area must be > 0 px^2, got {self.area_px2}")


@dataclass(frozen=True)
class CropWindow:
    """Scale the source image by ``scale_factor`` then crop ``side_px`` square
    around the scaled ``center``."""

    scale_factor: float
    center: tuple[float, float]
    side_px: int = CROP_SIDE_PX

    def __post_init__(self):
        if not self.scale_factor > 0:
            raise ValueError("scale_factor must be positive")
        if self.side_px != CROP_SIDE_PX:
            raise ValueError(f"side_px is fixed at {CROP_SIDE_PX}")

    @property
    def scaled_center(self) -> tuple[float, float]:
        return (self.center[0] * self.scale_factor, self.center[1] * self.scale_factor)

    @property
    def source_extent_px(self) -> float:
        """Side length of the window measured in source-image pixels."""
        return self.side_px / self.scale_factor


def crop_windows(
    area_px2: float,
    multipliers: Sequence[float] = DEFAULT_MULTIPLIERS,
    center: tuple[float, float] = (0.0, 0.0),
) -> list[CropWindow]:
    if not (area_px2 > 0) or not math.isfinite(area_px2):
        raise DegenerateAreaError(f"building area must be > 0 px^2, got {area_px2}")
    base = CROP_TARGET_PX / math.sqrt(area_px2)
    return [CropWindow(m * base, (float(center[0]), float(center[1]))) for m in multipliers]
