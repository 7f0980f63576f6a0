"""Trajectory and weather featurization.

A building's trajectory feature is the closest approach of the hurricane
track: the minimum great-circle distance to the (densified) track and the
wind speed and central pressure read there. Weather is reduced to the
per-feature mean over all time points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyTrackError, InvalidSeriesError
from .geo import EARTH_RADIUS_KM, GeoPoint, haversine_km_array

TIE_TOLERANCE_KM = 1e-6
DISCRETE = math.inf  # step_km sentinel: use raw fixes only


@dataclass(frozen=True)
class TrackPoint:
    position: GeoPoint
    timestamp: float  # UTC seconds
    wind_speed: float
    pressure: float

    def __post_init__(self):
        if not self.wind_speed >= 0:
            raise ValueError(f"wind speed must be >= 0, got {self.wind_speed}")
        if not self.pressure > 0:
            raise ValueError(f"pressure must be > 0, got {self.pressure}")


@dataclass(frozen=True)
class HurricaneTrack:
    name: str
    points: tuple[TrackPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise EmptyTrackError(f"track {self.name!r} has no points")
        ts = [p.timestamp for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"track {self.name!r}: timestamps must be strictly increasing")

    def arrays(self):
        """(lat, lon, wind, pressure) as float arrays."""
        lat = np.array([p.position.lat for p in self.points], dtype=float)
        lon = np.array([p.position.lon for p in self.points], dtype=float)
        wind = np.array([p.wind_speed for p in self.points], dtype=float)
        pres = np.array([p.pressure for p in self.points], dtype=float)
        return lat, lon, wind, pres


@dataclass(frozen=True)
class TrajectoryFeatures:
    distance_km: float
    wind_speed: float
    pressure: float

    def as_array(self) -> np.ndarray:
        return np.array([self.distance_km, self.wind_speed, self.pressure], dtype=float)


def _unit_vectors(lat, lon):
    phi, lam = np.radians(lat), np.radians(lon)
    return np.stack([np.cos(phi) * np.cos(lam), np.cos(phi) * np.sin(lam), np.sin(phi)], axis=-1)


def _to_latlon(v):
    lat = np.degrees(np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1])))
    lon = np.degrees(np.arctan2(v[..., 1], v[..., 0]))
    return lat, lon


def _segment_subdivisions(length_km: float, step_km: float) -> int:
    # Powers of two keep coarser samplings nested inside finer ones, so a
    # smaller step can only add candidate points.
    if not math.isfinite(step_km) or length_km <= step_km:
        return 1
    return 1 << math.ceil(math.log2(length_km / step_km))


def densify_track(track: HurricaneTrack, step_km: float = 1.0):
    """Sample the track by great-circle interpolation at spacing <= ``step_km``.

    Wind and pressure are interpolated linearly in the along-segment
    fraction. Returns ``(lat, lon, wind, pressure)`` arrays.
    """
    if not step_km > 0:
        raise ValueError(f"step_km must be > 0, got {step_km}")
    lat, lon, wind, pres = track.arrays()
    if len(lat) == 1 or not math.isfinite(step_km):
        return lat, lon, wind, pres

    units = _unit_vectors(lat, lon)
    seg_len = haversine_km_array(lat[:-1], lon[:-1], lat[1:], lon[1:])
    out_lat, out_lon, out_wind, out_pres = [lat[:1]], [lon[:1]], [wind[:1]], [pres[:1]]
    for i, length in enumerate(seg_len):
        n = _segment_subdivisions(float(length), step_km)
        if n > 1:
            # interior points only; endpoints are taken verbatim from the fixes
            k = np.arange(1, n)
            j = n - k
            wa, wb = j / n, k / n
            a, b = units[i], units[i + 1]
            theta = length / EARTH_RADIUS_KM
            if theta < 1e-12:
                pts = wa[:, None] * a + wb[:, None] * b
            else:
                sa = np.sin(j * theta / n) / math.sin(theta)
                sb = np.sin(k * theta / n) / math.sin(theta)
                pts = sa[:, None] * a + sb[:, None] * b
            plat, plon = _to_latlon(pts)
            out_lat.append(plat)
            out_lon.append(plon)
            out_wind.append(wa * wind[i] + wb * wind[i + 1])
            out_pres.append(wa * pres[i] + wb * pres[i + 1])
        out_lat.append(lat[i + 1 : i + 2])
        out_lon.append(lon[i + 1 : i + 2])
        out_wind.append(wind[i + 1 : i + 2])
        out_pres.append(pres[i + 1 : i + 2])
    return (
        np.concatenate(out_lat),
        np.concatenate(out_lon),
        np.concatenate(out_wind),
        np.concatenate(out_pres),
    )


def closest_approach(
    track: HurricaneTrack, building: GeoPoint, step_km: float = 1.0
) -> TrajectoryFeatures:
    """Distance of closest approach and the wind/pressure there.

    Candidates within 1e-6 km of the minimum count as tied; ties resolve to
    the maximum wind speed and the maximum pressure independently.
    Pass ``step_km=math.inf`` to use only the raw fixes.
    """
    if track is None or not getattr(track, "points", None):
        raise EmptyTrackError("cannot featurize an empty track")
    lat, lon, wind, pres = densify_track(track, step_km)
    dist = haversine_km_array(lat, lon, building.lat, building.lon)
    dmin = float(dist.min())
    tied = dist <= dmin + TIE_TOLERANCE_KM
    return TrajectoryFeatures(dmin, float(wind[tied].max()), float(pres[tied].max()))


def featurize_weather(series: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Mean of each weather feature (column) over all time points (rows)."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidSeriesError(f"weather series must be a non-empty T x F matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidSeriesError("weather series contains non-finite values")
    return x.mean(axis=0)
