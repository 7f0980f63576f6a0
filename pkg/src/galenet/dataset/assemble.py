"""Per-building alignment of image, weather and trajectory features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..errors import InputError
from ..featurize import closest_approach, featurize_weather
from .manifest import SCALES, SPLITS, Dataset, DamageLabel, Scenario

UNLABELED = -1


@dataclass(frozen=True)
class MultimodalExample:
    image_embeddings: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    weather: np.ndarray
    trajectory: np.ndarray
    label: Optional[DamageLabel]


@dataclass
class Standardizer:
    """Per-feature affine standardization fitted on the training split.

    Population standard deviation; features with zero variance map to 0.
    """

    weather_mean: np.ndarray
    weather_std: np.ndarray
    trajectory_mean: np.ndarray
    trajectory_std: np.ndarray

    @classmethod
    def fit(cls, weather: np.ndarray, trajectory: np.ndarray) -> "Standardizer":
        if len(weather) == 0:
            raise InputError("cannot fit standardization on an empty training split")
        return cls(weather.mean(0), weather.std(0), trajectory.mean(0), trajectory.std(0))

    @staticmethod
    def _apply(x, mean, std):
        constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        safe = np.where(constant, 1.0, std)
        return np.where(constant, 0.0, (x - mean) / safe)

    def weather(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x, self.weather_mean, self.weather_std)

    def trajectory(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x, self.trajectory_mean, self.trajectory_std)

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "norm.weather_mean": self.weather_mean,
            "norm.weather_std": self.weather_std,
            "norm.trajectory_mean": self.trajectory_mean,
            "norm.trajectory_std": self.trajectory_std,
        }

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray]) -> "Standardizer":
        return cls(t["norm.weather_mean"], t["norm.weather_std"],
                   t["norm.trajectory_mean"], t["norm.trajectory_std"])


@dataclass
class ExampleSet:
    """Column-oriented batch of examples from one split.

    ``images`` holds one ``N x D`` float64 matrix per crop scale; ``labels``
    uses -1 for unlabeled buildings.
    """

    ids: list[str]
    images: list[np.ndarray]
    weather: np.ndarray
    trajectory: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.ids)

    def subset(self, idx) -> "ExampleSet":
        idx = np.asarray(idx)
        return ExampleSet(
            [self.ids[i] for i in idx],
            [m[idx] for m in self.images],
            self.weather[idx],
            self.trajectory[idx],
            self.labels[idx],
        )

    @property
    def labeled(self) -> bool:
        return bool(len(self.labels)) and bool(np.all(self.labels >= 0))

    def __iter__(self) -> Iterator[MultimodalExample]:
        for i in range(len(self)):
            label = None if self.labels[i] < 0 else DamageLabel(int(self.labels[i]))
            yield MultimodalExample(
                tuple(m[i] for m in self.images), self.weather[i], self.trajectory[i], label
            )


@dataclass
class AssembledData:
    scenario: Scenario
    splits: dict[str, ExampleSet]
    standardizer: Standardizer

    def __getitem__(self, split: str) -> ExampleSet:
        return self.splits[split]


def raw_features(ds: Dataset, step_km: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Unstandardized ``(weather N x F, trajectory N x 3)`` in manifest order."""
    weather_by_disaster = {did: featurize_weather(d.weather) for did, d in ds.disasters.items()}
    weather = np.array([weather_by_disaster[b.disaster_id] for b in ds.buildings], dtype=float)
    trajectory = np.array(
        [closest_approach(ds.disasters[b.disaster_id].track, b.location, step_km).as_array()
         for b in ds.buildings],
        dtype=float,
    ).reshape(len(ds.buildings), 3)
    if len(ds.buildings) == 0:
        weather = weather.reshape(0, 0)
    return weather, trajectory


def assemble_examples(
    ds: Dataset,
    scenario: Scenario | str,
    standardizer: Optional[Standardizer] = None,
    step_km: float = 1.0,
) -> AssembledData:
    """Align all modalities per building and split by the manifest's assignment.

    Proactive uses pre-disaster embeddings, reactive post-disaster ones; no
    other phase is read. Weather and trajectory features are standardized
    with train-split statistics unless ``standardizer`` is given.
    """
    scenario = Scenario(scenario)
    images = [np.asarray(m, dtype=np.float64) for m in ds.phase_embeddings(scenario.phase)]
    weather, trajectory = raw_features(ds, step_km)
    labels = np.array([UNLABELED if b.label is None else int(b.label) for b in ds.buildings], dtype=np.int64)
    split_of = np.array([b.split for b in ds.buildings])

    if standardizer is None:
        train = split_of == "train"
        standardizer = Standardizer.fit(weather[train], trajectory[train])
    weather = standardizer.weather(weather)
    trajectory = standardizer.trajectory(trajectory)

    ids = [b.id for b in ds.buildings]
    splits = {}
    for split in SPLITS:
        idx = np.flatnonzero(split_of == split)
        splits[split] = ExampleSet(
            [ids[i] for i in idx],
            [m[idx] for m in images],
            weather[idx],
            trajectory[idx],
            labels[idx],
        )
    return AssembledData(scenario, splits, standardizer)


__all__ = [
    "SCALES",
    "AssembledData",
    "ExampleSet",
    "MultimodalExample",
    "Standardizer",
    "assemble_examples",
    "raw_features",
]
