from .assemble import (
    AssembledData,
    ExampleSet,
    MultimodalExample,
    Standardizer,
    assemble_examples,
    raw_features,
)
from .embeddings import read_embeddings, read_header, write_embeddings
from .manifest import (
    PHASES,
    SCALES,
    SPLITS,
    BuildingRecord,
    DamageLabel,
    Dataset,
    Disaster,
    EmbeddingRef,
    Scenario,
    footprint_lonlat,
    load_manifest,
    read_track_csv,
    read_weather_csv,
    save_dataset,
)
from .synthetic import DEFAULT_CLASS_PROBS, SyntheticConfig, generate_synthetic

__all__ = [
    "DEFAULT_CLASS_PROBS",
    "PHASES",
    "SCALES",
    "SPLITS",
    "AssembledData",
    "BuildingRecord",
    "DamageLabel",
    "Dataset",
    "Disaster",
    "EmbeddingRef",
    "ExampleSet",
    "MultimodalExample",
    "Scenario",
    "Standardizer",
    "SyntheticConfig",
    "assemble_examples",
    "footprint_lonlat",
    "generate_synthetic",
    "load_manifest",
    "raw_features",
    "read_embeddings",
    "read_header",
    "read_track_csv",
    "read_weather_csv",
    "save_dataset",
    "write_embeddings",
]
