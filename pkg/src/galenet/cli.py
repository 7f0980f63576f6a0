"""``galenet`` command line: synthesize, featurize, train, evaluate, predict.

Exit status is 0 on success, 2 for bad inputs (missing or malformed files,
mismatched checkpoints) and 1 for any other failure. Diagnostics go to
stderr; only primary outputs go to stdout or ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataset import (
    SPLITS,
    DamageLabel,
    Dataset,
    ExampleSet,
    Scenario,
    Standardizer,
    SyntheticConfig,
    assemble_examples,
    footprint_lonlat,
    generate_synthetic,
    load_manifest,
    raw_features,
    save_dataset,
)
from .errors import GaLeNetError, InputError, ShapeError
from .metrics import evaluate
from .models import load_checkpoint, save_checkpoint
from .nn.layers import softmax
from .training import MODEL_KINDS, TrainConfig, predict_logits, run_experiment

log = logging.getLogger("galenet")

SEVERITY_COLORS = ("green", "wheat", "orange", "red")
NEURAL_FLAGS = ("batch_size", "lr", "patience", "max_epochs")


def _configure_logging() -> None:
    level = os.environ.get("GALENET_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)


def _synthetic_config(spec: str) -> SyntheticConfig:
    if spec == "default":
        return SyntheticConfig()
    path = Path(spec)
    if not path.exists():
        raise InputError(f"synthetic config not found: {path}")
    try:
        return SyntheticConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid synthetic config: {exc}") from exc


def _load_dataset(args, phases: Sequence[str]) -> Dataset:
    if args.manifest:
        return load_manifest(args.manifest, phases=phases)
    if args.synthetic:
        return generate_synthetic(_synthetic_config(args.synthetic))
    raise InputError("one of --manifest or --synthetic is required")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _all_examples(data) -> tuple[ExampleSet, list[str]]:
    parts = [data[s] for s in SPLITS]
    ids = [i for p in parts for i in p.ids]
    merged = ExampleSet(
        ids,
        [np.concatenate([p.images[j] for p in parts]) for j in range(len(parts[0].images))],
        np.concatenate([p.weather for p in parts]),
        np.concatenate([p.trajectory for p in parts]),
        np.concatenate([p.labels for p in parts]),
    )
    return merged, ids


def _checkpoint_data(args):
    ckpt = load_checkpoint(args.checkpoint)
    scenario = Scenario(ckpt.metadata.get("scenario", "proactive"))
    ds = _load_dataset(args, (scenario.phase,))
    standardizer = Standardizer.from_tensors(ckpt.extra) if ckpt.extra else None
    try:
        data = assemble_examples(ds, scenario, standardizer)
    except ValueError as exc:
        raise InputError(f"checkpoint does not match the dataset features: {exc}") from exc
    return ckpt, scenario, ds, data


def _probabilities(model, examples) -> np.ndarray:
    try:
        main, _ = predict_logits(model, examples)
    except ShapeError as exc:
        raise InputError(f"checkpoint does not match the dataset features: {exc}") from exc
    return softmax(main)


def prediction_properties(building_id: str, probs, label=None, scenario: str = "proactive") -> dict:
    """GeoJSON properties for one building; ``label``/``correct`` only when labelled."""
    probs = [float(p) for p in probs]
    pred = int(np.argmax(probs))
    props = {
        "id": building_id,
        "predicted": DamageLabel(pred).display_name,
        "predicted_class": pred,
        "probs": probs,
        "scenario": scenario,
        "severity_color": SEVERITY_COLORS[pred],
    }
    if label is not None:
        props["label"] = DamageLabel(int(label)).display_name
        props["correct"] = pred == int(label)
    return props


def cmd_synthesize(args) -> int:
    cfg = _synthetic_config(args.config) if args.config else SyntheticConfig()
    overrides = {k: v for k, v in (("n_examples", args.n_examples), ("seed", args.seed),
                                   ("signal_strength", args.signal_strength)) if v is not None}
    if overrides:
        cfg = SyntheticConfig.from_dict({**cfg.__dict__, **overrides})
    path = save_dataset(generate_synthetic(cfg), args.out)
    print(path)
    return 0


def cmd_featurize(args) -> int:
    ds = _load_dataset(args, ())
    weather, trajectory = raw_features(ds, args.step_km)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ids = [b.id for b in ds.buildings]
    _write_csv(out / "trajectory_features.csv", ["id", "distance_km", "wind_speed", "pressure"],
               ([i, *map(repr, map(float, row))] for i, row in zip(ids, trajectory)))
    n_w = weather.shape[1] if weather.ndim == 2 else 0
    _write_csv(out / "weather_features.csv", ["id"] + [f"w{j}" for j in range(n_w)],
               ([i, *map(repr, map(float, row))] for i, row in zip(ids, weather)))
    log.info("featurized %d buildings into %s", len(ids), out)
    return 0


def cmd_train(args) -> int:
    scenario = Scenario(args.scenario)
    if args.model == "logreg":
        given = [f"--{k.replace('_', '-')}" for k in NEURAL_FLAGS if getattr(args, k) is not None]
        if given:
            log.warning("--model logreg ignores neural-training flags: %s", ", ".join(given))
    ds = _load_dataset(args, (scenario.phase,))
    data = assemble_examples(ds, scenario)

    defaults = TrainConfig()
    config = TrainConfig(
        learning_rate=args.lr if args.lr is not None else defaults.learning_rate,
        batch_size=args.batch_size if args.batch_size is not None else defaults.batch_size,
        max_epochs=args.max_epochs if args.max_epochs is not None else defaults.max_epochs,
        patience=args.patience if args.patience is not None else defaults.patience,
        n_seeds=args.seeds,
        seed=args.seed,
        monitor=args.monitor,
    )
    kwargs = {}
    if args.model == "logreg" and args.modalities:
        kwargs["modalities"] = args.modalities.split(",")
    result = run_experiment(args.model, data, config, **kwargs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    history_lines = []
    for run in result.runs:
        meta = {"scenario": scenario.value, "seed": run.seed, "model": args.model}
        if run.history is not None:
            meta.update(epochs=len(run.history.epochs), best_epoch=run.history.best_epoch,
                        best_val_loss=run.history.best_val_loss)
            history_lines.append(run.history.to_jsonl(run.seed))
        if run.C is not None:
            meta["C"] = run.C
        save_checkpoint(run.model, out / f"model_seed{run.seed}.glck", meta, data.standardizer.tensors())
    (out / "history.jsonl").write_text("".join(history_lines), encoding="utf-8")
    report = json.dumps(result.to_dict(scenario.value), indent=2, sort_keys=False)
    (out / "report.json").write_text(report + "\n", encoding="utf-8")
    print(report)
    return 0


def cmd_evaluate(args) -> int:
    if args.split == "train" and not args.allow_train:
        raise InputError("evaluating the train split requires --allow-train")
    ckpt, _, _, data = _checkpoint_data(args)
    examples = data[args.split]
    if len(examples) == 0:
        raise InputError(f"split {args.split!r} is empty")
    if not examples.labeled:
        raise InputError(f"split {args.split!r} has unlabeled buildings")
    report = evaluate(examples.labels, _probabilities(ckpt.model, examples))
    d = report.to_dict()
    if not args.curves:
        d.pop("per_class_roc")
    print(json.dumps(d, indent=2))
    return 0


def cmd_predict(args) -> int:
    ckpt, scenario, ds, data = _checkpoint_data(args)
    examples, ids = _all_examples(data)
    probs = _probabilities(ckpt.model, examples)
    row_of = {i: k for k, i in enumerate(ids)}
    features = []
    for b in ds.buildings:
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [footprint_lonlat(b, ds.gsd_m)]},
            "properties": prediction_properties(b.id, probs[row_of[b.id]], b.label, scenario.value),
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(args.out).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    log.info("wrote %d features to %s", len(features), args.out)
    return 0


def _add_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--manifest", help="dataset manifest JSON")
    g.add_argument("--synthetic", help="synthetic config JSON, or 'default'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="galenet", description="Multimodal hurricane damage classification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="write a synthetic dataset directory")
    p.add_argument("--config", help="synthetic config JSON")
    p.add_argument("--n-examples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--signal-strength", type=float)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("featurize", help="write per-building trajectory and weather feature tables")
    _add_source(p)
    p.add_argument("--step-km", type=float, default=1.0, help="track densification step")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a model over several seeds")
    _add_source(p)
    p.add_argument("--model", choices=MODEL_KINDS, default="galenet")
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default="proactive")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--monitor", choices=("loss", "main_loss"), default="loss")
    p.add_argument("--modalities", help="LogReg modalities, comma separated (e.g. image,weather)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print an evaluation report for one split")
    p.add_argument("--checkpoint", required=True)
    _add_source(p)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--allow-train", action="store_true", help="permit evaluating the train split")
    p.add_argument("--curves", action="store_true", help="include per-class ROC curves")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write a GeoJSON severity map")
    p.add_argument("--checkpoint", required=True)
    _add_source(p)
    p.add_argument("--out", required=True, help="output .geojson path")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except InputError as exc:
        print(f"galenet: error: {exc}", file=sys.stderr)
        return 2
    except (GaLeNetError, ValueError, OSError) as exc:
        print(f"galenet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
