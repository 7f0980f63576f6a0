"""Acceptance criteria, one test each.

Every test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion with the measured values.
"""

import json
import math
import warnings

import jsonschema
import numpy as np
import pytest

from gradutil import layer_errors, subset_fd_error
from test_cli import FAST, GEOJSON_SCHEMA
from test_featurize import make_track, random_track
from test_metrics import brute_auc
from test_models import galenet_loss_fn, hand_count_galenet, random_batch, randomize_biases
from test_nn import rosenbrock
from galenet.cli import main
from galenet.dataset import assemble_examples, generate_synthetic, read_embeddings, write_embeddings
from galenet.featurize import closest_approach
from galenet.geo import GeoPoint, haversine_km
from galenet.metrics import average_precision, balanced_accuracy, roc_auc_macro
from galenet.models import (
    GaLeNetConfig,
    build_concat_mlp,
    build_galenet,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from galenet.nn import (
    AdamState,
    BatchNorm,
    Linear,
    ReLU,
    adam_step,
    cross_entropy,
    encoder_block,
    focal_loss,
    grad_check,
    lbfgs_minimize,
    softmax,
    softmax_backward,
)
from galenet.training import EarlyStopping, TrainConfig, run_experiment

N = 100


def detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion("parameter counts")
def test_parameter_counts(record_property):
    g = count_params(build_galenet())
    c = count_params(build_concat_mlp())
    reduction = 100 * (1 - g / c)
    detail(record_property, f"GaLeNet {g:,}, Concat-MLP {c:,}, reduction {reduction:.2f}%")
    assert g == hand_count_galenet() == 187_942
    assert c == 400_036
    assert abs(g - 189_000) / 189_000 < 0.01
    assert abs(reduction - 53.0) <= 1.0
    assert abs(reduction - 52.75) <= 1.0


@pytest.mark.criterion("dimension contract")
def test_dimension_contract(record_property, rng):
    cfg = GaLeNetConfig()
    model = build_galenet(cfg)
    width = model.encode(random_batch(rng)).shape[1]
    detail(record_property, f"fusion input width {width}")
    assert cfg.concat_width == width == 4 * 56 + 16 + 3 == 243
    assert model.fusion.layers["linear"].params["weight"].shape == (243, 56)


@pytest.mark.criterion("gradient suite")
def test_gradient_suite(record_property, rng):
    worst = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(N):
        i, o, b = (int(v) for v in rng.integers(1, 7, 3))
        note("linear", layer_errors(Linear(i, o, rng), rng.normal(size=(b, i)), rng))

        d, b = int(rng.integers(1, 5)), int(rng.integers(2, 8))
        for train in (True, False):
            bn = BatchNorm(d)
            bn.params["gamma"][:] = rng.normal(size=d)
            bn.params["beta"][:] = rng.normal(size=d)
            bn.buffers["running_var"][:] = rng.uniform(0.5, 2, d)
            bn.momentum = 0.0
            note("batchnorm", layer_errors(bn, rng.normal(size=(b, d)) * 2, rng, train))

        x = rng.normal(size=(3, 4))
        x += np.sign(x) * 1e-3
        note("relu", layer_errors(ReLU(), x, rng))

        block = encoder_block(i, o, rng, 0.0)
        block.layers["bn"].momentum = 0.0
        xb = rng.normal(size=(int(rng.integers(3, 8)), i))
        r = rng.normal(size=(xb.shape[0], o))

        def via_block(z):
            block.zero_grad()
            return float((r * block.forward(z, True)).sum()), block.backward(r)

        note("encoder block", grad_check(via_block, xb))

        z = rng.normal(size=(3, 4))
        rs = rng.normal(size=(3, 4))
        note("softmax", grad_check(lambda v: (float((rs * softmax(v)).sum()), softmax_backward(softmax(v), rs)), z))

        z = rng.normal(scale=2, size=(int(rng.integers(1, 9)), 4))
        y = rng.integers(0, 4, z.shape[0])
        gamma, alpha = float(rng.uniform(0, 5)), rng.uniform(0.1, 2, 4)
        note("focal loss", grad_check(lambda v: focal_loss(v, y, gamma, alpha), z))
        note("cross-entropy", grad_check(lambda v: cross_entropy(v, y), z))

    for k in range(N):
        cfg = GaLeNetConfig(image_dim=3, weather_dim=2, image_encoder_out=2, weather_encoder_out=2,
                            trajectory_encoder_out=2, fusion_out=3, dropout=0.0, seed=k)
        model = build_galenet(cfg)
        randomize_biases(model, rng)
        fun, theta = galenet_loss_fn(model, random_batch(rng, n=int(rng.integers(3, 6)), d=3, f=2))
        note("GaLeNet combined loss", grad_check(fun, theta))

    model = build_galenet(GaLeNetConfig(dropout=0.0, seed=1))
    fun, theta = galenet_loss_fn(model, random_batch(rng, n=6))
    note("GaLeNet default size (150 coords)", subset_fd_error(fun, theta, rng.choice(theta.size, 150, replace=False)))

    name, err = max(worst.items(), key=lambda kv: kv[1])
    detail(record_property, f"{len(worst)} checks x {N} instances, max rel err {err:.2e} ({name})")
    assert err < 1e-4, worst


@pytest.mark.criterion("optimizer oracles")
def test_optimizer_oracles(record_property, rng):
    res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
    rosen_err = float(np.max(np.abs(res.x - 1.0)))
    assert res.converged and rosen_err < 1e-5

    worst_grad = 0.0
    for _ in range(20):
        q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        a = q @ np.diag(rng.uniform(1, 10, 10)) @ q.T
        b = rng.normal(size=10)
        r = lbfgs_minimize(lambda x: (0.5 * x @ a @ x - b @ x, a @ x - b), np.zeros(10), max_iter=50, tol=1e-9)
        assert r.converged
        worst_grad = max(worst_grad, float(np.linalg.norm(a @ r.x - b)))
    assert worst_grad < 1e-8

    for _ in range(50):
        a, x0 = rng.uniform(0.1, 10), rng.uniform(-5, 5)
        x = {"x": np.array([x0])}
        state = AdamState(lr=1e-3 * abs(x0))
        prev = a * x0 ** 2
        for _ in range(200):
            adam_step(x, {"x": 2 * a * x["x"]}, state)
            cur = a * float(x["x"][0]) ** 2
            assert cur < prev
            prev = cur
    detail(record_property, f"Rosenbrock |x-1| {rosen_err:.1e}, SPD max |grad| {worst_grad:.1e}, "
                            "Adam monotone on 50 quadratics")


@pytest.mark.criterion("metric oracles")
def test_metric_oracles(record_property, rng):
    worst = 0.0
    for n in list(range(4, 60, 3)) + [100, 250, 500]:
        for ties in (False, True):
            y = rng.integers(0, 4, n)
            s = rng.random((n, 4))
            if ties:
                s = np.round(s * 5) / 5
            present = [c for c in range(4) if 0 < (y == c).sum() < n]
            if not present:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                got = roc_auc_macro(y, s)
            worst = max(worst, abs(got - np.mean([brute_auc(y == c, s[:, c]) for c in present])))
    assert worst <= 1e-12

    assert balanced_accuracy([0, 1, 2, 3], [0, 1, 2, 3]) == 1.0
    assert balanced_accuracy([0, 0, 1, 1], [0, 0, 1, 0]) == 0.75
    assert balanced_accuracy([0, 1, 2, 3] * 5, [0] * 20) == 0.25
    pos = np.array([True, False, True, False])
    assert average_precision(pos, np.array([0.9, 0.8, 0.7, 0.6])) == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)
    assert average_precision(np.array([False] * 4 + [True]), np.array([5.0, 4, 3, 2, 1])) == pytest.approx(0.2)
    detail(record_property, f"max |AUC - brute force| {worst:.1e} for N <= 500; hand cases exact")


@pytest.mark.criterion("geodesic oracles")
def test_geodesic_oracles(record_property, rng):
    arc = 6371 * math.pi / 180
    errs = [abs(haversine_km(GeoPoint(0, 0), GeoPoint(0, 1)) - arc),
            abs(haversine_km(GeoPoint(0, 0), GeoPoint(90, 0)) - 90 * arc),
            abs(haversine_km(GeoPoint(10, 30), GeoPoint(-20, 30)) - 30 * arc)]
    assert max(errs) < 1e-3

    steps = [64.0, 16.0, 4.0, 1.0]
    for _ in range(1000):
        fixes = random_track(rng)
        k = int(rng.integers(len(fixes)))
        lat, lon, _, _ = fixes[k]
        stalled = (lat, lon, float(rng.uniform(30, 160)), float(rng.uniform(900, 1010)))
        fixes.insert(k + 1, stalled)
        track = make_track(fixes)
        f = closest_approach(track, GeoPoint(lat, lon), 1.0)
        assert f.distance_km == 0.0
        assert f.wind_speed == max(fixes[k][2], stalled[2])
        assert f.pressure == max(fixes[k][3], stalled[3])
        b = GeoPoint(float(np.clip(lat + rng.normal(), -89, 89)), lon + float(rng.normal()))
        d = [closest_approach(track, b, s).distance_km for s in steps]
        assert all(y <= x for x, y in zip(d, d[1:]))
    detail(record_property, f"arc error {max(errs):.1e} km; monotone refinement and tie-max on 1000 tracks")


# Acceptance setting for the end-to-end run; the LogReg C grid is trimmed to
# three values to keep the whole comparison inside the runtime budget.
LEARN_DATA = {"n_examples": 2000, "seed": 7, "signal_strength": 2.0}
LEARN_BATCH = 64
LOGREG_C_GRID = (1e-2, 1.0, 1e2)
SINGLE_MODALITIES = ("image", "weather", "trajectory", "scale1", "scale4", "scale16", "scale32")


@pytest.mark.slow
@pytest.mark.criterion("end-to-end learnability")
def test_end_to_end_learnability(record_property):
    data = assemble_examples(generate_synthetic(LEARN_DATA), "proactive")
    config = TrainConfig(n_seeds=1, batch_size=LEARN_BATCH)
    galenet = run_experiment("galenet", data, config)
    run = galenet.runs[0]
    ba = run.report.balanced_accuracy
    baselines = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in SINGLE_MODALITIES:
            r = run_experiment("logreg", data, config, modalities=(m,), C_grid=LOGREG_C_GRID)
            baselines[m] = r.runs[0].report.balanced_accuracy
    best = max(baselines, key=baselines.get)
    detail(record_property, f"GaLeNet {ba:.4f} after {len(run.history.epochs)} epochs; "
                            f"best single-modality LogReg {best} {baselines[best]:.4f}")
    assert len(run.history.epochs) <= 200
    assert ba >= 0.95
    assert all(ba > v for v in baselines.values()), baselines


def stopper_trace(losses, patience=5):
    stopper = EarlyStopping(patience)
    for epoch, loss in enumerate(losses, start=1):
        if stopper.update(epoch, loss):
            return epoch, stopper.best_epoch
    return len(losses), stopper.best_epoch


@pytest.mark.criterion("protocol fidelity")
def test_protocol_fidelity(record_property, small_data):
    stop, best = stopper_trace([1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99])
    assert (stop, best) == (7, 2)
    assert TrainConfig().patience == 5 and TrainConfig().n_seeds == 5

    result = run_experiment("galenet", small_data, TrainConfig(max_epochs=4, batch_size=32, learning_rate=1e-3))
    assert [r.seed for r in result.runs] == [0, 1, 2, 3, 4]
    vals = [r.report.balanced_accuracy for r in result.runs]
    summary = result.summary["balanced_accuracy"]
    assert summary["mean"] == pytest.approx(np.mean(vals), abs=1e-12)
    assert summary["std"] == pytest.approx(np.std(vals), abs=1e-12)
    detail(record_property, f"stop at epoch {stop}, best {best}; 5 seeds "
                            f"balanced accuracy {summary['mean']:.3f} +/- {summary['std']:.3f}")


@pytest.mark.criterion("determinism")
def test_determinism(record_property, tmp_path, capsys):
    outputs = []
    for name in ("a", "b"):
        root = tmp_path / name
        assert main(["synthesize", "--n-examples", "80", "--seed", "5", "--out", str(root / "ds")]) == 0
        manifest = str(root / "ds" / "manifest.json")
        assert main(["featurize", "--manifest", manifest, "--out", str(root / "feat")]) == 0
        assert main(["train", "--manifest", manifest, "--seeds", "2", "--seed", "3",
                     "--out", str(root / "run")] + FAST) == 0
        assert main(["predict", "--checkpoint", str(root / "run" / "model_seed3.glck"),
                     "--manifest", manifest, "--out", str(root / "map.geojson")]) == 0
        capsys.readouterr()
        assert main(["evaluate", "--checkpoint", str(root / "run" / "model_seed4.glck"), "--manifest", manifest]) == 0
        outputs.append(capsys.readouterr().out)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    differing = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    detail(record_property, f"{len(files)} files and evaluate stdout byte-identical across reruns")
    assert not differing, differing
    assert outputs[0] == outputs[1]


@pytest.mark.criterion("format round-trips")
def test_format_round_trips(record_property, tmp_path, rng):
    specials = np.array([[0.0, -0.0, 1e-45, -3.4028235e38, 3.4028235e38, 1.0 / 3]], dtype=np.float32)
    for k, m in enumerate([specials, rng.normal(size=(50, 768)).astype(np.float32), np.zeros((0, 4), np.float32)]):
        p = tmp_path / f"e{k}.glne"
        write_embeddings(p, m)
        back = read_embeddings(p)
        assert back.shape == m.shape and back.tobytes() == m.tobytes()

    model = build_galenet(seed=9)
    model.forward(random_batch(rng, n=16), train=True)
    meta = {"seed": 9, "best_val_loss": 0.123456789}
    save_checkpoint(model, tmp_path / "m.glck", meta, {"std.weather": rng.normal(size=16)})
    ck = load_checkpoint(tmp_path / "m.glck")
    assert ck.metadata == meta
    assert all(ck.model.tensors()[k].tobytes() == v.tobytes() for k, v in model.tensors().items())
    save_checkpoint(ck.model, tmp_path / "m2.glck", ck.metadata, ck.extra)
    assert (tmp_path / "m2.glck").read_bytes() == (tmp_path / "m.glck").read_bytes()

    manifest = tmp_path / "ds" / "manifest.json"
    assert main(["synthesize", "--n-examples", "60", "--seed", "1", "--out", str(manifest.parent)]) == 0
    assert main(["train", "--manifest", str(manifest), "--seeds", "1", "--out", str(tmp_path / "run")] + FAST) == 0
    out = tmp_path / "map.geojson"
    assert main(["predict", "--checkpoint", str(tmp_path / "run" / "model_seed0.glck"),
                 "--manifest", str(manifest), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, GEOJSON_SCHEMA)
    detail(record_property, f"embeddings and checkpoints bitwise; GeoJSON with {len(doc['features'])} features valid")
