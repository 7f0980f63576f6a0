import numpy as np
import pytest

from galenet.dataset import SyntheticConfig, assemble_examples, generate_synthetic

_criteria: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else detail
    _criteria.append(("PASS" if rep.passed else "FAIL", marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _criteria:
        terminalreporter.write_line(f"{status}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(SyntheticConfig(n_examples=160, seed=3, embedding_dim=24, n_weather_features=5))


@pytest.fixture(scope="session")
def small_data(small_synthetic):
    return assemble_examples(small_synthetic, "proactive")


def write_tiny_manifest(root, n_buildings=3, dim=6, n_features=2, steps=4, labels=True, splits=None, seed=0):
    """Hand-written manifest: one disaster, ``n_buildings`` buildings, both phases."""
    from galenet.dataset import SCALES, write_embeddings

    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    (root / "track.csv").write_text(
        "timestamp_utc,lat,lon,wind_kt,pressure_mb\n"
        "2017-09-10T00:00:00Z,25.0,-80.0,100,950\n"
        "2017-09-10T06:00:00Z,26.0,-81.0,120,940\n",
        encoding="utf-8",
    )
    rows = ["disaster_id,timestamp_utc," + ",".join(f"f{j}" for j in range(n_features))]
    for t in range(steps):
        rows.append(f"storm,{1504000000 + 10800 * t}," + ",".join(str(float(t + j)) for j in range(n_features)))
    (root / "weather.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    splits = splits or ["train", "val", "test"] * (n_buildings // 3 + 1)
    buildings = []
    for i in range(n_buildings):
        b = {
            "id": f"b{i}",
            "disaster_id": "storm",
            "split": splits[i],
            "lon": -80.5 + 0.01 * i,
            "lat": 25.5,
            "polygon_px": [[0, 0], [10, 0], [10, 10], [0, 10]],
        }
        if labels:
            b["label"] = i % 4
        buildings.append(b)
    emb = {}
    for phase in ("pre", "post"):
        emb[phase] = {}
        for s in SCALES:
            name = f"{phase}_{s}.glne"
            write_embeddings(root / name, rng.normal(size=(n_buildings, dim)).astype(np.float32))
            emb[phase][s] = name
    doc = {
        "disasters": [{"id": "storm", "track_file": "track.csv", "weather_file": "weather.csv"}],
        "buildings": buildings,
        "embeddings": emb,
        "weather_steps": steps,
    }
    import json

    path = root / "manifest.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def tiny_manifest(tmp_path):
    return write_tiny_manifest(tmp_path / "tiny")
