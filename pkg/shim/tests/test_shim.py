import base64
import io
import json
import sys
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient
from jsonschema import validate
from PIL import Image

from affshim.app import create_app
from affshim.config import ShimConfig

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "src" / "affmap" / "schemas"
DETECT_SCHEMA = json.loads((SCHEMA_DIR / "detect_response.schema.json").read_text())
EMBED_SCHEMA = json.loads((SCHEMA_DIR / "embed_response.schema.json").read_text())
FIXTURE_PATH = Path(__file__).parent / "fixtures" / "model_sims.json"


def png_b64(width=64, height=48, color=(200, 120, 40)):
    image = Image.new("RGB", (width, height), color)
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


@pytest.fixture(scope="module")
def offline_client():
    """Offline backends: stub detector, hash-trigram embedder."""
    config = ShimConfig(detector="stub", embedder="hash-trigram")
    with TestClient(create_app(config)) as client:
        yield client


def test_port_range_validated():
    with pytest.raises(ValueError):
        ShimConfig(port=80)


def test_health_not_ready_then_ok(offline_client):
    first = offline_client.get("/health").json()
    assert first["status"] == "not_ready"
    offline_client.post("/embed", json={"texts": ["warm-up"]})
    offline_client.post("/detect", json={"image_b64": png_b64(),
                                         "labels": ["cup"]})
    assert offline_client.get("/health").json() == {"status": "ok"}


# --- /detect ---

def test_detect_response_matches_shared_schema(offline_client):
    response = offline_client.post(
        "/detect", json={"image_b64": png_b64(), "labels": ["cup"],
                         "box_threshold": 0.3})
    assert response.status_code == 200
    doc = response.json()
    validate(doc, DETECT_SCHEMA)
    assert len(doc["detections"]) >= 1
    assert doc["detections"][0]["label"] == "cup"


def test_detect_boxes_in_pixel_coordinates(offline_client):
    width, height = 320, 200
    doc = offline_client.post(
        "/detect", json={"image_b64": png_b64(width, height),
                         "labels": ["cup"]}).json()
    x_min, y_min, x_max, y_max = doc["detections"][0]["box"]
    assert 0 <= x_min < x_max <= width
    assert 0 <= y_min < y_max <= height


def test_detect_empty_labels_400(offline_client):
    response = offline_client.post(
        "/detect", json={"image_b64": png_b64(), "labels": []})
    assert response.status_code == 400


def test_detect_malformed_body_400(offline_client):
    response = offline_client.post(
        "/detect", content=b"not json",
        headers={"content-type": "application/json"})
    assert response.status_code == 400


def test_detect_undecodable_image_422(offline_client):
    garbage = base64.b64encode(b"definitely not an image").decode()
    response = offline_client.post(
        "/detect", json={"image_b64": garbage, "labels": ["cup"]})
    assert response.status_code == 422


def test_detect_threshold_filters(offline_client):
    doc = offline_client.post(
        "/detect", json={"image_b64": png_b64(), "labels": ["cup"],
                         "box_threshold": 0.95}).json()
    assert doc["detections"] == []


# --- /embed ---

def test_embed_response_matches_shared_schema(offline_client):
    response = offline_client.post("/embed", json={"texts": ["push", "pick"]})
    assert response.status_code == 200
    doc = response.json()
    validate(doc, EMBED_SCHEMA)
    assert len(doc["vectors"]) == 2
    assert all(len(v) == doc["dimension"] for v in doc["vectors"])


def test_embed_deterministic_and_unit_norm(offline_client):
    doc = offline_client.post("/embed",
                              json={"texts": ["push", "push"]}).json()
    assert doc["vectors"][0] == doc["vectors"][1]
    again = offline_client.post("/embed", json={"texts": ["push"]}).json()
    assert again["vectors"][0] == doc["vectors"][0]
    for vector in doc["vectors"]:
        assert np.linalg.norm(vector) == pytest.approx(1.0, abs=1e-5)


def test_embed_empty_texts_400(offline_client):
    assert offline_client.post("/embed", json={"texts": []}).status_code == 400
    assert offline_client.post("/embed",
                               json={"texts": ["  "]}).status_code == 400


# --- real embedding model (acceptance criterion: shim conformance) ---

def _real_embed(texts):
    config = ShimConfig(detector="stub")  # default embedder model
    with TestClient(create_app(config)) as client:
        response = client.post("/embed", json={"texts": texts})
        if response.status_code == 503:
            return None, response.json().get("error", "")
        assert response.status_code == 200
        return response.json(), None


def test_real_model_synonym_similarity_and_regression_pin(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(line):
        if capman is not None:
            with capman.global_and_fixture_disabled():
                sys.stderr.write(line + "\n")
                sys.stderr.flush()
        else:
            sys.stderr.write(line + "\n")

    label = "shim conformance with real embedding model"
    doc, error = _real_embed(["pickable", "graspable", "cut", "golf ball"])
    if doc is None:
        emit(f"ACCEPTANCE 9: SKIP - {label} (model unavailable: "
             f"{error[:80]}); wire conformance verified on fallback backend")
        pytest.skip(f"embedding model unavailable in this environment: {error}")
    try:
        validate(doc, EMBED_SCHEMA)
        vectors = np.array(doc["vectors"])
        sims = {
            "pickable/graspable": float(vectors[0] @ vectors[1]),
            "cut/golf ball": float(vectors[2] @ vectors[3]),
        }
        assert sims["pickable/graspable"] > 0.45
        if FIXTURE_PATH.exists():
            pinned = json.loads(FIXTURE_PATH.read_text())
            for key, value in pinned.items():
                assert sims[key] == pytest.approx(value, abs=0.02)
        else:
            FIXTURE_PATH.parent.mkdir(parents=True, exist_ok=True)
            FIXTURE_PATH.write_text(json.dumps(sims, indent=2) + "\n")
    except BaseException:
        emit(f"ACCEPTANCE 9: FAIL - {label}")
        raise
    emit(f"ACCEPTANCE 9: PASS - {label}")
