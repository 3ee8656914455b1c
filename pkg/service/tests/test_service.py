"""Service tests: schema validation on every code path, fixture replay and
byte-determinism, request validation, and a real-socket round trip."""

import base64
import io
import json
import threading
import time

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from detect_service import rle
from detect_service.app import create_app
from detect_service.backends import FixtureBackend, LiveBackend, image_hash
from detect_service.schema import (ERROR_SCHEMA, HEALTH_SCHEMA, REQUEST_SCHEMA,
                                   RESPONSE_SCHEMA)


def _image(seed=0, h=24, w=24):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def _b64(rgb):
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _mask(h=24, w=24, box=(4, 4, 12, 12)):
    m = np.zeros((h, w), dtype=bool)
    v0, u0, v1, u1 = box
    m[v0:v1, u0:u1] = True
    return m


@pytest.fixture()
def fixture_dir(tmp_path):
    return tmp_path / "fixtures"


@pytest.fixture()
def client(fixture_dir):
    backend = FixtureBackend(fixture_dir)
    app = create_app(backend=backend)
    return TestClient(app), backend


class TestRle:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rng.random((rng.integers(1, 16), rng.integers(1, 16))) < 0.5
            np.testing.assert_array_equal(rle.decode(rle.encode(m)), m)

    def test_empty_full(self):
        for m in (np.zeros((3, 5), bool), np.ones((3, 5), bool)):
            np.testing.assert_array_equal(rle.decode(rle.encode(m)), m)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rle.decode({"size": [2, 2], "counts": [3]})


class TestDetect:
    def test_recorded_fixture_verbatim(self, client):
        tc, backend = client
        rgb = _image(1)
        mask = _mask()
        backend.record(rgb, [{"query": "jar", "bbox": [4, 4, 11, 11],
                              "score": 0.9, "mask_rle": rle.encode(mask)}])
        resp = tc.post("/detect", json={"image": _b64(rgb), "query": "jar"})
        assert resp.status_code == 200
        body = resp.json()
        jsonschema.validate(body, RESPONSE_SCHEMA)
        assert len(body["detections"]) == 1
        det = body["detections"][0]
        assert det["bbox"] == [4, 4, 11, 11]
        assert det["score"] == 0.9
        np.testing.assert_array_equal(rle.decode(det["mask_rle"]), mask)

    def test_unknown_hash_gives_empty_list(self, client):
        tc, _ = client
        resp = tc.post("/detect", json={"image": _b64(_image(2)), "query": "jar"})
        assert resp.status_code == 200
        body = resp.json()
        jsonschema.validate(body, RESPONSE_SCHEMA)
        assert body["detections"] == []

    def test_byte_deterministic(self, client):
        tc, backend = client
        rgb = _image(3)
        backend.record(rgb, [{"query": "jar", "bbox": [1, 2, 9, 9], "score": 0.8,
                              "mask_rle": rle.encode(_mask())}])
        payload = {"image": _b64(rgb), "query": "jar", "want_mask": True}
        a = tc.post("/detect", json=payload)
        b = tc.post("/detect", json=payload)
        assert a.content == b.content

    def test_scores_descending(self, client):
        tc, backend = client
        rgb = _image(4)
        backend.record(rgb, [
            {"query": "jar", "bbox": [0, 0, 4, 4], "score": 0.3, "mask_rle": None},
            {"query": "jar", "bbox": [5, 5, 9, 9], "score": 0.95, "mask_rle": None},
            {"query": "jar", "bbox": [2, 2, 6, 6], "score": 0.6, "mask_rle": None},
        ])
        body = tc.post("/detect", json={"image": _b64(rgb), "query": "jar"}).json()
        scores = [d["score"] for d in body["detections"]]
        assert scores == sorted(scores, reverse=True)

    def test_query_filtering(self, client):
        tc, backend = client
        rgb = _image(5)
        backend.record(rgb, [
            {"query": "jar", "bbox": [0, 0, 4, 4], "score": 0.9, "mask_rle": None},
            {"query": "drawer", "bbox": [5, 5, 9, 9], "score": 0.8, "mask_rle": None},
        ])
        body = tc.post("/detect", json={"image": _b64(rgb), "query": "drawer"}).json()
        assert len(body["detections"]) == 1
        assert body["detections"][0]["score"] == 0.8

    def test_want_mask_false_strips_masks(self, client):
        tc, backend = client
        rgb = _image(6)
        backend.record(rgb, [{"query": "jar", "bbox": [0, 0, 4, 4], "score": 0.9,
                              "mask_rle": rle.encode(_mask())}])
        body = tc.post("/detect", json={"image": _b64(rgb), "query": "jar",
                                        "want_mask": False}).json()
        jsonschema.validate(body, RESPONSE_SCHEMA)
        assert body["detections"][0]["mask_rle"] is None

    def test_threshold_filters(self, client):
        tc, backend = client
        rgb = _image(7)
        backend.record(rgb, [{"query": "jar", "bbox": [0, 0, 4, 4], "score": 0.05,
                              "mask_rle": None}])
        body = tc.post("/detect", json={"image": _b64(rgb), "query": "jar"}).json()
        assert body["detections"] == []

    def test_bbox_clamped_to_image(self, client):
        tc, backend = client
        rgb = _image(8)
        backend.record(rgb, [{"query": "jar", "bbox": [-5, -5, 99, 99], "score": 0.9,
                              "mask_rle": None}])
        body = tc.post("/detect", json={"image": _b64(rgb), "query": "jar"}).json()
        jsonschema.validate(body, RESPONSE_SCHEMA)
        u0, v0, u1, v1 = body["detections"][0]["bbox"]
        assert 0 <= u0 <= u1 <= 23 and 0 <= v0 <= v1 <= 23


class TestBadRequests:
    def test_malformed_json(self, client):
        tc, _ = client
        resp = tc.post("/detect", content=b"{nope",
                       headers={"content-type": "application/json"})
        assert resp.status_code == 400
        jsonschema.validate(resp.json(), ERROR_SCHEMA)

    def test_missing_fields(self, client):
        tc, _ = client
        resp = tc.post("/detect", json={"query": "jar"})
        assert resp.status_code == 400
        jsonschema.validate(resp.json(), ERROR_SCHEMA)

    def test_bad_image(self, client):
        tc, _ = client
        resp = tc.post("/detect", json={"image": "definitely-not-base64!",
                                        "query": "jar"})
        assert resp.status_code == 400

    def test_empty_query(self, client):
        tc, _ = client
        resp = tc.post("/detect", json={"image": _b64(_image(9)), "query": "  "})
        assert resp.status_code == 400

    def test_request_schema_published(self):
        jsonschema.validate({"image": "aGk=", "query": "jar", "want_mask": True},
                            REQUEST_SCHEMA)
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate({"query": "jar"}, REQUEST_SCHEMA)


class TestHealth:
    def test_fixture_mode(self, client):
        tc, _ = client
        resp = tc.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        jsonschema.validate(body, HEALTH_SCHEMA)
        assert body["mode"] == "fixture"

    def test_live_mode_without_models_is_503(self):
        backend = LiveBackend(detector_model="nonexistent/model-xyz",
                              segmenter_model="nonexistent/model-xyz")
        tc = TestClient(create_app(backend=backend))
        health = tc.get("/health")
        assert health.status_code == 503
        jsonschema.validate(health.json(), ERROR_SCHEMA)
        resp = tc.post("/detect", json={"image": _b64(_image(10)), "query": "jar"})
        assert resp.status_code == 503
        jsonschema.validate(resp.json(), ERROR_SCHEMA)


def test_image_hash_matches_pixels():
    a, b = _image(11), _image(11)
    assert image_hash(a) == image_hash(b)
    b[0, 0, 0] ^= 1
    assert image_hash(a) != image_hash(b)


def test_real_socket_round_trip(tmp_path):
    """Serve over an actual TCP socket and drive it with a raw HTTP client."""
    import socket

    import requests
    import uvicorn

    backend = FixtureBackend(tmp_path)
    rgb = _image(12)
    backend.record(rgb, [{"query": "jar", "bbox": [2, 2, 9, 9], "score": 0.7,
                          "mask_rle": rle.encode(_mask())}])
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    config = uvicorn.Config(create_app(backend=backend), host="127.0.0.1",
                            port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        deadline = time.time() + 10
        while time.time() < deadline:
            try:
                if requests.get(f"http://127.0.0.1:{port}/health", timeout=1).ok:
                    break
            except requests.RequestException:
                time.sleep(0.05)
        resp = requests.post(f"http://127.0.0.1:{port}/detect",
                             json={"image": _b64(rgb), "query": "jar"}, timeout=5)
        assert resp.status_code == 200
        body = resp.json()
        jsonschema.validate(body, RESPONSE_SCHEMA)
        assert body["detections"][0]["score"] == 0.7
    finally:
        server.should_exit = True
        thread.join(timeout=5)
