"""Detector client tests: RLE codec, fixture replay, centroid and pose
extraction, and the HTTP service mode against a stub server."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from voxact.detector import (
    Detection,
    detect,
    detection_record,
    image_id,
    mask_centroid,
    mask_principal_angle,
    mask_to_rle,
    object_pose_from_detection,
    rle_to_mask,
    write_fixture,
)
from voxact.errors import ConfigError, DetectionError, ServiceError
from voxact.geometry import CameraIntrinsics, Pose6D


def _rgb(seed=0, h=16, w=16):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def _mask(h=16, w=16, box=(4, 4, 8, 8)):
    m = np.zeros((h, w), dtype=bool)
    v0, u0, v1, u1 = box
    m[v0:v1, u0:u1] = True
    return m


K = CameraIntrinsics(fx=100.0, fy=100.0, cx=64.0, cy=64.0, width=128, height=128)


class TestRle:
    def test_round_trip_random(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = rng.random((rng.integers(1, 20), rng.integers(1, 20))) < 0.4
            np.testing.assert_array_equal(rle_to_mask(mask_to_rle(m)), m)

    def test_empty_and_full(self):
        for m in (np.zeros((5, 7), bool), np.ones((5, 7), bool)):
            np.testing.assert_array_equal(rle_to_mask(mask_to_rle(m)), m)

    def test_leading_ones_get_zero_run(self):
        m = np.ones((2, 2), bool)
        assert mask_to_rle(m)["counts"][0] == 0

    def test_bad_length_rejected(self):
        with pytest.raises(ConfigError):
            rle_to_mask({"size": [2, 2], "counts": [1, 1]})


class TestFixtureMode:
    def test_passthrough(self, tmp_path):
        rgb = _rgb()
        mask = _mask()
        rec = detection_record("jar", (4, 4, 7, 7), 0.88, mask)
        write_fixture(tmp_path, rgb, [rec])
        det = detect(rgb, "jar", mode="fixture", fixture_dir=tmp_path)
        assert det.score == 0.88
        assert det.bbox == (4.0, 4.0, 7.0, 7.0)
        np.testing.assert_array_equal(det.mask, mask)

    def test_top_score_wins(self, tmp_path):
        rgb = _rgb(2)
        recs = [detection_record("jar", (0, 0, 3, 3), 0.4),
                detection_record("jar", (5, 5, 9, 9), 0.9)]
        write_fixture(tmp_path, rgb, recs)
        det = detect(rgb, "jar", mode="fixture", fixture_dir=tmp_path)
        assert det.score == 0.9

    def test_query_filter(self, tmp_path):
        rgb = _rgb(3)
        recs = [detection_record("drawer", (0, 0, 3, 3), 0.95),
                detection_record("jar", (5, 5, 9, 9), 0.5)]
        write_fixture(tmp_path, rgb, recs)
        assert detect(rgb, "jar", mode="fixture", fixture_dir=tmp_path).score == 0.5

    def test_below_threshold_rejected(self, tmp_path):
        rgb = _rgb(4)
        write_fixture(tmp_path, rgb, [detection_record("jar", (0, 0, 3, 3), 0.05)])
        with pytest.raises(DetectionError):
            detect(rgb, "jar", mode="fixture", fixture_dir=tmp_path)

    def test_missing_fixture(self, tmp_path):
        with pytest.raises(DetectionError):
            detect(_rgb(5), "jar", mode="fixture", fixture_dir=tmp_path)

    def test_deterministic_across_calls(self, tmp_path):
        rgb = _rgb(6)
        write_fixture(tmp_path, rgb, [detection_record("jar", (1, 2, 5, 6), 0.7, _mask())])
        a = detect(rgb, "jar", mode="fixture", fixture_dir=tmp_path)
        b = detect(rgb, "jar", mode="fixture", fixture_dir=tmp_path)
        assert a.bbox == b.bbox and a.score == b.score
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_image_id_is_pixel_hash(self):
        a, b = _rgb(7), _rgb(7)
        assert image_id(a) == image_id(b)
        b[0, 0, 0] ^= 1
        assert image_id(a) != image_id(b)


class TestCentroid:
    def test_full_2x2(self):
        d = Detection(bbox=(0, 0, 1, 1), score=1.0, query="q", mask=np.ones((2, 2), bool))
        assert mask_centroid(d) == (0.5, 0.5)

    def test_single_pixel(self):
        m = np.zeros((8, 8), bool)
        m[3, 7] = True  # v=3, u=7
        d = Detection(bbox=(7, 3, 7, 3), score=1.0, query="q", mask=m)
        assert mask_centroid(d) == (7.0, 3.0)

    def test_bbox_fallback(self):
        d = Detection(bbox=(10, 10, 30, 20), score=1.0, query="q", mask=None)
        assert mask_centroid(d) == (20.0, 15.0)

    def test_matches_brute_force_mean(self):
        rng = np.random.default_rng(8)
        m = rng.random((12, 9)) < 0.3
        m[0, 0] = True
        d = Detection(bbox=(0, 0, 8, 11), score=1.0, query="q", mask=m)
        expect_u = np.mean([u for v in range(12) for u in range(9) if m[v, u]])
        expect_v = np.mean([v for v in range(12) for u in range(9) if m[v, u]])
        assert mask_centroid(d) == (expect_u, expect_v)


class TestPrincipalAngle:
    def test_square_is_zero(self):
        assert mask_principal_angle(_mask(box=(2, 2, 10, 10))) == 0.0

    def test_horizontal_strip(self):
        assert mask_principal_angle(_mask(box=(7, 1, 9, 15))) == pytest.approx(0.0, abs=1e-9)

    def test_vertical_strip(self):
        angle = mask_principal_angle(_mask(box=(1, 7, 15, 9)))
        assert angle == pytest.approx(-90.0, abs=1e-9)

    def test_diagonal(self):
        m = np.zeros((32, 32), bool)
        for i in range(28):
            m[i, i] = True
        assert mask_principal_angle(m) == pytest.approx(45.0, abs=1.0)


class TestObjectPose:
    def test_principal_point(self):
        depth = np.full((128, 128), 1.0, dtype=np.float32)
        m = np.zeros((128, 128), bool)
        m[63:66, 63:66] = True  # centroid at (64, 64)
        d = Detection(bbox=(63, 63, 65, 65), score=1.0, query="jar", mask=m)
        pose = object_pose_from_detection(d, depth, K)
        np.testing.assert_allclose(pose.position, [0, 0, 1], atol=1e-9)

    def test_off_center_pinhole(self):
        # centroid (84, 64), d = 0.5 -> x = (84-64)/100*0.5 = 0.1
        depth = np.full((128, 128), 0.5, dtype=np.float32)
        m = np.zeros((128, 128), bool)
        m[64, 84] = True
        d = Detection(bbox=(84, 64, 84, 64), score=1.0, query="jar", mask=m)
        pose = object_pose_from_detection(d, depth, K)
        np.testing.assert_allclose(pose.position, [0.1, 0.0, 0.5], atol=1e-9)

    def test_matches_deprojection(self):
        # cross-module consistency with rgbd.deproject at the centroid pixel
        from voxact.rgbd import RgbdFrame, deproject

        depth = np.zeros((128, 128), dtype=np.float32)
        depth[40, 90] = 1.3
        m = np.zeros((128, 128), bool)
        m[40, 90] = True
        d = Detection(bbox=(90, 40, 90, 40), score=1.0, query="jar", mask=m)
        pose = object_pose_from_detection(d, depth, K)
        ident = Pose6D(np.zeros(3), np.array([1.0, 0, 0, 0]),
                       frame="world", child_frame="camera")
        frame = RgbdFrame(rgb=np.zeros((128, 128, 3), np.uint8), depth=depth,
                          intrinsics=K, extrinsics=ident)
        np.testing.assert_allclose(pose.position, deproject(frame).points[0], atol=1e-9)

    def test_depth_hole_fallback(self):
        depth = np.full((128, 128), 2.0, dtype=np.float32)
        depth[62:67, 62:67] = 0.0  # hole at the centroid
        m = np.zeros((128, 128), bool)
        m[60:69, 60:69] = True
        d = Detection(bbox=(60, 60, 68, 68), score=1.0, query="jar", mask=m)
        pose = object_pose_from_detection(d, depth, K)
        assert pose.position[2] == pytest.approx(2.0)

    def test_no_depth_anywhere_near(self):
        depth = np.zeros((128, 128), dtype=np.float32)
        m = np.zeros((128, 128), bool)
        m[64, 64] = True
        d = Detection(bbox=(64, 64, 64, 64), score=1.0, query="jar", mask=m)
        with pytest.raises(DetectionError):
            object_pose_from_detection(d, depth, K)

    def test_square_mask_yaw_zero(self):
        depth = np.full((128, 128), 1.0, dtype=np.float32)
        m = _mask(h=128, w=128, box=(50, 50, 80, 80))
        d = Detection(bbox=(50, 50, 79, 79), score=1.0, query="jar", mask=m)
        assert object_pose_from_detection(d, depth, K).yaw_deg == 0.0

    def test_extent_from_bbox(self):
        depth = np.full((128, 128), 1.0, dtype=np.float32)
        m = _mask(h=128, w=128, box=(54, 44, 74, 84))  # 40 px wide, 20 px tall
        d = Detection(bbox=(44, 54, 84, 74), score=1.0, query="jar", mask=m)
        pose = object_pose_from_detection(d, depth, K)
        assert pose.extent[0] == pytest.approx(40 / 100.0)
        assert pose.extent[1] == pytest.approx(20 / 100.0)


class _StubHandler(BaseHTTPRequestHandler):
    response: dict = {}
    last_request: dict = {}

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).last_request = json.loads(body)
        payload = json.dumps(type(self).response).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestServiceMode:
    def test_round_trip(self, stub_server):
        mask = _mask()
        _StubHandler.response = {
            "detections": [{"bbox": [4, 4, 7, 7], "score": 0.77,
                            "mask_rle": mask_to_rle(mask)}],
            "model_info": ["stub"],
        }
        det = detect(_rgb(9), "jar", mode="service", endpoint=stub_server)
        assert det.score == 0.77
        np.testing.assert_array_equal(det.mask, mask)
        assert _StubHandler.last_request["query"] == "jar"
        assert _StubHandler.last_request["want_mask"] is True

    def test_empty_response(self, stub_server):
        _StubHandler.response = {"detections": [], "model_info": ["stub"]}
        with pytest.raises(DetectionError):
            detect(_rgb(10), "jar", mode="service", endpoint=stub_server)

    def test_unreachable(self):
        with pytest.raises(ServiceError):
            detect(_rgb(11), "jar", mode="service",
                   endpoint="http://127.0.0.1:1", timeout=0.5)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            detect(_rgb(12), "jar", mode="telepathy")


class TestAgainstRealService:
    """Wire-format contract check against the actual detection service,
    when it is installed alongside (it serves; this client consumes)."""

    @pytest.fixture()
    def live_service(self, tmp_path):
        detect_service = pytest.importorskip("detect_service")
        import socket
        import time as _time

        import uvicorn
        from detect_service.app import create_app
        from detect_service.backends import FixtureBackend

        backend = FixtureBackend(tmp_path)
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        config = uvicorn.Config(create_app(backend=backend), host="127.0.0.1",
                                port=port, log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = _time.time() + 10
        import requests as _requests

        while _time.time() < deadline:
            try:
                if _requests.get(f"http://127.0.0.1:{port}/health", timeout=1).ok:
                    break
            except _requests.RequestException:
                _time.sleep(0.05)
        yield backend, f"http://127.0.0.1:{port}"
        server.should_exit = True
        thread.join(timeout=5)

    def test_detect_through_service(self, live_service):
        backend, endpoint = live_service
        rgb = _rgb(77)
        mask = _mask()
        backend.record(rgb, [detection_record("jar", (4, 4, 7, 7), 0.85, mask)])
        det = detect(rgb, "jar", mode="service", endpoint=endpoint)
        assert det.score == 0.85
        assert det.bbox == (4.0, 4.0, 7.0, 7.0)
        np.testing.assert_array_equal(det.mask, mask)

    def test_hash_conventions_agree(self, live_service):
        backend, _ = live_service
        from detect_service.backends import image_hash as service_hash

        rgb = _rgb(88)
        assert service_hash(rgb) == image_id(rgb)

    def test_fixture_files_interchangeable(self, live_service, tmp_path):
        # a fixture recorded by the service replays through the client's
        # fixture path directly
        backend, _ = live_service
        rgb = _rgb(99)
        backend.record(rgb, [detection_record("drawer", (1, 1, 9, 9), 0.66, _mask())])
        det = detect(rgb, "drawer", mode="fixture", fixture_dir=backend.fixture_dir)
        assert det.score == 0.66
