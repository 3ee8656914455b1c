"""Voxel grid tests: indexing, cropping arithmetic, fusion conservation."""

import numpy as np
import pytest

from voxact.errors import ConfigError
from voxact.rgbd import PointCloud
from voxact.voxel import (
    GridSpec,
    crop_spec,
    downsample,
    load_grid,
    save_grid,
    voxel_to_world,
    voxelize,
    world_to_voxel,
)

BASE = GridSpec(origin=np.zeros(3), span=np.full(3, 2.0), dims=(50, 50, 50))


def _cloud(points, colors=None):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if colors is None:
        colors = np.zeros_like(points)
    return PointCloud(points, np.asarray(colors, dtype=np.float64).reshape(-1, 3))


class TestIndexing:
    def test_interior_point(self):
        # voxel size 0.04, floor(0.5 / 0.04) = 12
        assert world_to_voxel(BASE, [0.5, 0.5, 0.5]) == (12, 12, 12)

    def test_min_corner(self):
        assert world_to_voxel(BASE, [0, 0, 0]) == (0, 0, 0)

    def test_max_face_is_out_of_bounds(self):
        assert world_to_voxel(BASE, [2.0, 0, 0]) is None

    def test_voxel_center(self):
        np.testing.assert_allclose(voxel_to_world(BASE, (0, 0, 0)), [0.02, 0.02, 0.02])
        np.testing.assert_allclose(voxel_to_world(BASE, (49, 49, 49)), [1.98, 1.98, 1.98])

    def test_center_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            idx = tuple(rng.integers(0, 50, size=3))
            assert world_to_voxel(BASE, voxel_to_world(BASE, idx)) == idx

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ConfigError):
            voxel_to_world(BASE, (50, 0, 0))


class TestCrop:
    def test_alpha_03(self):
        spec = crop_spec(BASE, [1.0, 1.0, 0.5], 0.3)
        np.testing.assert_allclose(spec.origin, [0.7, 0.7, 0.2])
        np.testing.assert_allclose(spec.span, 0.6)
        np.testing.assert_allclose(spec.voxel_size, 0.012)
        np.testing.assert_allclose(spec.resolution, 50 / 0.6)

    def test_alpha_1_at_center_is_identity(self):
        spec = crop_spec(BASE, BASE.center, 1.0)
        np.testing.assert_allclose(spec.origin, BASE.origin, atol=1e-12)
        np.testing.assert_allclose(spec.span, BASE.span)
        assert spec.dims == BASE.dims

    def test_alpha_04(self):
        spec = crop_spec(BASE, [1, 1, 1], 0.4)
        np.testing.assert_allclose(spec.span, 0.8)
        np.testing.assert_allclose(spec.voxel_size, 0.016)

    def test_bad_alpha(self):
        for alpha in (0.0, -0.1, 1.5):
            with pytest.raises(ConfigError):
                crop_spec(BASE, [1, 1, 1], alpha)

    def test_resolution_identity(self):
        # dims / crop.span == (1/alpha) * dims / base.span on every axis
        rng = np.random.default_rng(1)
        for _ in range(100):
            alpha = float(rng.uniform(0.05, 1.0))
            c = rng.uniform(-1, 3, size=3)
            spec = crop_spec(BASE, c, alpha)
            np.testing.assert_allclose(spec.resolution, BASE.resolution / alpha, rtol=1e-12)

    def test_containment(self):
        # points within (alpha*span)/2 - voxel_size of the centroid stay in bounds
        rng = np.random.default_rng(2)
        for _ in range(200):
            alpha = float(rng.uniform(0.1, 1.0))
            c = rng.uniform(0.5, 1.5, size=3)
            spec = crop_spec(BASE, c, alpha)
            margin = alpha * BASE.span / 2 - spec.voxel_size
            pt = c + rng.uniform(-1, 1, size=3) * margin
            assert world_to_voxel(spec, pt) is not None


class TestVoxelize:
    def test_empty(self):
        grid = voxelize([_cloud(np.empty((0, 3)))], BASE)
        assert grid.total_points == 0
        assert not grid.color.any()

    def test_single_point(self):
        grid = voxelize([_cloud([[0.02, 0.02, 0.02]], [[1, 0, 0]])], BASE)
        assert grid.occupancy[0, 0, 0] == 1
        assert grid.total_points == 1
        np.testing.assert_allclose(grid.color[0, 0, 0], [1, 0, 0])

    def test_mean_color(self):
        grid = voxelize([_cloud([[0.02, 0.02, 0.02], [0.03, 0.02, 0.02]],
                                [[1, 0, 0], [0, 1, 0]])], BASE)
        assert grid.occupancy[0, 0, 0] == 2
        np.testing.assert_allclose(grid.color[0, 0, 0], [0.5, 0.5, 0], atol=1e-6)

    def test_conservation_under_partition(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-0.5, 2.5, size=(5000, 3))  # some out of bounds
        cols = rng.uniform(0, 1, size=(5000, 3))
        whole = voxelize([_cloud(pts, cols)], BASE)
        in_bounds = sum(1 for p in pts if world_to_voxel(BASE, p) is not None)
        assert whole.total_points == in_bounds

        # any split into clouds gives identical occupancy and colors within 1e-6
        parts = [
            _cloud(pts[:1234], cols[:1234]),
            _cloud(pts[1234:4000], cols[1234:4000]),
            _cloud(pts[4000:], cols[4000:]),
        ]
        split = voxelize(parts, BASE)
        np.testing.assert_array_equal(split.occupancy, whole.occupancy)
        np.testing.assert_allclose(split.color, whole.color, atol=1e-6)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(0.1, 1.9, size=(2000, 3))
        cols = rng.uniform(0, 1, size=(2000, 3))
        t = np.array([3, -5, 2]) * BASE.voxel_size
        shifted_spec = GridSpec(BASE.origin + t, BASE.span, BASE.dims)
        a = voxelize([_cloud(pts, cols)], BASE)
        b = voxelize([_cloud(pts + t, cols)], shifted_spec)
        np.testing.assert_array_equal(a.occupancy, b.occupancy)

    def test_empty_voxels_have_zero_color(self):
        rng = np.random.default_rng(5)
        grid = voxelize([_cloud(rng.uniform(0, 2, (100, 3)), rng.uniform(0, 1, (100, 3)))], BASE)
        assert not grid.color[grid.occupancy == 0].any()


class TestDownsample:
    def test_factor_one_is_identity(self):
        rng = np.random.default_rng(6)
        grid = voxelize([_cloud(rng.uniform(0, 2, (500, 3)), rng.uniform(0, 1, (500, 3)))], BASE)
        out = downsample(grid, 1)
        np.testing.assert_array_equal(out.occupancy, grid.occupancy)
        np.testing.assert_array_equal(out.color, grid.color)

    def test_block_sum(self):
        spec = GridSpec(np.zeros(3), np.full(3, 1.0), (4, 4, 4))
        # one point per voxel -> 2x2x2 blocks of occupancy 1 collapse to 8
        centers = np.stack(np.meshgrid(*[np.arange(4)] * 3, indexing="ij"), -1)
        pts = (centers.reshape(-1, 3) + 0.5) * 0.25
        grid = voxelize([_cloud(pts, np.ones((64, 3)))], spec)
        out = downsample(grid, 2)
        assert out.spec.dims == (2, 2, 2)
        np.testing.assert_array_equal(out.occupancy, np.full((2, 2, 2), 8))
        np.testing.assert_allclose(out.color, 1.0)

    def test_empty_stays_empty(self):
        grid = voxelize([], BASE)
        out = downsample(grid, 5)
        assert out.total_points == 0

    def test_nondivisible_factor(self):
        grid = voxelize([], BASE)
        with pytest.raises(ConfigError):
            downsample(grid, 3)


def test_grid_dump_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    grid = voxelize([_cloud(rng.uniform(0, 2, (800, 3)), rng.uniform(0, 1, (800, 3)))], BASE)
    path = tmp_path / "grid.bin"
    save_grid(grid, path)
    back = load_grid(path)
    np.testing.assert_array_equal(back.occupancy, grid.occupancy)
    np.testing.assert_array_equal(back.color, grid.color)
    np.testing.assert_allclose(back.spec.origin, grid.spec.origin)
