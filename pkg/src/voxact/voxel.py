"""Voxel grids: point-cloud fusion and object-centric cropping.

A grid keeps the voxel COUNT fixed while the crop shrinks the physical span,
so a crop fraction ``alpha`` multiplies the resolution (voxels per meter) by
``1/alpha``. Cells are half-open intervals indexed by floor division; a point
on the max face is out of bounds.

Fusion accumulates per-voxel point counts and mean colors with order-
independent sums, so results are deterministic under any partitioning of the
input into clouds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class GridSpec:
    """Physical placement of a voxel grid: min corner, extent, voxel counts."""

    origin: np.ndarray       # (3,) meters, world frame, min corner
    span: np.ndarray         # (3,) meters
    dims: tuple[int, int, int]
    alpha: float = 1.0       # fraction of the base workspace this grid spans

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        span = np.asarray(self.span, dtype=np.float64).reshape(3)
        dims = tuple(int(d) for d in self.dims)
        if np.any(span <= 0):
            raise ConfigError("grid span must be positive on every axis")
        if any(d <= 0 for d in dims):
            raise ConfigError("grid dims must be positive")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha {self.alpha} outside (0, 1]")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "span", span)
        object.__setattr__(self, "dims", dims)

    @property
    def voxel_size(self) -> np.ndarray:
        return self.span / np.asarray(self.dims, dtype=np.float64)

    @property
    def resolution(self) -> np.ndarray:
        """Voxels per meter, per axis."""
        return np.asarray(self.dims, dtype=np.float64) / self.span

    @property
    def center(self) -> np.ndarray:
        return self.origin + self.span / 2.0

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "span": self.span.tolist(),
            "dims": list(self.dims),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(np.array(d["origin"]), np.array(d["span"]), tuple(d["dims"]), d["alpha"])


@dataclass
class VoxelGrid:
    """Occupancy counts plus per-voxel mean color."""

    spec: GridSpec
    occupancy: np.ndarray  # (L, W, H) int64 point counts
    color: np.ndarray      # (L, W, H, 3) float32 mean RGB, zero where empty

    def __post_init__(self):
        if self.occupancy.shape != self.spec.dims:
            raise DataError(f"occupancy shape {self.occupancy.shape} != dims {self.spec.dims}")
        if self.color.shape != self.spec.dims + (3,):
            raise DataError(f"color shape {self.color.shape} != dims + (3,)")

    @property
    def total_points(self) -> int:
        return int(self.occupancy.sum())


def world_to_voxel(spec: GridSpec, pt) -> tuple[int, int, int] | None:
    """Map a world point to its voxel index, or None when out of bounds."""
    rel = (np.asarray(pt, dtype=np.float64) - spec.origin) / spec.voxel_size
    idx = np.floor(rel).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= np.asarray(spec.dims)):
        return None
    return tuple(int(i) for i in idx)


def voxel_to_world(spec: GridSpec, idx) -> np.ndarray:
    """Center of the voxel at ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= np.asarray(spec.dims)):
        raise ConfigError(f"voxel index {tuple(idx)} out of bounds for dims {spec.dims}")
    return spec.origin + (idx + 0.5) * spec.voxel_size


def crop_spec(base: GridSpec, centroid, alpha: float) -> GridSpec:
    """Shrink the workspace around ``centroid`` while keeping dims fixed.

    The crop is centered on the object and may extend past the base
    workspace; the resulting resolution is ``dims / (alpha * base.span)``
    voxels per meter.
    """
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha {alpha} outside (0, 1]")
    centroid = np.asarray(centroid, dtype=np.float64)
    if not np.all(np.isfinite(centroid)):
        raise ConfigError("crop centroid must be finite")
    span = alpha * base.span
    return GridSpec(centroid - span / 2.0, span, base.dims, alpha=alpha)


def voxelize(clouds, spec: GridSpec) -> VoxelGrid:
    """Fuse point clouds into occupancy counts and mean colors.

    Out-of-bounds points are dropped. Occupancy is exact regardless of point
    or cloud order; colors are order-independent sums divided once at the end.
    """
    dims = np.asarray(spec.dims)
    n_cells = int(np.prod(dims))
    occ_flat = np.zeros(n_cells, dtype=np.int64)
    colsum = np.zeros((n_cells, 3), dtype=np.float64)

    for cloud in clouds:
        pts = np.asarray(cloud.points, dtype=np.float64)
        cols = np.asarray(cloud.colors, dtype=np.float64)
        if pts.size == 0:
            continue
        idx = np.floor((pts - spec.origin) / spec.voxel_size).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < dims), axis=1)
        if not np.any(ok):
            continue
        idx = idx[ok]
        lin = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), spec.dims)
        occ_flat += np.bincount(lin, minlength=n_cells)
        for c in range(3):
            colsum[:, c] += np.bincount(lin, weights=cols[ok, c], minlength=n_cells)

    occupancy = occ_flat.reshape(spec.dims)
    color = np.zeros((n_cells, 3), dtype=np.float64)
    filled = occ_flat > 0
    color[filled] = colsum[filled] / occ_flat[filled, None]
    return VoxelGrid(spec, occupancy, color.reshape(spec.dims + (3,)).astype(np.float32))


def downsample(grid: VoxelGrid, factor: int) -> VoxelGrid:
    """Block-sum occupancy and occupancy-weighted mean color."""
    if factor < 1:
        raise ConfigError("downsample factor must be >= 1")
    L, W, H = grid.spec.dims
    if L % factor or W % factor or H % factor:
        raise ConfigError(f"factor {factor} does not divide dims {grid.spec.dims}")
    if factor == 1:
        return VoxelGrid(grid.spec, grid.occupancy.copy(), grid.color.copy())

    l, w, h = L // factor, W // factor, H // factor
    blocks = grid.occupancy.reshape(l, factor, w, factor, h, factor)
    occ = blocks.sum(axis=(1, 3, 5))
    weighted = grid.color.astype(np.float64) * grid.occupancy[..., None]
    colsum = weighted.reshape(l, factor, w, factor, h, factor, 3).sum(axis=(1, 3, 5))
    color = np.zeros_like(colsum)
    filled = occ > 0
    color[filled] = colsum[filled] / occ[filled, None]

    spec = GridSpec(grid.spec.origin, grid.spec.span, (l, w, h), alpha=grid.spec.alpha)
    return VoxelGrid(spec, occ, color.astype(np.float32))


# Debug dump: one JSON header line, then raw little-endian occupancy (int64)
# and color (float32) arrays in C order.

def save_grid(grid: VoxelGrid, path) -> None:
    header = json.dumps({"spec": grid.spec.to_dict(), "format": "voxgrid-v1"}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(grid.occupancy.astype("<i8").tobytes(order="C"))
        f.write(grid.color.astype("<f4").tobytes(order="C"))


def load_grid(path) -> VoxelGrid:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != "voxgrid-v1":
            raise DataError(f"unknown grid dump format {header.get('format')!r}")
        spec = GridSpec.from_dict(header["spec"])
        n = int(np.prod(spec.dims))
        occ = np.frombuffer(f.read(n * 8), dtype="<i8").reshape(spec.dims)
        color = np.frombuffer(f.read(n * 3 * 4), dtype="<f4").reshape(spec.dims + (3,))
    return VoxelGrid(spec, occ.copy(), color.copy())
