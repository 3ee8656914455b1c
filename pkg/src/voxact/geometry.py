"""Rigid-body poses, pinhole camera intrinsics, and rotation discretization.

Euler angles use the extrinsic X-Y-Z convention throughout: ``(roll, pitch,
yaw)`` in degrees, composed as ``Rz(yaw) @ Ry(pitch) @ Rx(roll)`` about fixed
world axes. Rotations are discretized into ``360 / bin_width`` bins per axis;
bins decode to their centers so the round-trip error is at most half a bin.

All functions are pure and operate in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FrameMismatchError

WORLD = "world"
CAMERA = "camera"
ROBOT_LEFT_BASE = "robot-left-base"
ROBOT_RIGHT_BASE = "robot-right-base"

FRAMES = frozenset({WORLD, CAMERA, ROBOT_LEFT_BASE, ROBOT_RIGHT_BASE})

_QUAT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Pose6D:
    """A position plus unit quaternion, tagged with the frame it lives in.

    ``frame`` is the frame the pose is expressed in. When the pose is used as
    a transform (e.g. camera extrinsics mapping camera points into the world),
    ``child_frame`` names the frame being mapped from; it may be left ``None``
    for poses that simply locate a body (gripper targets, object centers).
    """

    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    frame: str = WORLD
    child_frame: str | None = None

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        quat = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise ConfigError(f"quaternion norm {norm:.9f} not within {_QUAT_NORM_TOL} of 1")
        if self.frame not in FRAMES:
            raise ConfigError(f"unknown frame tag {self.frame!r}")
        if self.child_frame is not None and self.child_frame not in FRAMES:
            raise ConfigError(f"unknown child frame tag {self.child_frame!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat / norm)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform equivalent."""
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.position
        return T


def identity_pose(frame: str = WORLD) -> Pose6D:
    return Pose6D(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), frame=frame, child_frame=frame)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of two (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def compose(a: Pose6D, b: Pose6D) -> Pose6D:
    """Chain two transforms: ``a`` maps F1 -> F0 and ``b`` maps F2 -> F1.

    Returns the transform F2 -> F0 with a renormalized orientation. Raises
    FrameMismatchError when ``a`` declares a child frame that does not match
    the frame ``b`` is expressed in.
    """
    if a.child_frame is not None and b.frame != a.child_frame:
        raise FrameMismatchError(
            f"cannot compose: left side maps from {a.child_frame!r} "
            f"but right side is expressed in {b.frame!r}"
        )
    quat = quat_multiply(a.orientation, b.orientation)
    quat = quat / np.linalg.norm(quat)
    pos = a.rotation_matrix() @ b.position + a.position
    return Pose6D(pos, quat, frame=a.frame, child_frame=b.child_frame)


def inverse(p: Pose6D) -> Pose6D:
    q_inv = quat_conjugate(p.orientation)
    pos = -(quat_to_matrix(q_inv) @ p.position)
    frame = p.child_frame if p.child_frame is not None else p.frame
    return Pose6D(pos, q_inv, frame=frame, child_frame=p.frame)


def transform_point(p: Pose6D, pt: np.ndarray) -> np.ndarray:
    """Apply ``p`` as a rigid transform to a 3-vector: R @ pt + t."""
    pt = np.asarray(pt, dtype=np.float64)
    return p.rotation_matrix() @ pt + p.position


def transform_points(p: Pose6D, pts: np.ndarray) -> np.ndarray:
    """Vectorized transform of an (N, 3) array."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ p.rotation_matrix().T + p.position


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")


@dataclass(frozen=True)
class EulerBins:
    """Per-axis rotation bin indices at a fixed bin width in degrees."""

    bins: tuple[int, int, int]
    bin_width_deg: float = 5.0

    def __post_init__(self):
        n = num_rotation_bins(self.bin_width_deg)
        b = tuple(int(v) for v in self.bins)
        if any(v < 0 or v >= n for v in b):
            raise ConfigError(f"bin indices {b} out of range for {n} bins")
        object.__setattr__(self, "bins", b)

    @property
    def num_bins(self) -> int:
        return num_rotation_bins(self.bin_width_deg)


def num_rotation_bins(bin_width_deg: float) -> int:
    """Number of bins per axis; the bin width must divide 360."""
    n = 360.0 / bin_width_deg
    if abs(n - round(n)) > 1e-9:
        raise ConfigError(f"rotation bin width {bin_width_deg} does not divide 360")
    return int(round(n))


def euler_to_bins(euler_deg, bin_width_deg: float = 5.0) -> EulerBins:
    """Discretize (roll, pitch, yaw) degrees into floor-division bins.

    Each angle is first normalized to [0, 360).
    """
    n = num_rotation_bins(bin_width_deg)
    angles = np.mod(np.asarray(euler_deg, dtype=np.float64), 360.0)
    bins = np.floor(angles / bin_width_deg).astype(int)
    bins = np.minimum(bins, n - 1)  # guard against 359.999... rounding up
    return EulerBins(tuple(bins), bin_width_deg)


def bins_to_euler(b: EulerBins) -> np.ndarray:
    """Decode bins to their center angles: (bin + 0.5) * width."""
    return (np.asarray(b.bins, dtype=np.float64) + 0.5) * b.bin_width_deg


def euler_to_quat(euler_deg) -> np.ndarray:
    """Extrinsic X-Y-Z Euler angles (degrees) to a unit quaternion."""
    roll, pitch, yaw = np.deg2rad(np.asarray(euler_deg, dtype=np.float64))
    qx = np.array([np.cos(roll / 2), np.sin(roll / 2), 0.0, 0.0])
    qy = np.array([np.cos(pitch / 2), 0.0, np.sin(pitch / 2), 0.0])
    qz = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
    return quat_multiply(qz, quat_multiply(qy, qx))


def quat_to_euler(q: np.ndarray) -> np.ndarray:
    """Unit quaternion to extrinsic X-Y-Z Euler angles in degrees.

    At gimbal lock (|pitch| = 90 deg) the roll is set to zero by convention
    and the remaining rotation is absorbed into yaw.
    """
    R = quat_to_matrix(np.asarray(q, dtype=np.float64))
    sp = -R[2, 0]
    cp = np.sqrt(max(0.0, 1.0 - sp * sp))
    if cp > 1e-8:
        pitch = np.arctan2(sp, cp)
        roll = np.arctan2(R[2, 1], R[2, 2])
        yaw = np.arctan2(R[1, 0], R[0, 0])
    else:
        pitch = np.arctan2(sp, cp)
        roll = 0.0
        yaw = np.arctan2(-R[0, 1], R[1, 1])
    return np.degrees(np.array([roll, pitch, yaw]))


def yaw_quat(yaw_deg: float) -> np.ndarray:
    """Quaternion for a pure rotation about the vertical (z) axis."""
    return euler_to_quat([0.0, 0.0, yaw_deg])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to a unit quaternion (w, x, y, z)."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    return q / np.linalg.norm(q)
