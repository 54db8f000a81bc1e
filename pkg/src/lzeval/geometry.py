"""Images, pinhole stereo camera, quaternions and the disparity unprojection.

Camera frame: x right, y down, z forward along the optical axis.
Vectors are plain ``numpy`` arrays of shape ``(3,)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Rejected geometric input (bad disparity, invalid intrinsics, ...)."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel raster with intensities in [0, 1].

    ``data`` is stored as a read-only ``float64`` array of shape (height, width).
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise GeometryError(f"image must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise GeometryError("image intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "GrayImage":
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.data * 255.0), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy, self.baseline)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("camera intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0 or self.baseline <= 0:
            raise GeometryError("fx, fy and baseline must be positive")

    def check_image(self, width: int, height: int) -> None:
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside {width}x{height} image"
            )


@dataclass(frozen=True)
class UnitQuaternion:
    """Hamilton quaternion ``w + xi + yj + zk``, normalized on construction."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        v = (float(self.w), float(self.x), float(self.y), float(self.z))
        n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3])
        if not math.isfinite(n) or n == 0.0:
            raise GeometryError("quaternion must be finite and non-zero")
        for name, val in zip("wxyz", v):
            object.__setattr__(self, name, val / n)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "UnitQuaternion":
        w, x, y, z = (float(c) for c in a)
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "UnitQuaternion":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0.0:
            return cls.identity()
        axis = axis / n
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), *(axis * s))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        return 2.0 * math.atan2(math.sqrt(self.x**2 + self.y**2 + self.z**2), abs(self.w))

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        return quaternion_multiply(self, other)


def _hamilton(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quaternion_multiply(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Hamilton product ``a * b``, re-normalized."""
    return UnitQuaternion.from_array(_hamilton(a.as_array(), b.as_array()))


def rotate_vector(q: UnitQuaternion, v) -> np.ndarray:
    """Rotate ``v`` by ``q`` (computes q v q^-1)."""
    v = np.asarray(v, dtype=np.float64)
    qv = np.array([q.x, q.y, q.z])
    # v' = v + 2 w (qv x v) + 2 qv x (qv x v)
    t = 2.0 * np.cross(qv, v)
    return v + q.w * t + np.cross(qv, t)


def disparity_to_point(u: float, v: float, d: float, k: CameraIntrinsics) -> np.ndarray:
    """Unproject pixel (u, v) with disparity ``d`` to a camera-frame point in meters."""
    if not math.isfinite(d) or d <= 0.0:
        raise GeometryError(f"disparity must be positive and finite, got {d}")
    z = k.fx * k.baseline / d
    return np.array([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z])


def point_to_disparity(p, k: CameraIntrinsics) -> tuple[float, float, float]:
    """Project a camera-frame point to (u, v, d); inverse of :func:`disparity_to_point`."""
    x, y, z = (float(c) for c in p)
    if z <= 0.0:
        raise GeometryError("point must lie in front of the camera")
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy, k.fx * k.baseline / z


def unproject_disparities(u: np.ndarray, v: np.ndarray, d: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Vectorized :func:`disparity_to_point`; returns an (N, 3) array. ``d`` must be > 0."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0.0):
        raise GeometryError("disparities must be positive and finite")
    z = k.fx * k.baseline / d
    return np.column_stack(((np.asarray(u) - k.cx) * z / k.fx, (np.asarray(v) - k.cy) * z / k.fy, z))
