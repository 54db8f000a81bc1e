"""IMU-only Madgwick orientation filter (gyro + accelerometer, no magnetometer)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import UnitQuaternion, rotate_vector

GRAVITY = 9.80665
TRUST_BAND = (0.5 * GRAVITY, 1.5 * GRAVITY)


class ImuError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImuSample:
    gyro: np.ndarray
    accel: np.ndarray
    dt: float

    def __post_init__(self):
        g = np.array(self.gyro, dtype=np.float64).reshape(3)
        a = np.array(self.accel, dtype=np.float64).reshape(3)
        object.__setattr__(self, "gyro", g)
        object.__setattr__(self, "accel", a)

    def check(self) -> None:
        if not all(map(math.isfinite, (*self.gyro.tolist(), *self.accel.tolist(), self.dt))):
            raise ImuError("non-finite IMU sample")
        if self.dt <= 0:
            raise ImuError(f"IMU dt must be positive, got {self.dt}")

    @property
    def accel_trusted(self) -> bool:
        n = math.sqrt(sum(a * a for a in self.accel.tolist()))
        return TRUST_BAND[0] < n < TRUST_BAND[1]


@dataclass(frozen=True)
class OrientationState:
    """Body-to-world orientation and the gradient step gain ``beta``."""

    q: UnitQuaternion = UnitQuaternion()
    beta: float = 0.1


def madgwick_update(state: OrientationState, s: ImuSample) -> OrientationState:
    s.check()
    q = state.q
    q0, q1, q2, q3 = q.w, q.x, q.y, q.z
    gx, gy, gz = s.gyro.tolist()
    # q_dot = 1/2 q (x) (0, gyro)
    d0 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz)
    d1 = 0.5 * (q0 * gx + q2 * gz - q3 * gy)
    d2 = 0.5 * (q0 * gy - q1 * gz + q3 * gx)
    d3 = 0.5 * (q0 * gz + q1 * gy - q2 * gx)

    if state.beta > 0 and s.accel_trusted:
        ax, ay, az = s.accel.tolist()
        an = math.sqrt(ax * ax + ay * ay + az * az)
        ax, ay, az = ax / an, ay / an, az / an
        # predicted world-up in the body frame minus measured specific-force direction
        f0 = 2.0 * (q1 * q3 - q0 * q2) - ax
        f1 = 2.0 * (q0 * q1 + q2 * q3) - ay
        f2 = 2.0 * (0.5 - q1 * q1 - q2 * q2) - az
        # J^T f
        s0 = -2.0 * q2 * f0 + 2.0 * q1 * f1
        s1 = 2.0 * q3 * f0 + 2.0 * q0 * f1 - 4.0 * q1 * f2
        s2 = -2.0 * q0 * f0 + 2.0 * q3 * f1 - 4.0 * q2 * f2
        s3 = 2.0 * q1 * f0 + 2.0 * q2 * f1
        gn = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3)
        if gn > 0:
            k = state.beta / gn
            d0 -= k * s0
            d1 -= k * s1
            d2 -= k * s2
            d3 -= k * s3

    dt = s.dt
    return replace(state, q=UnitQuaternion(q0 + d0 * dt, q1 + d1 * dt, q2 + d2 * dt, q3 + d3 * dt))


def gravity_up(state: OrientationState) -> np.ndarray:
    """World up direction expressed in the body (camera) frame."""
    up = rotate_vector(state.q.conjugate(), (0.0, 0.0, 1.0))
    return up / np.linalg.norm(up)


def level_error_deg(q: UnitQuaternion) -> float:
    """Angle between body z and world up, in degrees."""
    up = rotate_vector(q.conjugate(), (0.0, 0.0, 1.0))
    return math.degrees(math.acos(max(-1.0, min(1.0, up[2]))))


def run_filter(samples, state: OrientationState | None = None) -> OrientationState:
    state = state or OrientationState()
    for s in samples:
        state = madgwick_update(state, s)
    return state


IMU_COLUMNS = ("t_sec", "gx", "gy", "gz", "ax", "ay", "az")


def read_imu_csv(path) -> list[ImuSample]:
    """Load an IMU stream; the first row only establishes the time origin."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(c.strip() for c in reader.fieldnames) != IMU_COLUMNS:
            raise ImuError(f"IMU CSV header must be {','.join(IMU_COLUMNS)}")
        rows = [[float(r[c]) for c in IMU_COLUMNS] for r in reader]
    samples = []
    for prev, cur in zip(rows, rows[1:]):
        s = ImuSample(cur[1:4], cur[4:7], cur[0] - prev[0])
        s.check()
        samples.append(s)
    return samples


def write_imu_csv(path, samples, t0: float = 0.0) -> None:
    """Write samples with a leading row at ``t0`` carrying the first sample's readings."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(IMU_COLUMNS)
        if not samples:
            return
        t = t0
        first = samples[0]
        w.writerow([repr(t), *map(repr, first.gyro.tolist()), *map(repr, first.accel.tolist())])
        for s in samples:
            t += s.dt
            w.writerow([repr(t), *map(repr, s.gyro.tolist()), *map(repr, s.accel.tolist())])
