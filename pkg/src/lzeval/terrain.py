"""Gravity-aligned point cloud, per-cell plane fits and the footprint landing decision."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import CameraIntrinsics, GeometryError, unproject_disparities
from .stereo import DisparityMap

CELL_SIZE = 0.5
FOOTPRINT = 1.0
SLOPE_MAX = 15.0
ROUGH_MAX = 0.05
MIN_POINTS = 20
MAX_RANGE = 20.0
MIN_VALID_DISP = 0.5


class Verdict(str, Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"
    UNKNOWN = "unknown"


class Reason(str, Enum):
    SLOPE = "slope"
    ROUGHNESS = "roughness"
    INSUFFICIENT_DATA = "insufficient_data"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """(N, 3) points in the gravity-aligned frame, z up, meters."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point cloud coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class CellStats:
    normal: np.ndarray
    slope_deg: float
    roughness_m: float
    count: int
    mean_height: float


@dataclass(frozen=True, eq=False)
class GridMap:
    """Cells indexed ``[i, j]`` with row i along +y and column j along +x.

    Cell (i, j) spans x in [origin_x + j*cs, origin_x + (j+1)*cs) and likewise
    for y. Fit results live in dense arrays; ``count < min_points`` marks an
    empty cell whose stats are nan.
    """

    cell_size: float
    origin: tuple[float, float]
    nadir_cell: tuple[int, int]
    count: np.ndarray
    slope_deg: np.ndarray
    roughness_m: np.ndarray
    normal: np.ndarray
    mean_height: np.ndarray
    min_points: int = MIN_POINTS

    def __post_init__(self):
        if not self.cell_size > 0:
            raise GeometryError("cell_size must be positive")
        ni, nj = self.shape
        i, j = self.nadir_cell
        if not (0 <= i <= ni and 0 <= j <= nj):
            raise GeometryError("nadir cell outside the grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.count.shape

    def has_stats(self, i: int, j: int) -> bool:
        ni, nj = self.shape
        return 0 <= i < ni and 0 <= j < nj and self.count[i, j] >= self.min_points

    def cell(self, i: int, j: int) -> CellStats | None:
        if not self.has_stats(i, j):
            return None
        return CellStats(
            self.normal[i, j].copy(),
            float(self.slope_deg[i, j]),
            float(self.roughness_m[i, j]),
            int(self.count[i, j]),
            float(self.mean_height[i, j]),
        )


@dataclass(frozen=True, eq=False)
class LandingDecision:
    safe: bool
    footprint_cells: list
    per_cell_verdict: list
    reason: Reason
    grid_verdicts: np.ndarray = field(repr=False, default=None)
    slope_max: float = SLOPE_MAX
    rough_max: float = ROUGH_MAX


def gravity_frame(up) -> np.ndarray:
    """Rows are the gravity-aligned axes (e1, e2, up) in camera coordinates.

    The rotation first flips the camera about its x axis (a nadir camera then
    maps exactly to z-up) and then applies the minimal rotation from camera -z
    onto ``up``, so it is well conditioned for downward-looking cameras.
    """
    up = np.asarray(up, dtype=np.float64)
    n = np.linalg.norm(up)
    if not math.isfinite(n) or abs(n - 1.0) > 1e-6:
        raise GeometryError("up must be a unit vector")
    up = up / n
    a = np.array([0.0, 0.0, -1.0])
    c = float(a @ up)
    if c <= -1.0 + 1e-12:
        # up along +z: half turn about camera x keeps ex, flips ey
        rmin = np.diag([1.0, -1.0, -1.0])
    else:
        v = np.cross(a, up)
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        rmin = np.eye(3) + vx + vx @ vx / (1.0 + c)
    flip = np.diag([1.0, -1.0, -1.0])
    r = rmin @ flip  # camera axes -> gravity axes, columns
    return r.T


def build_point_cloud(
    d: DisparityMap,
    k: CameraIntrinsics,
    up,
    max_range: float = MAX_RANGE,
    min_valid_disp: float = MIN_VALID_DISP,
) -> PointCloud:
    """Unproject valid disparities and express them in the gravity-aligned frame."""
    if not max_range > 0:
        raise GeometryError("max_range must be positive")
    basis = gravity_frame(up)
    disp = d.d.astype(np.float64)
    mask = np.isfinite(disp) & (disp >= min_valid_disp) & (disp > 0)
    vv, uu = np.nonzero(mask)
    if len(vv) == 0:
        return PointCloud(np.zeros((0, 3)))
    cam = unproject_disparities(uu.astype(np.float64), vv.astype(np.float64), disp[vv, uu], k)
    cam = cam[cam[:, 2] <= max_range]
    return PointCloud(cam @ basis.T)


def _empty_grid(cell_size, min_points) -> GridMap:
    shape = (2, 2)
    return GridMap(
        cell_size,
        (-cell_size, -cell_size),
        (1, 1),
        np.zeros(shape, dtype=np.int64),
        np.full(shape, np.nan),
        np.full(shape, np.nan),
        np.full(shape + (3,), np.nan),
        np.full(shape, np.nan),
        min_points,
    )


def bin_and_fit(cloud: PointCloud, cell_size: float = CELL_SIZE, min_points: int = MIN_POINTS) -> GridMap:
    """Bin points into square cells and fit a least-squares plane per cell.

    The plane normal is the smallest-eigenvalue eigenvector of the cell's
    point covariance; roughness is the RMS orthogonal residual.
    """
    if not cell_size > 0:
        raise GeometryError("cell_size must be positive")
    if min_points < 3:
        raise GeometryError("min_points must be >= 3")
    pts = cloud.points
    if len(pts) == 0:
        return _empty_grid(cell_size, min_points)
    # grid always spans at least one cell on each side of the nadir corner
    lo = np.minimum(np.floor(pts[:, :2].min(axis=0) / cell_size), -1).astype(np.int64)
    hi = np.maximum(np.floor(pts[:, :2].max(axis=0) / cell_size) + 1, 1).astype(np.int64)
    origin = lo * cell_size
    nj, ni = (hi - lo).tolist()
    jj = np.clip(np.floor((pts[:, 0] - origin[0]) / cell_size).astype(np.int64), 0, nj - 1)
    ii = np.clip(np.floor((pts[:, 1] - origin[1]) / cell_size).astype(np.int64), 0, ni - 1)
    flat = ii * nj + jj
    ncell = ni * nj

    count = np.bincount(flat, minlength=ncell)
    sums = np.stack([np.bincount(flat, pts[:, a], minlength=ncell) for a in range(3)], axis=1)
    safe_count = np.maximum(count, 1)
    mean = sums / safe_count[:, None]
    centered = pts - mean[flat]
    cov = np.zeros((ncell, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(flat, centered[:, a] * centered[:, b], minlength=ncell) / safe_count
            cov[:, a, b] = s
            cov[:, b, a] = s

    filled = count >= min_points
    normal = np.full((ncell, 3), np.nan)
    slope = np.full(ncell, np.nan)
    rough = np.full(ncell, np.nan)
    height = np.full(ncell, np.nan)
    if filled.any():
        evals, evecs = np.linalg.eigh(cov[filled])
        nrm = evecs[:, :, 0]
        nrm = np.where(nrm[:, 2:3] < 0, -nrm, nrm)
        normal[filled] = nrm
        slope[filled] = np.degrees(np.arccos(np.clip(nrm[:, 2], -1.0, 1.0)))
        rough[filled] = np.sqrt(np.maximum(evals[:, 0], 0.0))
        height[filled] = mean[filled, 2]

    shape = (ni, nj)
    return GridMap(
        cell_size,
        (float(origin[0]), float(origin[1])),
        (int(-lo[1]), int(-lo[0])),
        count.reshape(shape),
        slope.reshape(shape),
        rough.reshape(shape),
        normal.reshape(shape + (3,)),
        height.reshape(shape),
        min_points,
    )


def cell_verdict(grid: GridMap, i: int, j: int, slope_max: float, rough_max: float) -> tuple[Verdict, Reason]:
    if not grid.has_stats(i, j):
        return Verdict.UNKNOWN, Reason.INSUFFICIENT_DATA
    # a rough cell's plane orientation is not meaningful, so roughness wins
    if grid.roughness_m[i, j] > rough_max:
        return Verdict.UNSAFE, Reason.ROUGHNESS
    if grid.slope_deg[i, j] > slope_max:
        return Verdict.UNSAFE, Reason.SLOPE
    return Verdict.SAFE, Reason.NONE


def footprint_cells(grid: GridMap, footprint: float = FOOTPRINT) -> list[tuple[int, int]]:
    n = math.ceil(footprint / grid.cell_size - 1e-9)
    i0 = grid.nadir_cell[0] - n // 2
    j0 = grid.nadir_cell[1] - n // 2
    return [(i, j) for i in range(i0, i0 + n) for j in range(j0, j0 + n)]


def classify_footprint(
    grid: GridMap,
    slope_max: float = SLOPE_MAX,
    rough_max: float = ROUGH_MAX,
    footprint: float = FOOTPRINT,
) -> LandingDecision:
    """Safe only if every cell of the footprint block under the nadir is safe."""
    if not (slope_max > 0 and rough_max > 0):
        raise GeometryError("thresholds must be positive")
    if footprint < grid.cell_size:
        raise GeometryError("footprint must be at least one cell wide")
    cells = footprint_cells(grid, footprint)
    verdicts = []
    reason = Reason.NONE
    for i, j in cells:
        v, why = cell_verdict(grid, i, j, slope_max, rough_max)
        verdicts.append(v)
        if v is not Verdict.SAFE and reason is Reason.NONE:
            reason = why
    ni, nj = grid.shape
    all_v = np.empty((ni, nj), dtype=object)
    for i in range(ni):
        for j in range(nj):
            all_v[i, j] = cell_verdict(grid, i, j, slope_max, rough_max)[0]
    return LandingDecision(
        safe=all(v is Verdict.SAFE for v in verdicts),
        footprint_cells=cells,
        per_cell_verdict=verdicts,
        reason=reason,
        grid_verdicts=all_v,
        slope_max=slope_max,
        rough_max=rough_max,
    )


GREEN = (0, 255, 0)
YELLOW = (255, 255, 0)
BLUE = (0, 0, 255)
RED = (255, 0, 0)
BLACK = (0, 0, 0)


def render_overlay(grid: GridMap, decision: LandingDecision, scale: int = 20) -> np.ndarray:
    """RGB uint8 image with one ``scale`` x ``scale`` block per cell, +y drawn upwards.

    Footprint: green safe, yellow otherwise. Elsewhere: blue safe, red unsafe,
    black without data.
    """
    ni, nj = grid.shape
    img = np.zeros((ni * scale, nj * scale, 3), dtype=np.uint8)
    foot = set(decision.footprint_cells)
    for i in range(ni):
        for j in range(nj):
            v = decision.grid_verdicts[i, j]
            if (i, j) in foot:
                color = GREEN if v is Verdict.SAFE else YELLOW
            elif v is Verdict.SAFE:
                color = BLUE
            elif v is Verdict.UNSAFE:
                color = RED
            else:
                color = BLACK
            row = ni - 1 - i
            img[row * scale : (row + 1) * scale, j * scale : (j + 1) * scale] = color
    return img


def grid_report(grid: GridMap, decision: LandingDecision) -> dict:
    cells = []
    ni, nj = grid.shape
    for i in range(ni):
        for j in range(nj):
            has = grid.has_stats(i, j)
            cells.append(
                {
                    "i": i,
                    "j": j,
                    "count": int(grid.count[i, j]),
                    "slope_deg": round(float(grid.slope_deg[i, j]), 6) if has else None,
                    "roughness_m": round(float(grid.roughness_m[i, j]), 6) if has else None,
                    "verdict": decision.grid_verdicts[i, j].value,
                }
            )
    return {
        "cell_size": grid.cell_size,
        "origin": list(grid.origin),
        "nadir_cell": list(grid.nadir_cell),
        "cells": cells,
        "decision": {"safe": decision.safe, "reason": decision.reason.value},
    }
