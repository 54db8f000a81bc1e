"""End-to-end monocular and stereo evaluation, the benchmark harness and the combined gate."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .config import PipelineConfig
from .geometry import GrayImage, UnitQuaternion, rotate_vector
from .homography import PlanarityState, mono_evaluate
from .imu import OrientationState, gravity_up, madgwick_update
from .stereo import (
    DisparityMap,
    StereoError,
    bad_pixel_rate,
    compute_disparity,
    compute_right_disparity,
    left_right_check,
)
from .terrain import (
    GridMap,
    LandingDecision,
    bin_and_fit,
    build_point_cloud,
    classify_footprint,
    grid_report,
    render_overlay,
)

log = logging.getLogger(__name__)

NADIR_UP = np.array([0.0, 0.0, -1.0])
MONO_LOG_COLUMNS = ("frame_index", "raw_error_px", "filtered_error_px", "valid_points", "safe")


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# monocular


@dataclass
class MonoResult:
    states: list[PlanarityState]

    @property
    def safe(self) -> bool:
        return self.states[-1].safe

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(MONO_LOG_COLUMNS)
        for i, s in enumerate(self.states, 1):
            w.writerow([i, f"{s.raw_error:.6f}", f"{s.filtered_error:.6f}", s.valid_points, int(s.safe)])
        return buf.getvalue()


def run_mono(frames, config: PipelineConfig | None = None) -> MonoResult:
    """Stream consecutive frame pairs through the planarity monitor."""
    config = config or PipelineConfig()
    frames = list(frames)
    if len(frames) < 2:
        raise PipelineError("monocular evaluation needs at least 2 frames")
    state = config.mono.initial_state()
    states = []
    for prev, nxt in zip(frames, frames[1:]):
        state = mono_evaluate(prev, nxt, state, config.mono)
        states.append(state)
    return MonoResult(states)


# ---------------------------------------------------------------------------
# stereo


def _mount_rotation(config: PipelineConfig) -> UnitQuaternion:
    c = config.imu
    qx = UnitQuaternion.from_axis_angle((1, 0, 0), math.radians(c.mount_roll_deg))
    qy = UnitQuaternion.from_axis_angle((0, 1, 0), math.radians(c.mount_pitch_deg))
    qz = UnitQuaternion.from_axis_angle((0, 0, 1), math.radians(c.mount_yaw_deg))
    return qz * qy * qx


def tilt_from_accel(accel) -> UnitQuaternion:
    """Body-to-world attitude (yaw zero) whose world-up reads as ``accel`` in the body frame."""
    a = np.asarray(accel, dtype=np.float64)
    a = a / np.linalg.norm(a)
    ez = np.array([0.0, 0.0, 1.0])
    c = float(a @ ez)
    if c < -1.0 + 1e-12:
        return UnitQuaternion.from_axis_angle((1, 0, 0), math.pi)
    axis = np.cross(a, ez)
    return UnitQuaternion.from_axis_angle(axis, math.atan2(np.linalg.norm(axis), c))


def estimate_up(samples, config: PipelineConfig | None = None) -> np.ndarray:
    """Camera-frame world-up from an IMU stream; a nadir camera is assumed if the stream is empty."""
    config = config or PipelineConfig()
    samples = list(samples)
    if not samples:
        log.warning("empty IMU stream: assuming a nadir camera (up = -z)")
        return NADIR_UP.copy()
    # start from the first accelerometer reading; the filter cannot leave an inverted stationary point
    state = OrientationState(q=tilt_from_accel(samples[0].accel), beta=config.imu.beta)
    for s in samples:
        state = madgwick_update(state, s)
    up_imu = gravity_up(state)
    # IMU readings are rotated into the camera frame by the mounting rotation
    up = rotate_vector(_mount_rotation(config), up_imu)
    return up / np.linalg.norm(up)


@dataclass
class StereoResult:
    decision: LandingDecision
    grid: GridMap
    disparity: DisparityMap
    up: np.ndarray
    overlay: np.ndarray = field(repr=False)

    @property
    def safe(self) -> bool:
        return self.decision.safe

    def report(self) -> dict:
        rep = grid_report(self.grid, self.decision)
        rep["up"] = [round(float(c), 9) for c in self.up]
        return rep


def run_stereo(left: GrayImage, right: GrayImage, imu_samples=(), config: PipelineConfig | None = None) -> StereoResult:
    config = config or PipelineConfig()
    if left.shape != right.shape:
        raise StereoError(f"stereo pair size mismatch: {left.shape} vs {right.shape}")
    config.camera.check_image(left.width, left.height)
    up = estimate_up(imu_samples, config)
    params = config.stereo.params
    disp = compute_disparity(left, right, params)
    if config.stereo.lr_check:
        disp = left_right_check(disp, compute_right_disparity(left, right, params), params.lr_tolerance)
    t = config.terrain
    cloud = build_point_cloud(disp, config.camera, up, t.max_range, t.min_valid_disp)
    grid = bin_and_fit(cloud, t.cell_size, t.min_points)
    decision = classify_footprint(grid, t.slope_max, t.rough_max, t.footprint)
    overlay = render_overlay(grid, decision, t.overlay_scale)
    return StereoResult(decision, grid, disp, up, overlay)


def write_stereo_outputs(result: StereoResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(result.report(), indent=2, sort_keys=True) + "\n")
    imageio.write_ppm(out / "overlay.ppm", result.overlay)
    imageio.write_pfm(out / "disparity.pfm", result.disparity.d)


# ---------------------------------------------------------------------------
# benchmark

BENCH_FILES = ("left.pgm", "right.pgm", "gt.pfm")
BENCH_COLUMNS = ("scene", "BM", "BM+LRC", "error")


def run_bench(dataset_dir, config: PipelineConfig | None = None, tau: float = 4.0, inject_gt: bool = False) -> list[dict]:
    """Bad-pixel rates of BM and BM+LR-check for each scene directory.

    A scene with missing or malformed files yields a row with an error message
    and empty rates; the run continues with the next scene.
    """
    config = config or PipelineConfig()
    root = Path(dataset_dir)
    if not root.is_dir():
        raise PipelineError(f"dataset directory {root} does not exist")
    scenes = sorted(p for p in root.iterdir() if p.is_dir())
    if not scenes:
        raise PipelineError(f"dataset directory {root} contains no scenes")
    params = config.stereo.params
    rows = []
    for scene in scenes:
        row = {"scene": scene.name, "BM": None, "BM+LRC": None, "error": ""}
        try:
            missing = [f for f in BENCH_FILES if not (scene / f).is_file()]
            if missing:
                raise PipelineError(f"missing {' '.join(missing)}")
            left = imageio.read_pgm(scene / "left.pgm")
            right = imageio.read_pgm(scene / "right.pgm")
            gt = DisparityMap(imageio.read_pfm(scene / "gt.pfm"), params_hash="ground-truth")
            if gt.shape != left.shape:
                raise PipelineError(f"ground truth {gt.shape} does not match images {left.shape}")
            if inject_gt:
                bm = lrc = gt
            else:
                bm = compute_disparity(left, right, params)
                lrc = left_right_check(bm, compute_right_disparity(left, right, params), params.lr_tolerance)
            row["BM"] = bad_pixel_rate(bm, gt, tau)
            row["BM+LRC"] = bad_pixel_rate(lrc, gt, tau)
        except (OSError, ValueError, PipelineError) as exc:
            row["error"] = str(exc).replace("\n", " ")
        rows.append(row)
    return rows


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        fmt = lambda v: "" if v is None else f"{v:.2f}"
        w.writerow([r["scene"], fmt(r["BM"]), fmt(r["BM+LRC"]), r["error"]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# combined gate


@dataclass(frozen=True)
class CombinedVerdict:
    mono_safe: bool | None
    stereo_safe: bool | None
    overall: bool
    reasons: tuple[str, ...]


def combine(mono_safe: bool | None, stereo_safe: bool | None) -> CombinedVerdict:
    """Conservative AND of the two gates; ``None`` means not evaluated."""
    if mono_safe is None and stereo_safe is None:
        raise PipelineError("at least one of the monocular and stereo verdicts must be evaluated")
    reasons = []
    if mono_safe is False:
        reasons.append("mono: non-planar motion")
    if stereo_safe is False:
        reasons.append("stereo: unsafe terrain")
    if mono_safe is None:
        reasons.append("mono: not evaluated")
    if stereo_safe is None:
        reasons.append("stereo: not evaluated")
    overall = mono_safe is not False and stereo_safe is not False
    return CombinedVerdict(mono_safe, stereo_safe, overall, tuple(reasons))
