"""Synthetic stereo pairs, descent sequences and IMU streams with exact ground truth.

World frame: z up, ground plane z = 0, camera centre at (0, 0, depth_m) so the
nadir is the world origin. A level camera looks straight down with image x
along world +x and image y along world -y; ``tilt_deg`` pitches it about its
own x axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from . import terrain
from .flow import FlowField, sample_grid
from .geometry import CameraIntrinsics, GrayImage, UnitQuaternion, rotate_vector
from .homography import Homography
from .imu import GRAVITY, ImuSample
from .stereo import DisparityMap


class SceneError(ValueError):
    pass


class SceneKind(str, Enum):
    FLAT_PLANE = "flat_plane"
    RAMP = "ramp"
    BOX_ON_PLANE = "box_on_plane"
    STEP = "step"
    RIPPLE_SURFACE = "ripple_surface"
    TEXTURELESS = "textureless"


PLANAR_KINDS = {SceneKind.FLAT_PLANE, SceneKind.RAMP, SceneKind.RIPPLE_SURFACE, SceneKind.TEXTURELESS}

DEFAULT_CAMERA = CameraIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0, baseline=0.12)

# texture lattice spacing of the finest octave, meters
TEXTURE_CELL = 0.03
_TEXTURE_OCTAVES = (1.0, 0.8, 0.6, 0.4)
_LATTICE = 512
# per-frame phase advance of the ripple wave
RIPPLE_PHASE_STEP = math.pi / 2


@dataclass(frozen=True)
class SceneSpec:
    kind: SceneKind = SceneKind.FLAT_PLANE
    depth_m: float = 2.0
    ramp_deg: float = 10.0
    box_w: float = 0.3
    box_d: float = 0.4
    box_h: float = 0.3
    box_x: float = 0.0
    box_y: float = 0.0
    step_h: float = 0.2
    step_x: float = 0.25
    ripple_amp_px: float = 2.0
    ripple_wavelength_px: float = 64.0
    tilt_deg: float = 0.0
    contrast: float = 1.0
    seed: int = 0
    camera: CameraIntrinsics = DEFAULT_CAMERA
    width: int = 640
    height: int = 480

    def __post_init__(self):
        object.__setattr__(self, "kind", SceneKind(self.kind))
        positive = ("depth_m", "box_w", "box_d", "box_h", "step_h", "ripple_wavelength_px")
        for name in positive:
            if not getattr(self, name) > 0:
                raise SceneError(f"{name} must be positive")
        if self.ripple_amp_px < 0 or self.contrast < 0:
            raise SceneError("ripple_amp_px and contrast must be non-negative")
        if self.kind is SceneKind.RAMP and not 0.0 < self.ramp_deg <= 45.0:
            raise SceneError("ramp_deg must lie in (0, 45]")
        if self.width < 16 or self.height < 16:
            raise SceneError("image too small")
        self.camera.check_image(self.width, self.height)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.width, self.height


@dataclass(frozen=True, eq=False)
class GroundTruth:
    disparity: DisparityMap | None = None
    flow: FlowField | None = None
    homography: Homography | None = None
    cell_slopes: np.ndarray | None = None
    cell_origin: tuple[float, float] = (0.0, 0.0)
    safe_label: bool = True


# ---------------------------------------------------------------------------
# texture


@lru_cache(maxsize=8)
def _lattices(seed: int) -> tuple[np.ndarray, ...]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in _TEXTURE_OCTAVES:
        lat = rng.uniform(-1.0, 1.0, size=(_LATTICE, _LATTICE))
        out.append(spline_filter(lat, order=3, mode="grid-wrap"))
    return tuple(out)


def texture(s: np.ndarray, t: np.ndarray, seed: int, contrast: float = 1.0) -> np.ndarray:
    """Band-limited value noise at surface coordinates (meters), mapped into [0, 1]."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    acc = np.zeros(s.shape)
    for k, (weight, lat) in enumerate(zip(_TEXTURE_OCTAVES, _lattices(seed))):
        cell = TEXTURE_CELL * 2**k
        coords = np.stack((t.ravel() / cell, s.ravel() / cell))
        acc += weight * map_coordinates(lat, coords, order=3, mode="grid-wrap", prefilter=False).reshape(s.shape)
    return np.clip(0.5 + 0.28 * contrast * acc, 0.0, 1.0)


def texture_image(width: int, height: int, seed: int = 0, pixel_m: float = 0.005) -> GrayImage:
    """Fronto-parallel textured image, ``pixel_m`` meters of texture per pixel."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return GrayImage(texture(xx * pixel_m, yy * pixel_m, seed))


def shifted_pair(width: int, height: int, shift: int, seed: int = 0) -> tuple[GrayImage, GrayImage]:
    """Textured pair with ``right(u) = left(u + shift)`` (an exact integer disparity)."""
    wide = texture_image(width + shift, height, seed).data
    return GrayImage(wide[:, :width]), GrayImage(wide[:, shift : shift + width])


# ---------------------------------------------------------------------------
# geometry and ray casting


def camera_pose(spec: SceneSpec, height: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Camera-to-world rotation and camera centre."""
    a = math.radians(spec.tilt_deg)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, math.cos(a), -math.sin(a)], [0.0, math.sin(a), math.cos(a)]])
    r = np.diag([1.0, -1.0, -1.0]) @ rx
    return r, np.array([0.0, 0.0, spec.depth_m if height is None else height])


def camera_orientation(spec: SceneSpec) -> UnitQuaternion:
    """Body(camera)-to-world quaternion of the simulated camera."""
    r, _ = camera_pose(spec)
    return _quat_from_matrix(r)


def _quat_from_matrix(m: np.ndarray) -> UnitQuaternion:
    tr = np.trace(m)
    if tr > 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        return UnitQuaternion(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    i = int(np.argmax(np.diag(m)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = 2.0 * math.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0))
    q = np.zeros(4)
    q[0] = (m[k, j] - m[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (m[j, i] + m[i, j]) / s
    q[1 + k] = (m[k, i] + m[i, k]) / s
    return UnitQuaternion.from_array(q)


def _hit_plane(o, d, a, c, xmin=-np.inf, xmax=np.inf):
    """Ray parameter for z = a*x + c restricted to x in [xmin, xmax); inf if missed."""
    denom = d[:, 2] - a * d[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (a * o[:, 0] + c - o[:, 2]) / denom
    x = o[:, 0] + t * d[:, 0]
    ok = np.isfinite(t) & (t > 1e-9) & (x >= xmin) & (x < xmax)
    return np.where(ok, t, np.inf)


def _hit_box(o, d, lo, hi):
    """Slab test against an axis-aligned box; entry parameter or inf."""
    tmin = np.full(len(o), -np.inf)
    tmax = np.full(len(o), np.inf)
    for k in range(3):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[k] - o[:, k]) / d[:, k]
            t2 = (hi[k] - o[:, k]) / d[:, k]
        par = d[:, k] == 0
        inside = (o[:, k] >= lo[k]) & (o[:, k] <= hi[k])
        t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
        t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
        tmin = np.maximum(tmin, np.minimum(t1, t2))
        tmax = np.minimum(tmax, np.maximum(t1, t2))
    ok = (tmax >= tmin) & (tmin > 1e-9)
    return np.where(ok, tmin, np.inf)


def cast(spec: SceneSpec, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Nearest positive ray parameter against the scene surfaces (inf if none)."""
    o = np.broadcast_to(o, d.shape)
    kind = spec.kind
    if kind is SceneKind.RAMP:
        return _hit_plane(o, d, math.tan(math.radians(spec.ramp_deg)), 0.0)
    if kind is SceneKind.BOX_ON_PLANE:
        lo = np.array([spec.box_x - spec.box_w / 2, spec.box_y - spec.box_d / 2, 0.0])
        hi = np.array([spec.box_x + spec.box_w / 2, spec.box_y + spec.box_d / 2, spec.box_h])
        return np.minimum(_hit_plane(o, d, 0.0, 0.0), _hit_box(o, d, lo, hi))
    if kind is SceneKind.STEP:
        ground = _hit_plane(o, d, 0.0, 0.0, xmax=spec.step_x)
        top = _hit_plane(o, d, 0.0, spec.step_h, xmin=spec.step_x)
        big = 1e6
        riser = _hit_box(o, d, np.array([spec.step_x, -big, 0.0]), np.array([big, big, spec.step_h]))
        return np.minimum(np.minimum(ground, top), riser)
    return _hit_plane(o, d, 0.0, 0.0)


def surface_height(spec: SceneSpec, x, y) -> np.ndarray:
    """Height of the topmost surface above (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.zeros(np.broadcast(x, y).shape)
    if spec.kind is SceneKind.RAMP:
        z = math.tan(math.radians(spec.ramp_deg)) * x + 0 * y
    elif spec.kind is SceneKind.BOX_ON_PLANE:
        inside = (np.abs(x - spec.box_x) <= spec.box_w / 2) & (np.abs(y - spec.box_y) <= spec.box_d / 2)
        z = np.where(inside, spec.box_h, 0.0)
    elif spec.kind is SceneKind.STEP:
        z = np.where(x >= spec.step_x, spec.step_h, 0.0) + 0 * y
    return z


def _pixel_rays(spec: SceneSpec, r: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    k = spec.camera
    dc = np.stack(((px - k.cx) / k.fx, (py - k.cy) / k.fy, np.ones_like(px)), axis=-1)
    return dc.reshape(-1, 3) @ r.T


def _shade(spec: SceneSpec, pts: np.ndarray) -> np.ndarray:
    if spec.kind is SceneKind.TEXTURELESS:
        return np.full(len(pts), 0.5)
    # oblique projection keeps vertical faces textured
    s = pts[:, 0] + 0.37 * pts[:, 2]
    t = pts[:, 1] + 0.61 * pts[:, 2]
    return texture(s, t, spec.seed, spec.contrast)


def _render_view(spec, r, centre, px, py):
    d = _pixel_rays(spec, r, px, py)
    t = cast(spec, centre, d)
    if not np.all(np.isfinite(t)):
        raise SceneError("some pixels see no surface; the surface must lie in front of the camera")
    pts = centre + t[:, None] * d
    return pts, t


def _grid(spec):
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    return xx, yy


def _check_clearance(spec: SceneSpec, cam_height: float) -> None:
    top = {SceneKind.BOX_ON_PLANE: spec.box_h, SceneKind.STEP: spec.step_h}.get(spec.kind, 0.0)
    if cam_height <= top + 0.05:
        raise SceneError(f"camera at {cam_height:.3f} m is not above the surface (top {top:.3f} m)")


def safe_label(spec: SceneSpec, slope_max=terrain.SLOPE_MAX, rough_max=terrain.ROUGH_MAX, footprint=terrain.FOOTPRINT) -> bool:
    """Analytic landing label for the footprint square centred on the nadir."""
    half = footprint / 2
    kind = spec.kind
    if kind in (SceneKind.TEXTURELESS, SceneKind.RIPPLE_SURFACE):
        return False
    if kind is SceneKind.RAMP:
        return spec.ramp_deg <= slope_max
    if kind is SceneKind.BOX_ON_PLANE:
        overlaps = abs(spec.box_x) < half + spec.box_w / 2 and abs(spec.box_y) < half + spec.box_d / 2
        return not (overlaps and spec.box_h > rough_max)
    if kind is SceneKind.STEP:
        return not (abs(spec.step_x) < half and spec.step_h > rough_max)
    return True


def _cell_slopes(spec: SceneSpec, pts: np.ndarray, cell_size: float):
    lo = np.minimum(np.floor(pts[:, :2].min(axis=0) / cell_size), -1)
    hi = np.maximum(np.floor(pts[:, :2].max(axis=0) / cell_size) + 1, 1)
    nj, ni = (hi - lo).astype(int)
    origin = lo * cell_size
    slope = spec.ramp_deg if spec.kind is SceneKind.RAMP else 0.0
    return np.full((ni, nj), slope), (float(origin[0]), float(origin[1]))


def render_stereo(spec: SceneSpec, cell_size: float = terrain.CELL_SIZE) -> tuple[GrayImage, GrayImage, GroundTruth]:
    """Ray-cast a rectified pair and the exact left-referenced disparity.

    Left pixels whose surface point is hidden from (or outside) the right view
    are invalid in the ground truth.
    """
    _check_clearance(spec, spec.depth_m)
    k = spec.camera
    r, c_left = camera_pose(spec)
    c_right = c_left + r @ np.array([k.baseline, 0.0, 0.0])
    xx, yy = _grid(spec)
    pts_l, depth = _render_view(spec, r, c_left, xx.ravel(), yy.ravel())
    pts_r, _ = _render_view(spec, r, c_right, xx.ravel(), yy.ravel())
    shape = (spec.height, spec.width)
    left = _shade(spec, pts_l).reshape(shape)
    right = _shade(spec, pts_r).reshape(shape)

    disp = k.fx * k.baseline / depth
    # shadow ray from the right centre: anything strictly closer occludes
    to_pt = pts_l - c_right
    t_hit = cast(spec, c_right, to_pt)
    visible = t_hit >= 1.0 - 1e-7
    visible &= (xx.ravel() - disp) >= 0
    gt_d = np.where(visible, disp, np.inf).reshape(shape)
    slopes, origin = _cell_slopes(spec, pts_l, cell_size)
    gt = GroundTruth(
        disparity=DisparityMap(gt_d, 0.0, float(np.max(disp)), "ground-truth"),
        cell_slopes=slopes,
        cell_origin=origin,
        safe_label=safe_label(spec),
    )
    return GrayImage(left), GrayImage(right), gt


# ---------------------------------------------------------------------------
# monocular descent


def ripple_offset(spec: SceneSpec, frame: int, x, y, phase_step: float = RIPPLE_PHASE_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Image-space displacement of the travelling ripple at ``frame``."""
    if spec.kind is not SceneKind.RIPPLE_SURFACE or spec.ripple_amp_px == 0:
        return np.zeros(np.shape(x)), np.zeros(np.shape(y))
    k = 2 * math.pi / spec.ripple_wavelength_px
    ph = frame * phase_step
    a = spec.ripple_amp_px
    return a * np.sin(k * np.asarray(y) + ph), a * np.sin(k * np.asarray(x) + ph)


def _project(spec, r, centre, pts):
    k = spec.camera
    cam = (pts - centre) @ r  # world -> camera: R^T (X - C)
    return np.column_stack((k.fx * cam[:, 0] / cam[:, 2] + k.cx, k.fy * cam[:, 1] / cam[:, 2] + k.cy))


def project_world(spec: SceneSpec, pts, height: float | None = None) -> np.ndarray:
    """Pixel coordinates of world points in the (left) camera."""
    r, c = camera_pose(spec, height)
    return _project(spec, r, c, np.asarray(pts, dtype=np.float64).reshape(-1, 3))


def plane_homography(spec: SceneSpec, h_prev: float, h_next: float) -> Homography:
    """Homography taking next-frame pixels to previous-frame pixels for the ground plane."""
    if spec.kind not in PLANAR_KINDS:
        raise SceneError(f"{spec.kind.value} is not planar")
    k = spec.camera
    kk = np.array([[k.fx, 0, k.cx], [0, k.fy, k.cy], [0, 0, 1.0]])
    r, c0 = camera_pose(spec, h_prev)
    _, c1 = camera_pose(spec, h_next)
    a = math.tan(math.radians(spec.ramp_deg)) if spec.kind is SceneKind.RAMP else 0.0
    n = np.array([-a, 0.0, 1.0])
    dist = 0.0 - n @ c1
    m = kk @ r.T @ (r + np.outer(c1 - c0, n @ r) / dist) @ np.linalg.inv(kk)
    return Homography(m)


def render_mono_sequence(
    spec: SceneSpec,
    n_frames: int,
    motion: float = 0.5,
    frame_dt: float = 0.1,
    stride: int = 20,
    margin: int = 20,
    phase_step: float = RIPPLE_PHASE_STEP,
) -> tuple[list[GrayImage], list[GroundTruth]]:
    """Frames of a vertical descent at ``motion`` m/s plus per-step ground truth.

    Ground-truth flow is given on the ``stride``/``margin`` sample grid.
    """
    if n_frames < 2:
        raise SceneError("need at least 2 frames")
    heights = [spec.depth_m - motion * frame_dt * i for i in range(n_frames)]
    _check_clearance(spec, min(heights))
    r, _ = camera_pose(spec)
    xx, yy = _grid(spec)
    shape = (spec.height, spec.width)
    frames = []
    for i, h in enumerate(heights):
        ox, oy = ripple_offset(spec, i, xx, yy, phase_step)
        pts, _ = _render_view(spec, r, np.array([0.0, 0.0, h]), (xx + ox).ravel(), (yy + oy).ravel())
        frames.append(GrayImage(_shade(spec, pts).reshape(shape)))

    samples = sample_grid(spec.image_size, stride, margin)
    label = safe_label(spec)
    truths = []
    for i in range(n_frames - 1):
        c0 = np.array([0.0, 0.0, heights[i]])
        c1 = np.array([0.0, 0.0, heights[i + 1]])
        ox, oy = ripple_offset(spec, i, samples[:, 0], samples[:, 1], phase_step)
        src = samples + np.column_stack((ox, oy))
        pts, _ = _render_view(spec, r, c0, src[:, 0], src[:, 1])
        target = _project(spec, r, c1, pts)
        # solve p' + ripple_{i+1}(p') = target by fixed point (contraction: |grad ripple| < 1)
        p1 = target.copy()
        for _ in range(200):
            rx, ry = ripple_offset(spec, i + 1, p1[:, 0], p1[:, 1], phase_step)
            nxt = target - np.column_stack((rx, ry))
            if np.max(np.abs(nxt - p1)) < 1e-12:
                p1 = nxt
                break
            p1 = nxt
        q = p1 - samples
        w, hgt = spec.image_size
        inside = (p1[:, 0] >= 0) & (p1[:, 1] >= 0) & (p1[:, 0] <= w - 1) & (p1[:, 1] <= hgt - 1)
        flow = FlowField(samples, q, inside, spec.image_size)
        homog = None
        if spec.kind in PLANAR_KINDS and spec.kind is not SceneKind.RIPPLE_SURFACE:
            homog = plane_homography(spec, heights[i], heights[i + 1])
        truths.append(GroundTruth(flow=flow, homography=homog, safe_label=label))
    return frames, truths


# ---------------------------------------------------------------------------
# IMU


def _quat_log(q: UnitQuaternion) -> np.ndarray:
    """Rotation vector of ``q`` (axis * angle), shortest path."""
    v = np.array([q.x, q.y, q.z])
    w = q.w
    if w < 0:
        v, w = -v, -w
    n = np.linalg.norm(v)
    if n < 1e-15:
        return 2.0 * v
    return 2.0 * math.atan2(n, w) * v / n


def generate_imu(
    orientation_truth,
    rate: float,
    gyro_noise: float = 0.0,
    accel_noise: float = 0.0,
    seed: int = 0,
) -> list[ImuSample]:
    """IMU samples between consecutive body-to-world poses sampled at ``rate`` Hz.

    Sample i carries the constant body rate from pose i to pose i+1 and the
    specific force (world up, ``+g``) seen at pose i+1.
    """
    traj = list(orientation_truth)
    if rate <= 0:
        raise SceneError("rate must be positive")
    if len(traj) < 2:
        raise SceneError("trajectory needs at least 2 poses")
    dt = 1.0 / rate
    rng = np.random.default_rng(seed)
    out = []
    for a, b in zip(traj, traj[1:]):
        gyro = _quat_log(a.conjugate() * b) / dt
        accel = rotate_vector(b.conjugate(), (0.0, 0.0, GRAVITY))
        if gyro_noise > 0:
            gyro = gyro + rng.normal(0.0, gyro_noise, 3)
        if accel_noise > 0:
            accel = accel + rng.normal(0.0, accel_noise, 3)
        out.append(ImuSample(gyro, accel, dt))
    return out


def static_trajectory(q: UnitQuaternion, seconds: float, rate: float) -> list[UnitQuaternion]:
    return [q] * (int(round(seconds * rate)) + 1)


# ---------------------------------------------------------------------------
# scene spec file

_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "baseline")


def scene_to_text(spec: SceneSpec) -> str:
    lines = []
    for f in fields(SceneSpec):
        if f.name == "camera":
            for key in _CAMERA_KEYS:
                lines.append(f"{key} = {getattr(spec.camera, key)!r}")
            continue
        val = getattr(spec, f.name)
        if f.name == "kind":
            val = val.value
        elif f.name == "seed":
            lines.append(f"seed = {val}")
            continue
        lines.append(f"{f.name} = {val!r}" if not isinstance(val, str) else f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def parse_scene(text: str) -> SceneSpec:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    names = {f.name: f for f in fields(SceneSpec) if f.name != "camera"}
    kwargs: dict = {}
    cam = {key: getattr(DEFAULT_CAMERA, key) for key in _CAMERA_KEYS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneError(f"line {lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        # alias used by the documented file format
        key = {"depth": "depth_m"}.get(key, key)
        try:
            if key in cam:
                cam[key] = float(val)
            elif key == "kind":
                kwargs[key] = SceneKind(val)
            elif key in ("seed", "width", "height"):
                kwargs[key] = int(val)
            elif key in names:
                kwargs[key] = float(val)
            else:
                raise SceneError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, SceneError):
                raise
            raise SceneError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    return SceneSpec(camera=CameraIntrinsics(**cam), **kwargs)


def load_scene(path) -> SceneSpec:
    return parse_scene(Path(path).read_text())
