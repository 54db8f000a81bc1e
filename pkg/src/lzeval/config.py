"""Flat ``section.key = value`` configuration for the whole pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import terrain
from .geometry import CameraIntrinsics, GeometryError
from .homography import MonoConfig
from .stereo import BlockMatchParams, StereoError
from .simulator import DEFAULT_CAMERA


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StereoConfig:
    params: BlockMatchParams = BlockMatchParams()
    lr_check: bool = True


@dataclass(frozen=True)
class ImuConfig:
    beta: float = 0.1
    # camera-to-IMU mounting rotation, degrees (roll about x, pitch about y, yaw about z)
    mount_roll_deg: float = 0.0
    mount_pitch_deg: float = 0.0
    mount_yaw_deg: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError("imu.beta must be >= 0")


@dataclass(frozen=True)
class TerrainConfig:
    cell_size: float = terrain.CELL_SIZE
    footprint: float = terrain.FOOTPRINT
    slope_max: float = terrain.SLOPE_MAX
    rough_max: float = terrain.ROUGH_MAX
    min_points: int = terrain.MIN_POINTS
    max_range: float = terrain.MAX_RANGE
    min_valid_disp: float = terrain.MIN_VALID_DISP
    overlay_scale: int = 20

    def __post_init__(self):
        for name in ("cell_size", "slope_max", "rough_max", "max_range"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"terrain.{name} must be positive")
        if self.footprint < self.cell_size:
            raise ConfigError("terrain.footprint must be >= terrain.cell_size")
        if self.min_points < 3:
            raise ConfigError("terrain.min_points must be >= 3")
        if self.overlay_scale < 1:
            raise ConfigError("terrain.overlay_scale must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    mono: MonoConfig = MonoConfig()
    stereo: StereoConfig = StereoConfig()
    imu: ImuConfig = ImuConfig()
    terrain: TerrainConfig = TerrainConfig()
    camera: CameraIntrinsics = DEFAULT_CAMERA
    source: str | None = None


# section -> (attribute on PipelineConfig, nested attribute or None)
_SECTIONS = {
    "flow": ("mono", None),
    "mono": ("mono", None),
    "stereo": ("stereo", "params"),
    "imu": ("imu", None),
    "terrain": ("terrain", None),
    "camera": ("camera", None),
}
_FLOW_KEYS = {"stride", "margin", "window", "levels", "max_iters", "eps", "min_eig"}
_MONO_KEYS = {"alpha", "threshold"}


def _coerce(raw: str, like):
    if isinstance(like, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    if isinstance(like, int):
        return int(raw)
    return float(raw)


def parse_config(text: str, source: str | None = None) -> PipelineConfig:
    """Parse config text; unknown sections or keys and invalid values are errors."""
    updates: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} lacks a section")
        section, name = key.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        if section == "flow" and name not in _FLOW_KEYS or section == "mono" and name not in _MONO_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates.setdefault(section, {})[name] = (val, lineno)

    cfg = PipelineConfig(source=source)
    try:
        for section, items in updates.items():
            attr, nested = _SECTIONS[section]
            target = getattr(cfg, attr)
            kw, outer_kw = {}, {}
            for name, (val, lineno) in items.items():
                if section == "stereo" and name == "lr_check":
                    outer_kw[name] = _parse_value(val, True, key=f"{section}.{name}", lineno=lineno)
                    continue
                obj = getattr(target, nested) if nested else target
                if name not in {f.name for f in fields(obj)}:
                    raise ConfigError(f"line {lineno}: unknown key '{section}.{name}'")
                kw[name] = _parse_value(val, getattr(obj, name), key=f"{section}.{name}", lineno=lineno)
            if nested:
                target = replace(target, **{nested: replace(getattr(target, nested), **kw)}, **outer_kw)
            else:
                target = replace(target, **kw)
            cfg = replace(cfg, **{attr: target})
    except (GeometryError, StereoError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def _parse_value(val: str, like, key: str, lineno: int):
    try:
        return _coerce(val, like)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from None


def _validate(cfg: PipelineConfig) -> None:
    m = cfg.mono
    if m.stride < 1 or m.margin < 0 or m.levels < 1 or m.max_iters < 1:
        raise ConfigError("flow.stride, flow.levels and flow.max_iters must be >= 1, flow.margin >= 0")
    if m.window < 5 or m.window % 2 == 0:
        raise ConfigError("flow.window must be odd and >= 5")
    if not (m.eps > 0 and m.min_eig >= 0):
        raise ConfigError("flow.eps must be > 0 and flow.min_eig >= 0")
    if not (0.0 <= m.alpha < 1.0 and m.threshold > 0):
        raise ConfigError("mono.alpha must lie in [0, 1) and mono.threshold must be > 0")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path))


def config_to_text(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg.mono):
        section = "flow" if f.name in _FLOW_KEYS else "mono"
        lines.append(f"{section}.{f.name} = {getattr(cfg.mono, f.name)}")
    for f in fields(cfg.stereo.params):
        lines.append(f"stereo.{f.name} = {getattr(cfg.stereo.params, f.name)}")
    lines.append(f"stereo.lr_check = {str(cfg.stereo.lr_check).lower()}")
    for section, obj in (("imu", cfg.imu), ("terrain", cfg.terrain), ("camera", cfg.camera)):
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {getattr(obj, f.name)}")
    return "\n".join(lines) + "\n"
