"""Planar homography fit over flow correspondences and the low-passed rigidity gate."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .flow import FlowField, FlowError, build_pyramid, sample_grid, track_points
from .geometry import GrayImage

# |w| below this after transformation counts as a point at infinity
_W_EPS = 1e-12


class DegenerateConfigurationError(ValueError):
    """Too few or collinear correspondences to determine a homography."""


class NumericalDegeneracyError(ValueError):
    """More than half of the points map to infinity under the homography."""


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map, Frobenius-normalized with ``h[2, 2] >= 0``."""

    h: np.ndarray

    def __post_init__(self):
        m = np.array(self.h, dtype=np.float64).reshape(3, 3)
        n = np.linalg.norm(m)
        if not math.isfinite(n) or n == 0.0:
            raise DegenerateConfigurationError("homography must be finite and non-zero")
        m = m / n
        if m[2, 2] < 0 or (m[2, 2] == 0 and m[np.nonzero(m)][-1] < 0):
            m = -m
        m.setflags(write=False)
        object.__setattr__(self, "h", m)

    def apply(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map (N, 2) points; returns (image points, homogeneous w)."""
        pts = np.asarray(pts, dtype=np.float64)
        hom = np.column_stack((pts, np.ones(len(pts)))) @ self.h.T
        w = hom[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = hom[:, :2] / w[:, None]
        return out, w


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - c, axis=1))
    if mean_dist == 0.0:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _collinear(pts: np.ndarray) -> bool:
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] <= 1e-9 * max(sv[0], 1.0)


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT estimate of H with dst ~ H src; returns the raw 3x3 matrix."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 4:
        raise DegenerateConfigurationError(f"need at least 4 correspondences, got {len(src)}")
    if _collinear(src) or _collinear(dst):
        raise DegenerateConfigurationError("correspondences are collinear")
    ts, td = _normalizer(src), _normalizer(dst)
    s = (np.column_stack((src, np.ones(len(src)))) @ ts.T)[:, :2]
    d = (np.column_stack((dst, np.ones(len(dst)))) @ td.T)[:, :2]
    n = len(s)
    a = np.zeros((2 * n, 9))
    x, y = s[:, 0], s[:, 1]
    u, v = d[:, 0], d[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = v * x
    a[1::2, 7] = v * y
    a[1::2, 8] = v
    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(np.linalg.det(h / np.linalg.norm(h))) < 1e-12:
        raise DegenerateConfigurationError("fitted homography is singular")
    return h


def fit_homography(flow: FlowField) -> Homography:
    """Least-squares homography mapping next-frame positions P+Q back onto P."""
    p, pq = flow.valid_pairs()
    return Homography(dlt_homography(pq, p))


def homography_error(flow: FlowField, h: Homography) -> float:
    """Per-point RMS of ``P - H(P + Q)`` over the valid samples, in pixels."""
    p, pq = flow.valid_pairs()
    if len(p) == 0:
        raise DegenerateConfigurationError("no valid points")
    mapped, w = h.apply(pq)
    keep = np.abs(w) > _W_EPS
    excluded = len(p) - int(keep.sum())
    if excluded * 2 > len(p):
        raise NumericalDegeneracyError(f"{excluded} of {len(p)} points map to infinity")
    r = p[keep] - mapped[keep]
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


@dataclass(frozen=True)
class PlanarityState:
    raw_error: float = 0.0
    filtered_error: float = 0.0
    alpha: float = 0.9
    threshold: float = 1.0
    safe: bool = True
    samples: int = 0
    valid_points: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


def update_filter(state: PlanarityState, e: float) -> PlanarityState:
    """Exponential moving average of the homography error; first sample initializes."""
    if not math.isfinite(e) or e < 0:
        raise ValueError(f"homography error must be finite and >= 0, got {e}")
    if state.samples == 0:
        filtered = e
    else:
        filtered = state.alpha * state.filtered_error + (1.0 - state.alpha) * e
    return replace(
        state,
        raw_error=e,
        filtered_error=filtered,
        safe=filtered <= state.threshold,
        samples=state.samples + 1,
    )


@dataclass(frozen=True)
class MonoConfig:
    stride: int = 20
    margin: int = 20
    window: int = 21
    levels: int = 3
    max_iters: int = 30
    eps: float = 0.01
    min_eig: float = 1e-4
    alpha: float = 0.9
    threshold: float = 1.0

    def initial_state(self) -> PlanarityState:
        return PlanarityState(alpha=self.alpha, threshold=self.threshold)


def mono_evaluate(prev: GrayImage, next: GrayImage, state: PlanarityState, config: MonoConfig | None = None) -> PlanarityState:
    """Feed one frame pair through flow, homography fit and the error filter.

    A frame whose flow cannot support a homography is scored as twice the
    threshold so the gate leans towards aborting.
    """
    config = config or MonoConfig()
    if prev.shape != next.shape:
        raise FlowError(f"frame size mismatch: {prev.shape} vs {next.shape}")
    pts = sample_grid((prev.width, prev.height), config.stride, config.margin)
    flow = track_points(
        build_pyramid(prev, config.levels),
        build_pyramid(next, config.levels),
        pts,
        window=config.window,
        max_iters=config.max_iters,
        eps=config.eps,
        min_eig=config.min_eig,
    )
    try:
        e = homography_error(flow, fit_homography(flow))
    except (DegenerateConfigurationError, NumericalDegeneracyError):
        e = 2.0 * state.threshold
    return replace(update_filter(state, e), valid_points=flow.n_valid)
