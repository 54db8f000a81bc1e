"""SAD block-matching disparity, left-right consistency check and bad-pixel scoring."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, astuple

import numba
import numpy as np

from .geometry import GrayImage

INVALID = np.inf


class StereoError(ValueError):
    pass


@dataclass(frozen=True)
class BlockMatchParams:
    block: int = 11
    max_disp: int = 64
    min_disp: int = 0
    texture_threshold: float = 1e-4
    uniqueness_ratio: float = 1.15
    lr_tolerance: float = 1.0

    def __post_init__(self):
        if self.block < 5 or self.block % 2 == 0:
            raise StereoError("block must be odd and >= 5")
        if self.min_disp < 0 or self.max_disp <= self.min_disp:
            raise StereoError("need 0 <= min_disp < max_disp")
        if self.uniqueness_ratio < 1.0:
            raise StereoError("uniqueness_ratio must be >= 1")
        if self.texture_threshold < 0 or self.lr_tolerance < 0:
            raise StereoError("thresholds must be non-negative")

    def digest(self) -> str:
        return hashlib.sha1(repr(astuple(self)).encode()).hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Per-pixel disparity, ``inf`` where invalid."""

    d: np.ndarray
    min_disp: float = 0.0
    max_disp: float = np.inf
    params_hash: str = ""

    def __post_init__(self):
        arr = np.array(self.d, dtype=np.float32)
        if arr.ndim != 2:
            raise StereoError("disparity map must be 2D")
        arr[~np.isfinite(arr)] = INVALID
        arr.setflags(write=False)
        object.__setattr__(self, "d", arr)

    @property
    def width(self) -> int:
        return self.d.shape[1]

    @property
    def height(self) -> int:
        return self.d.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.d)

    def with_data(self, d: np.ndarray) -> "DisparityMap":
        return DisparityMap(d, self.min_disp, self.max_disp, self.params_hash)


@numba.njit(cache=True, nogil=True)
def _sad_match(left, right, ok, r, min_d, max_d, uniq, out):
    h, w = left.shape
    nd = max_d - min_d + 1
    colsum = np.zeros((nd, w))
    pref = np.zeros((nd, w + 1))
    cost = np.empty(nd)
    for v in range(r, h - r):
        if v == r:
            for k in range(nd):
                d = min_d + k
                for u in range(d, w):
                    s = 0.0
                    for vv in range(0, 2 * r + 1):
                        s += abs(left[vv, u] - right[vv, u - d])
                    colsum[k, u] = s
        else:
            a = v + r
            b = v - r - 1
            for k in range(nd):
                d = min_d + k
                for u in range(d, w):
                    colsum[k, u] += abs(left[a, u] - right[a, u - d]) - abs(left[b, u] - right[b, u - d])
        for k in range(nd):
            s = 0.0
            for u in range(w):
                pref[k, u] = s
                s += colsum[k, u]
            pref[k, w] = s
        for u in range(r, w - r):
            if not ok[v, u]:
                continue
            # candidates whose block would leave the right image are not searched
            n_cand = min(nd, u - r - min_d + 1)
            if n_cand <= 0:
                continue
            best = np.inf
            bk = -1
            for k in range(n_cand):
                c = pref[k, u + r + 1] - pref[k, u - r]
                cost[k] = c
                if c < best:
                    best = c
                    bk = k
            # winner on a truncated search edge: the true minimum may lie outside the image
            if n_cand < nd and bk == n_cand - 1:
                continue
            second = np.inf
            for k in range(n_cand):
                if (k < bk - 1 or k > bk + 1) and cost[k] < second:
                    second = cost[k]
            if best * uniq >= second:
                continue
            disp = float(min_d + bk)
            # equiangular fit: SAD costs are V-shaped near the minimum
            if 0 < bk < n_cand - 1:
                cm = cost[bk - 1]
                cp = cost[bk + 1]
                denom = max(cm, cp) - best
                if denom > 0:
                    off = 0.5 * (cm - cp) / denom
                    if off > 0.5:
                        off = 0.5
                    elif off < -0.5:
                        off = -0.5
                    disp += off
            out[v, u] = disp


def _box_mean(a: np.ndarray, r: int) -> np.ndarray:
    """Mean over (2r+1)^2 windows; entries whose window leaves the image are nan."""
    h, w = a.shape
    b = 2 * r + 1
    c = np.zeros((h + 1, w + 1))
    c[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    out = np.full((h, w), np.nan)
    out[r : h - r, r : w - r] = (c[b:, b:] - c[:-b, b:] - c[b:, :-b] + c[:-b, :-b]) / (b * b)
    return out


def block_variance(img: np.ndarray, block: int) -> np.ndarray:
    r = block // 2
    img = np.asarray(img, dtype=np.float64)
    mean = _box_mean(img, r)
    var = _box_mean(img * img, r) - mean * mean
    return np.maximum(var, 0.0, where=np.isfinite(var), out=var)


def _match(left: np.ndarray, right: np.ndarray, p: BlockMatchParams) -> np.ndarray:
    h, w = left.shape
    r = p.block // 2
    var = block_variance(left, p.block)
    ok = np.isfinite(var) & (var >= p.texture_threshold)
    out = np.full((h, w), INVALID, dtype=np.float64)
    _sad_match(
        np.ascontiguousarray(left, dtype=np.float64),
        np.ascontiguousarray(right, dtype=np.float64),
        ok,
        r,
        int(p.min_disp),
        int(p.max_disp),
        float(p.uniqueness_ratio),
        out,
    )
    return out


def compute_disparity(left: GrayImage, right: GrayImage, p: BlockMatchParams | None = None) -> DisparityMap:
    """Left-referenced SAD block matching with sub-pixel refinement.

    Candidates whose block would leave the right image are not searched. A
    pixel stays invalid when its block is textureless or leaves the image, the
    match is not unique, or the winner sits on a search range cut short by the
    image border. The sub-pixel offset is the vertex of the symmetric V
    through the three costs around the winner, clamped to +-0.5 px.
    """
    p = p or BlockMatchParams()
    if left.shape != right.shape:
        raise StereoError(f"stereo pair size mismatch: {left.shape} vs {right.shape}")
    d = _match(left.data, right.data, p)
    return DisparityMap(d, p.min_disp, p.max_disp, p.digest())


def compute_right_disparity(left: GrayImage, right: GrayImage, p: BlockMatchParams | None = None) -> DisparityMap:
    """Right-referenced disparity: right pixel u matches left pixel u + d."""
    p = p or BlockMatchParams()
    if left.shape != right.shape:
        raise StereoError(f"stereo pair size mismatch: {left.shape} vs {right.shape}")
    d = _match(right.data[:, ::-1], left.data[:, ::-1], p)[:, ::-1]
    return DisparityMap(d, p.min_disp, p.max_disp, p.digest())


def left_right_check(d_left: DisparityMap, d_right: DisparityMap, tol: float = 1.0) -> DisparityMap:
    """Invalidate left disparities that the right-referenced map does not confirm."""
    if d_left.shape != d_right.shape:
        raise StereoError(f"disparity map size mismatch: {d_left.shape} vs {d_right.shape}")
    dl = d_left.d.astype(np.float64)
    h, w = dl.shape
    valid = np.isfinite(dl)
    vv, uu = np.nonzero(valid)
    ur = np.rint(uu - dl[vv, uu]).astype(np.int64)
    inside = (ur >= 0) & (ur < w)
    dr = np.full(len(uu), np.inf)
    dr[inside] = d_right.d[vv[inside], ur[inside]]
    agree = np.isfinite(dr) & (np.abs(dl[vv, uu] - dr) <= tol)
    out = dl.copy()
    out[vv[~agree], uu[~agree]] = INVALID
    return d_left.with_data(out)


def bad_pixel_rate(est: DisparityMap, gt: DisparityMap, tau: float = 4.0) -> float:
    """Percentage of ground-truth-valid pixels that are invalid in ``est`` or off by more than ``tau``."""
    if est.shape != gt.shape:
        raise StereoError(f"size mismatch: {est.shape} vs {gt.shape}")
    gv = gt.valid
    n = int(gv.sum())
    if n == 0:
        raise StereoError("ground truth has no valid pixels")
    e = est.d[gv].astype(np.float64)
    g = gt.d[gv].astype(np.float64)
    bad = ~np.isfinite(e) | (np.abs(e - g) > tau)
    return 100.0 * float(bad.sum()) / n
