"""Grid-sampled pyramidal Lucas-Kanade flow between two frames."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .geometry import GrayImage

MIN_LEVEL_SIZE = 16
# guard for coarse-level solves; independent of min_eig so validity stays monotone in it
_SINGULAR_DET = 1e-14
# a window must have at least this fraction of its samples inside the level
_MIN_COVERAGE = 0.5


class FlowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FlowField:
    """Sample points P, their displacements Q and per-point validity.

    ``points`` and ``displacements`` are (N, 2) arrays in (x, y) pixel order.
    ``frame_size`` is (width, height).
    """

    points: np.ndarray
    displacements: np.ndarray
    valid: np.ndarray
    frame_size: tuple[int, int]

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        q = np.array(self.displacements, dtype=np.float64).reshape(-1, 2)
        ok = np.array(self.valid, dtype=bool).reshape(-1)
        if not (len(p) == len(q) == len(ok)):
            raise FlowError("points, displacements and valid must have equal length")
        if len(p) < 4:
            raise FlowError("a flow field needs at least 4 sample points")
        w, h = self.frame_size
        if np.any(p < 0) or np.any(p[:, 0] > w - 1) or np.any(p[:, 1] > h - 1):
            raise FlowError("sample points must lie inside the frame")
        q[~ok] = 0.0
        for a in (p, q, ok):
            a.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "displacements", q)
        object.__setattr__(self, "valid", ok)
        object.__setattr__(self, "frame_size", (int(w), int(h)))

    def __len__(self):
        return len(self.points)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def valid_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (P, P+Q) restricted to valid points."""
        p = self.points[self.valid]
        return p, p + self.displacements[self.valid]


@dataclass(frozen=True, eq=False)
class Pyramid:
    levels: tuple[GrayImage, ...]

    def __len__(self):
        return len(self.levels)

    @property
    def size(self) -> tuple[int, int]:
        return self.levels[0].width, self.levels[0].height


def _downsample(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[0] // 2, a.shape[1] // 2
    a = a[: 2 * h, : 2 * w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def build_pyramid(img: GrayImage, levels: int = 3) -> Pyramid:
    """Halve the image ``levels - 1`` times with 2x2 box averaging."""
    if levels < 1:
        raise FlowError("levels must be >= 1")
    cw, ch = img.width >> (levels - 1), img.height >> (levels - 1)
    if cw < MIN_LEVEL_SIZE or ch < MIN_LEVEL_SIZE:
        raise FlowError(
            f"{img.width}x{img.height} image too small for {levels} levels "
            f"(coarsest would be {cw}x{ch})"
        )
    out = [img]
    a = img.data
    for _ in range(levels - 1):
        # clip guards against 1-ulp excursions above 1.0
        a = np.clip(_downsample(a), 0.0, 1.0)
        out.append(GrayImage(a))
    return Pyramid(tuple(out))


def sample_grid(frame_size: tuple[int, int], stride: int = 20, margin: int = 20) -> np.ndarray:
    """Regular row-major sample grid as an (N, 2) array of (x, y) pixels."""
    width, height = frame_size
    if stride < 1:
        raise FlowError("stride must be >= 1")
    if margin < 0:
        raise FlowError("margin must be >= 0")
    # both edges inclusive: a point may sit exactly ``margin`` from the far border
    xs = np.arange(margin, min(width - margin, width - 1) + 1, stride)
    ys = np.arange(margin, min(height - margin, height - 1) + 1, stride)
    if len(xs) < 2 or len(ys) < 2 or len(xs) * len(ys) < 4:
        raise FlowError(
            f"degenerate {len(xs)}x{len(ys)} grid for frame {width}x{height}, "
            f"stride {stride}, margin {margin}"
        )
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack((gx.ravel(), gy.ravel())).astype(np.float64)


@numba.njit(cache=True, nogil=True)
def _bilinear(img, x, y, out):
    h, w = img.shape
    for k in range(x.size):
        xf = min(max(x[k], 0.0), w - 1.0)
        yf = min(max(y[k], 0.0), h - 1.0)
        x0 = min(int(xf), w - 2) if w > 1 else 0
        y0 = min(int(yf), h - 2) if h > 1 else 0
        ax = xf - x0
        ay = yf - y0
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        top = img[y0, x0] * (1.0 - ax) + img[y0, x1] * ax
        bot = img[y1, x0] * (1.0 - ax) + img[y1, x1] * ax
        out[k] = top * (1.0 - ay) + bot * ay


def _sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # bilinear; out-of-frame samples are edge-replicated and masked by the caller
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    out = np.empty(x.size)
    _bilinear(np.ascontiguousarray(img, dtype=np.float64), x, y, out)
    return out


def _inside(x: np.ndarray, y: np.ndarray, w: int, h: int) -> np.ndarray:
    return ((x >= 0) & (y >= 0) & (x <= w - 1) & (y <= h - 1)).astype(np.float64)


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(img)
    return gx, gy


def track_points(
    prev: Pyramid,
    next: Pyramid,
    points,
    window: int = 21,
    max_iters: int = 30,
    eps: float = 0.01,
    min_eig: float = 1e-4,
) -> FlowField:
    """Track ``points`` from ``prev`` to ``next`` with coarse-to-fine iterative LK.

    A point is invalid when the mean structure tensor over its window at full
    resolution has minimum eigenvalue below ``min_eig``, when its track leaves
    the frame, when the full-resolution refinement drifts further than the
    window radius, or when the final-level iteration fails to converge.
    """
    if prev.size != next.size or len(prev) != len(next):
        raise FlowError(f"pyramid mismatch: {prev.size}/{len(prev)} vs {next.size}/{len(next)}")
    if window < 5 or window % 2 == 0:
        raise FlowError("window must be odd and >= 5")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    width, height = prev.size
    r = window // 2
    oy, ox = np.mgrid[-r : r + 1, -r : r + 1]
    ox = ox.ravel().astype(np.float64)
    oy = oy.ravel().astype(np.float64)
    area = float(window * window)

    guess = np.zeros((n, 2))
    valid = np.ones(n, dtype=bool)
    flow = np.zeros((n, 2))
    n_levels = len(prev)
    for level in range(n_levels - 1, -1, -1):
        scale = 0.5**level
        I = prev.levels[level].data
        J = next.levels[level].data
        lh, lw = I.shape
        gx_img, gy_img = _gradients(I)
        p = pts * scale
        wx = p[:, 0:1] + ox[None, :]
        wy = p[:, 1:2] + oy[None, :]
        # window samples outside the level are masked out, not edge-replicated
        inside_i = _inside(wx, wy, lw, lh)
        Iw = _sample(I, wx.ravel(), wy.ravel()).reshape(n, -1)
        Ix = _sample(gx_img, wx.ravel(), wy.ravel()).reshape(n, -1) * inside_i
        Iy = _sample(gy_img, wx.ravel(), wy.ravel()).reshape(n, -1) * inside_i
        gxx = (Ix * Ix).sum(1)
        gxy = (Ix * Iy).sum(1)
        gyy = (Iy * Iy).sum(1)
        det = gxx * gyy - gxy * gxy
        solvable = (det / (area * area) > _SINGULAR_DET) & (inside_i.mean(1) >= _MIN_COVERAGE)

        nu = np.zeros((n, 2))
        active = solvable.copy()
        converged = np.zeros(n, dtype=bool)
        for _ in range(max_iters):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            sx = (wx[idx] + guess[idx, 0:1] + nu[idx, 0:1]).ravel()
            sy = (wy[idx] + guess[idx, 1:2] + nu[idx, 1:2]).ravel()
            Jw = _sample(J, sx, sy).reshape(idx.size, -1)
            dI = (Iw[idx] - Jw) * _inside(sx, sy, lw, lh).reshape(idx.size, -1)
            bx = (dI * Ix[idx]).sum(1)
            by = (dI * Iy[idx]).sum(1)
            d = det[idx]
            ex = (gyy[idx] * bx - gxy[idx] * by) / d
            ey = (gxx[idx] * by - gxy[idx] * bx) / d
            nu[idx, 0] += ex
            nu[idx, 1] += ey
            cx = p[idx, 0] + guess[idx, 0] + nu[idx, 0]
            cy = p[idx, 1] + guess[idx, 1] + nu[idx, 1]
            outside = (cx < -0.5) | (cy < -0.5) | (cx > lw - 0.5) | (cy > lh - 0.5) | ~np.isfinite(cx + cy)
            # a per-level step beyond the window radius is outside LK's capture range
            outside |= np.abs(nu[idx]).max(1) > r
            done = (ex * ex + ey * ey) < eps * eps
            converged[idx[done]] = True
            if level == 0:
                valid[idx[outside]] = False
            else:
                # a coarse-level excursion restarts from the previous guess
                nu[idx[outside]] = 0.0
            active[idx[done | outside]] = False

        if level == 0:
            min_eigval = 0.5 * ((gxx + gyy) - np.sqrt((gxx - gyy) ** 2 + 4 * gxy * gxy)) / area
            valid &= solvable & converged & (min_eigval >= min_eig)
            flow = guess + nu
        else:
            guess = 2.0 * (guess + nu)

    end = pts + flow
    inside = (end[:, 0] >= 0) & (end[:, 1] >= 0) & (end[:, 0] <= width - 1) & (end[:, 1] <= height - 1)
    valid &= inside & np.all(np.isfinite(flow), axis=1)
    flow[~valid] = 0.0
    return FlowField(pts, flow, valid, (width, height))
