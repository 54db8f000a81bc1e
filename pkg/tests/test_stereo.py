import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lzeval.geometry import CameraIntrinsics, GrayImage
from lzeval.imageio import read_pfm, write_pfm
from lzeval.simulator import shifted_pair
from lzeval.stereo import (
    BlockMatchParams,
    DisparityMap,
    StereoError,
    bad_pixel_rate,
    compute_disparity,
    compute_right_disparity,
    left_right_check,
)

W, H = 320, 240
R = BlockMatchParams().block // 2
HALF_CAMERA = CameraIntrinsics(200.0, 200.0, 160.0, 120.0, 0.12)


def interior(shift, w=W, h=H, r=R):
    """Pixels whose true correspondence lies inside the right image."""
    m = np.zeros((h, w), bool)
    m[r : h - r, shift + r : w - r] = True
    return m


@pytest.mark.parametrize("shift", [1, 8, 24, 60])
def test_integer_shift(shift):
    left, right = shifted_pair(W, H, shift, seed=shift)
    d = compute_disparity(left, right)
    m = interior(shift)
    vals = d.d[m & d.valid]
    assert d.valid[m].mean() >= 0.8
    assert abs(np.median(vals) - shift) <= 0.25
    assert np.mean(np.abs(vals - shift) <= 0.25) > 0.99


def test_identical_pair():
    img, _ = shifted_pair(W, H, 0, seed=2)
    d = compute_disparity(img, img)
    assert d.valid.any()
    assert np.all(d.d[d.valid] == 0.0)


def test_constant_pair():
    img = GrayImage(np.full((H, W), 0.3))
    assert not compute_disparity(img, img).valid.any()


def test_valid_range_and_shape():
    left, right = shifted_pair(W, H, 30, seed=5)
    p = BlockMatchParams(min_disp=10, max_disp=40)
    d = compute_disparity(left, right, p)
    assert d.shape == (H, W) and d.d.dtype == np.float32
    v = d.d[d.valid]
    assert v.min() >= 10 and v.max() <= 40
    assert d.params_hash == p.digest()


def test_size_mismatch():
    a = GrayImage(np.zeros((20, 30)))
    b = GrayImage(np.zeros((20, 31)))
    with pytest.raises(StereoError):
        compute_disparity(a, b)
    with pytest.raises(StereoError):
        left_right_check(DisparityMap(np.zeros((2, 3))), DisparityMap(np.zeros((3, 2))))


@pytest.mark.parametrize("kw", [dict(block=4), dict(block=3), dict(min_disp=10, max_disp=10), dict(uniqueness_ratio=0.9)])
def test_bad_params(kw):
    with pytest.raises(StereoError):
        BlockMatchParams(**kw)


def test_determinism():
    left, right = shifted_pair(W, H, 12, seed=9)
    a = compute_disparity(left, right)
    b = compute_disparity(left, right)
    assert a.d.tobytes() == b.d.tobytes()


def test_right_disparity_mirrors_left():
    left, right = shifted_pair(W, H, 17, seed=4)
    dr = compute_right_disparity(left, right)
    m = np.zeros((H, W), bool)
    m[R : H - R, R : W - 17 - R] = True
    assert np.median(dr.d[m & dr.valid]) == pytest.approx(17, abs=0.25)


# left-right check


def test_lrc_consistent_pair_unchanged():
    left, right = shifted_pair(W, H, 20, seed=6)
    dl = compute_disparity(left, right)
    dr = compute_right_disparity(left, right)
    out = left_right_check(dl, dr)
    m = interior(20) & dl.valid
    assert np.mean(out.valid[m]) > 0.99


def test_lrc_all_invalid_right():
    dl = DisparityMap(np.full((10, 12), 3.0))
    dr = DisparityMap(np.full((10, 12), np.inf))
    assert not left_right_check(dl, dr).valid.any()


def lrc_oracle(dl, dr, tol):
    h, w = dl.shape
    out = dl.copy()
    for v in range(h):
        for u in range(w):
            d = dl[v, u]
            if not np.isfinite(d):
                continue
            ur = int(np.rint(u - d))
            if ur < 0 or ur >= w or not np.isfinite(dr[v, ur]) or abs(d - dr[v, ur]) > tol:
                out[v, u] = np.inf
    return out


def test_lrc_occlusion_matches_oracle(stereo_scene):
    left, right, gt = stereo_scene(kind="box_on_plane", box_h=0.5, seed=3, width=320, height=240, camera=HALF_CAMERA)
    dl = compute_disparity(left, right)
    dr = compute_right_disparity(left, right)
    out = left_right_check(dl, dr, 1.0)
    expected = lrc_oracle(dl.d.astype(np.float64), dr.d.astype(np.float64), 1.0)
    assert np.array_equal(np.isfinite(out.d), np.isfinite(expected))
    # matched pixels hidden from the right camera beside the box: most are rejected
    occluded = ~gt.disparity.valid & dl.valid
    occluded[:, :40] = False
    assert occluded.sum() > 100
    assert out.valid[occluded].mean() < 0.6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lrc_subset_property(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 12, 2)
    dl = rng.uniform(0, 8, (h, w))
    dr = dl + rng.normal(0, 1, (h, w))
    dl[rng.random((h, w)) < 0.3] = np.inf
    dr[rng.random((h, w)) < 0.3] = np.inf
    a, b = DisparityMap(dl), DisparityMap(dr)
    out = left_right_check(a, b, rng.uniform(0, 2))
    assert not np.any(out.valid & ~a.valid)
    assert np.array_equal(out.d[out.valid], a.d[out.valid])


# bad pixel rate


def ten():
    return DisparityMap(np.arange(10, dtype=float).reshape(2, 5))


def test_bad_pixel_exact_counts():
    gt = ten()
    assert bad_pixel_rate(gt, gt, 4) == 0.0
    est = gt.d.copy()
    est[1, 2] += 5
    assert bad_pixel_rate(DisparityMap(est), gt, 4) == 10.0
    assert bad_pixel_rate(DisparityMap(np.full((2, 5), np.inf)), gt, 4) == 100.0


def test_bad_pixel_ignores_invalid_gt():
    g = ten().d.copy()
    g[0, :] = np.inf
    est = np.full((2, 5), np.inf)
    est[1, :2] = g[1, :2]
    assert bad_pixel_rate(DisparityMap(est), DisparityMap(g), 4) == 60.0


def test_bad_pixel_errors():
    with pytest.raises(StereoError):
        bad_pixel_rate(ten(), DisparityMap(np.full((2, 5), np.inf)))
    with pytest.raises(StereoError):
        bad_pixel_rate(ten(), DisparityMap(np.zeros((5, 2))))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bad_pixel_properties(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 60, (6, 7))
    gt[0, 0] = 1.0
    gt[rng.random(gt.shape) < 0.2] = np.inf
    est = gt + rng.normal(0, 5, gt.shape)
    est[rng.random(gt.shape) < 0.2] = np.inf
    g, e = DisparityMap(gt), DisparityMap(est)
    rates = [bad_pixel_rate(e, g, t) for t in (0, 0.5, 1, 2, 4, 8, 100)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    for t in (0, 1, 4):
        assert bad_pixel_rate(g, g, t) == 0.0


def test_pfm_round_trip(tmp_path):
    left, right = shifted_pair(W, H, 8, seed=1)
    d = compute_disparity(left, right)
    write_pfm(tmp_path / "d.pfm", d.d)
    back = read_pfm(tmp_path / "d.pfm")
    assert back.tobytes() == d.d.tobytes()


def test_speed_640x480():
    left, right = shifted_pair(640, 480, 24, seed=1)
    compute_disparity(left, right)  # JIT warm-up
    t = time.perf_counter()
    compute_disparity(left, right)
    assert time.perf_counter() - t < 0.5
