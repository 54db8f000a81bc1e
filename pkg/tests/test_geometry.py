import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lzeval.geometry import (
    CameraIntrinsics,
    GeometryError,
    GrayImage,
    UnitQuaternion,
    disparity_to_point,
    point_to_disparity,
    quaternion_multiply,
    rotate_vector,
)

K = CameraIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0, baseline=0.12)


def random_quat(rng):
    return UnitQuaternion.from_array(rng.normal(size=4))


def test_disparity_to_point_on_axis():
    np.testing.assert_allclose(disparity_to_point(K.cx, K.cy, 24.0, K), [0.0, 0.0, 2.0], atol=1e-12)


def test_disparity_to_point_off_axis():
    np.testing.assert_allclose(disparity_to_point(K.cx + 400, K.cy, 24.0, K), [2.0, 0.0, 2.0], atol=1e-12)


@pytest.mark.parametrize("d", [0.0, -1.0, math.inf, math.nan])
def test_disparity_to_point_rejects_bad_disparity(d):
    with pytest.raises(GeometryError):
        disparity_to_point(10, 10, d, K)


@given(
    u=st.floats(0, 639),
    v=st.floats(0, 479),
    d=st.floats(0.5, 128),
)
def test_unprojection_round_trip(u, v, d):
    uu, vv, dd = point_to_disparity(disparity_to_point(u, v, d, K), K)
    assert abs(uu - u) < 1e-6 and abs(vv - v) < 1e-6 and abs(dd - d) < 1e-6


def test_intrinsics_validation():
    with pytest.raises(GeometryError):
        CameraIntrinsics(0.0, 400.0, 1.0, 1.0, 0.1)
    with pytest.raises(GeometryError):
        CameraIntrinsics(400.0, 400.0, 1.0, 1.0, 0.0)
    with pytest.raises(GeometryError):
        K.check_image(320, 240)
    K.check_image(640, 480)


def test_gray_image_is_immutable_and_bounded():
    img = GrayImage(np.full((4, 5), 0.25))
    assert (img.width, img.height) == (5, 4)
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0
    with pytest.raises(GeometryError):
        GrayImage(np.full((2, 2), 1.5))


def test_rotate_identity_and_zero():
    q = UnitQuaternion.identity()
    np.testing.assert_array_equal(rotate_vector(q, (1.0, 2.0, 3.0)), [1.0, 2.0, 3.0])
    q = UnitQuaternion.from_axis_angle((0.3, -1, 2), 1.1)
    np.testing.assert_array_equal(rotate_vector(q, (0.0, 0.0, 0.0)), [0.0, 0.0, 0.0])


def test_rotate_quarter_turn_about_z():
    q = UnitQuaternion.from_axis_angle((0, 0, 1), math.pi / 2)
    np.testing.assert_allclose(rotate_vector(q, (1, 0, 0)), [0, 1, 0], atol=1e-9)


def test_rotate_matches_rotation_matrix_oracle(rng):
    for _ in range(200):
        axis = rng.normal(size=3)
        angle = rng.uniform(-math.pi, math.pi)
        v = rng.normal(size=3)
        q = UnitQuaternion.from_axis_angle(axis, angle)
        oracle = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).apply(v)
        np.testing.assert_allclose(rotate_vector(q, v), oracle, atol=1e-9)


def test_rotate_preserves_norm(rng):
    for _ in range(1000):
        q = random_quat(rng)
        v = rng.normal(size=3) * rng.uniform(0.01, 100)
        n = np.linalg.norm(v)
        assert abs(np.linalg.norm(rotate_vector(q, v)) - n) <= 1e-9 * n


def test_multiply_identity_and_inverse(rng):
    q = random_quat(rng)
    e = quaternion_multiply(UnitQuaternion.identity(), q)
    np.testing.assert_allclose(e.as_array(), q.as_array(), atol=1e-12)
    inv = quaternion_multiply(q, q.inverse())
    np.testing.assert_allclose(inv.as_array(), [1, 0, 0, 0], atol=1e-9)


def test_multiply_adds_angles_about_z():
    a = UnitQuaternion.from_axis_angle((0, 0, 1), math.pi / 2)
    q = quaternion_multiply(a, a)
    np.testing.assert_allclose(rotate_vector(q, (1, 0, 0)), [-1, 0, 0], atol=1e-9)
    assert abs(q.angle() - math.pi) < 1e-9


def test_multiply_is_associative(rng):
    for _ in range(200):
        a, b, c = random_quat(rng), random_quat(rng), random_quat(rng)
        left = quaternion_multiply(quaternion_multiply(a, b), c).as_array()
        right = quaternion_multiply(a, quaternion_multiply(b, c)).as_array()
        np.testing.assert_allclose(left, right, atol=1e-9)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4).filter(lambda c: sum(x * x for x in c) > 1e-6))
def test_quaternion_normalized(c):
    q = UnitQuaternion.from_array(c)
    assert abs(np.sum(q.as_array() ** 2) - 1.0) < 1e-9


def test_matrix_agrees_with_rotate(rng):
    q = random_quat(rng)
    v = rng.normal(size=3)
    np.testing.assert_allclose(q.as_matrix() @ v, rotate_vector(q, v), atol=1e-12)
