import numpy as np
import pytest

from lzeval.geometry import GrayImage
from lzeval.imageio import (
    ImageFormatError,
    read_pfm,
    read_pgm,
    read_ppm,
    write_pfm,
    write_pgm,
    write_ppm,
)


def test_pgm_round_trip(tmp_path):
    raw = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    img = GrayImage.from_uint8(raw)
    write_pgm(tmp_path / "a.pgm", img)
    assert (tmp_path / "a.pgm").read_bytes()[:11] == b"P5\n4 3\n255\n"
    back = read_pgm(tmp_path / "a.pgm")
    np.testing.assert_array_equal(back.to_uint8(), raw)


def test_pgm_header_with_comment(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_allclose(read_pgm(tmp_path / "c.pgm").data, [[0.0, 1.0]])


@pytest.mark.parametrize("maxval", [1, 254, 65535])
def test_pgm_rejects_other_maxval(tmp_path, maxval):
    (tmp_path / "m.pgm").write_bytes(f"P5\n2 1\n{maxval}\n".encode() + b"\x00\x00\x00\x00")
    with pytest.raises(ImageFormatError):
        read_pgm(tmp_path / "m.pgm")


def test_pgm_rejects_ascii_and_truncation(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P2\n2 1\n255\n0 0\n")
    with pytest.raises(ImageFormatError):
        read_pgm(tmp_path / "a.pgm")
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(ImageFormatError):
        read_pgm(tmp_path / "t.pgm")


def test_pfm_layout_and_round_trip(tmp_path):
    arr = np.array([[1.0, 2.0], [3.0, np.inf]], dtype=np.float32)
    write_pfm(tmp_path / "d.pfm", arr)
    raw = (tmp_path / "d.pfm").read_bytes()
    assert raw.startswith(b"Pf\n2 2\n-1.0\n")
    body = np.frombuffer(raw[len(b"Pf\n2 2\n-1.0\n") :], dtype="<f4")
    # bottom-up rows, little endian
    np.testing.assert_array_equal(body, [3.0, np.inf, 1.0, 2.0])
    np.testing.assert_array_equal(read_pfm(tmp_path / "d.pfm"), arr)


def test_pfm_big_endian_read(tmp_path):
    arr = np.array([[0.5, 1.5]], dtype=">f4")
    (tmp_path / "b.pfm").write_bytes(b"Pf\n2 1\n1.0\n" + arr.tobytes())
    np.testing.assert_array_equal(read_pfm(tmp_path / "b.pfm"), [[0.5, 1.5]])


def test_pfm_rejects_color(tmp_path):
    (tmp_path / "c.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + b"\x00" * 12)
    with pytest.raises(ImageFormatError):
        read_pfm(tmp_path / "c.pfm")


def test_ppm_round_trip(tmp_path):
    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    rgb[0, 1] = (255, 255, 0)
    write_ppm(tmp_path / "o.ppm", rgb)
    assert (tmp_path / "o.ppm").read_bytes().startswith(b"P6\n3 2\n255\n")
    np.testing.assert_array_equal(read_ppm(tmp_path / "o.ppm"), rgb)
