"""Binary PGM (P5), PPM (P6) and PFM (Pf) readers and writers."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .geometry import GrayImage


class ImageFormatError(ValueError):
    pass


def _read_netpbm_header(buf: bytes, magic: bytes) -> tuple[int, int, int, int]:
    """Parse ``magic width height maxval`` and return them plus the data offset."""
    if not buf.startswith(magic):
        raise ImageFormatError(f"expected {magic.decode()} header")
    pos = len(magic)
    fields = []
    token = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)")
    while len(fields) < 3:
        m = token.match(buf, pos)
        if m is None:
            raise ImageFormatError("truncated or malformed header")
        fields.append(int(m.group(1)))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise ImageFormatError("missing whitespace after maxval")
    width, height, maxval = fields
    return width, height, maxval, pos + 1


def read_pgm(path) -> GrayImage:
    buf = Path(path).read_bytes()
    width, height, maxval, off = _read_netpbm_header(buf, b"P5")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PGM (maxval 255) is supported, got maxval {maxval}")
    n = width * height
    if width <= 0 or height <= 0 or len(buf) - off < n:
        raise ImageFormatError("PGM raster is truncated")
    arr = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).reshape(height, width)
    return GrayImage.from_uint8(arr)


def write_pgm(path, img: GrayImage) -> None:
    data = img.to_uint8()
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    width, height, maxval, off = _read_netpbm_header(buf, b"P6")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM is supported, got maxval {maxval}")
    n = width * height * 3
    if len(buf) - off < n:
        raise ImageFormatError("PPM raster is truncated")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).reshape(height, width, 3).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ImageFormatError("PPM data must be an (H, W, 3) uint8 array")
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a top-down float32 array of shape (H, W)."""
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag != b"Pf":
            raise ImageFormatError(f"only grayscale 'Pf' PFM is supported, got {tag!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ImageFormatError("malformed PFM size line")
        width, height = int(dims[0]), int(dims[1])
        try:
            scale = float(f.readline().strip())
        except ValueError as exc:
            raise ImageFormatError("malformed PFM scale line") from exc
        if scale == 0.0:
            raise ImageFormatError("PFM scale must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read()
    if len(raw) < width * height * 4:
        raise ImageFormatError("PFM raster is truncated")
    arr = np.frombuffer(raw, dtype=dtype, count=width * height).reshape(height, width)
    return np.flipud(arr).astype(np.float32)


def write_pfm(path, arr: np.ndarray) -> None:
    """Write a little-endian grayscale PFM (scale -1.0, rows stored bottom-up)."""
    arr = np.asarray(arr, dtype="<f4")
    if arr.ndim != 2:
        raise ImageFormatError("PFM writer expects a 2D array")
    h, w = arr.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(np.flipud(arr)).tobytes())
