"""Image array helpers and binary PGM/PPM file I/O.

Images are float64 arrays of shape (h, w, c) with values in [0, 1].
Files use the binary netpbm formats (P5 grayscale, P6 RGB) with maxval 255,
mapped linearly to [0, 1].
"""

from __future__ import annotations

import numpy as np


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check shape/range of an (h, w, c) image and return it as float64."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"image must be (h, w, c), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # netpbm tokens are separated by whitespace; '#' starts a comment to EOL
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated netpbm header")
    return data[start:pos], pos


def read_image(path: str) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file into an (h, w, c) float image."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    w, h, mv = int(width), int(height), int(maxval)
    if mv != 255:
        raise ValueError(f"only maxval 255 supported, got {mv}")
    pos += 1  # single whitespace byte after maxval
    n = h * w * channels
    raw = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    if raw.size != n:
        raise ValueError("truncated pixel data")
    return raw.reshape(h, w, channels).astype(np.float64) / 255.0


def write_image(path: str, image: np.ndarray) -> None:
    """Write an (h, w, c) float image as binary PGM (c=1) or PPM (c=3)."""
    arr = validate_image(image)
    h, w, c = arr.shape
    if c == 1:
        magic = b"P5"
    elif c == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write {c}-channel image as PGM/PPM")
    pixels = np.rint(arr * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())
