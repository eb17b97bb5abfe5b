"""PNG / binary PPM image I/O for H x W x 3 float images in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

__all__ = ["read_image", "write_image", "to_uint8", "from_uint8"]


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def read_image(path: str | Path) -> np.ndarray:
    """Load a PNG or binary PPM (P6) as float64 H x W x 3 in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return _read_ppm(path)
    with PILImage.open(path) as img:
        return from_uint8(np.asarray(img.convert("RGB")))


def write_image(path: str | Path, pixels: np.ndarray) -> None:
    path = Path(path)
    raw = to_uint8(pixels)
    if path.suffix.lower() == ".ppm":
        _write_ppm(path, raw)
    else:
        PILImage.fromarray(raw, mode="RGB").save(path, format="PNG")


def _read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    fields: list[bytes] = []
    pos = 0
    # header = magic, width, height, maxval; '#' starts a comment
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6)")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1  # single whitespace after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return from_uint8(raw.reshape(h, w, 3)) * (255.0 / maxval)


def _write_ppm(path: Path, raw: np.ndarray) -> None:
    h, w = raw.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    path.write_bytes(header + raw.tobytes())
