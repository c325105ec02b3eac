"""Image file writers: PFM for lossless floats, PNG/PPM for 8-bit previews.

PFM carries the raw float32 values (bit-exact round trip); PNG and PPM get
gamma 2.2 applied to the linear render. PFM scanlines run bottom-to-top with
a negative scale marking little-endian data, per the format.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CorruptHeader, MissingFile, ValidationError

GAMMA = 2.2


def write_pfm(path, data: np.ndarray) -> None:
    """Write (H,W) or (H,W,3) float data as a PFM file."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        magic = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValidationError(f"PFM needs (H,W) or (H,W,3), got {data.shape}")
    h, w = data.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    Path(path).write_bytes(header + np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"{p} not found")
    blob = p.read_bytes()
    parts = blob.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"PF", b"Pf"):
        raise CorruptHeader(f"{p}: not a PFM file")
    color = parts[0] == b"PF"
    try:
        w, h = (int(t) for t in parts[1].split())
        scale = float(parts[2])
    except ValueError:
        raise CorruptHeader(f"{p}: bad PFM header") from None
    count = w * h * (3 if color else 1)
    dtype = "<f4" if scale < 0 else ">f4"
    pixels = np.frombuffer(parts[3], dtype=dtype, count=count)
    if pixels.size != count:
        raise CorruptHeader(f"{p}: truncated PFM payload")
    shape = (h, w, 3) if color else (h, w)
    return np.flipud(pixels.reshape(shape)).copy()


def encode_srgb(linear: np.ndarray) -> np.ndarray:
    """Linear [0,1] floats to gamma-2.2 uint8."""
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return (np.power(x, 1.0 / GAMMA) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, linear_rgb: np.ndarray) -> None:
    Image.fromarray(encode_srgb(linear_rgb), mode="RGB").save(str(path), format="PNG")


def png_bytes(linear_rgb: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(encode_srgb(linear_rgb), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_ppm(path, linear_rgb: np.ndarray) -> None:
    """Binary P6 PPM with the same 8-bit encoding as the PNG writer."""
    data = encode_srgb(linear_rgb)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValidationError(f"PPM needs (H,W,3), got {data.shape}")
    h, w = data.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())
