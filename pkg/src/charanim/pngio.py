"""PNG I/O: 8-bit images and masks via Pillow, 16-bit two-channel by hand.

Grayscale/color floats quantize by round-half-up on write. Masks are written
as single-channel 0/255 and read back with a 128 threshold.
"""

import struct
import zlib

import numpy as np
from PIL import Image

from .errors import DimensionError
from .raster import BinaryMask, RasterImage

_MODES = {1: "L", 3: "RGB", 4: "RGBA"}


def _quantize(data):
    return np.clip(np.floor(data * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_image(path, image: RasterImage) -> None:
    arr = _quantize(image.data)
    if image.channels == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr, mode=_MODES[image.channels]).save(path, format="PNG")


def read_image(path) -> RasterImage:
    img = Image.open(path)
    if img.mode == "P":
        img = img.convert("RGBA" if "transparency" in img.info else "RGB")
    elif img.mode not in ("L", "RGB", "RGBA"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return RasterImage(arr)


def write_mask(path, mask: BinaryMask) -> None:
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def read_mask(path) -> BinaryMask:
    arr = np.asarray(Image.open(path).convert("L"))
    return BinaryMask(arr >= 128)


def _chunk(tag, payload):
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload)))


def write_png16_2ch(path, values: np.ndarray) -> None:
    """Write a 16-bit gray+alpha PNG from a (h, w, 2) uint16 array."""
    arr = np.asarray(values)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.dtype != np.uint16:
        raise DimensionError("expected (h, w, 2) uint16 array")
    h, w = arr.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 16, 4, 0, 0, 0)  # depth 16, gray+alpha
    rows = arr.astype(">u2").tobytes()
    stride = w * 4
    raw = b"".join(b"\x00" + rows[y * stride:(y + 1) * stride] for y in range(h))
    data = (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(raw, 6)) + _chunk(b"IEND", b""))
    with open(path, "wb") as f:
        f.write(data)


def read_png16_2ch(path) -> np.ndarray:
    """Read a 16-bit gray+alpha PNG written by write_png16_2ch."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError(f"{path}: not a PNG file")
    pos = 8
    w = h = None
    idat = b""
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            w, h, depth, ctype = struct.unpack(">IIBB", payload[:10])
            if depth != 16 or ctype != 4:
                raise ValueError(f"{path}: expected 16-bit gray+alpha PNG")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    raw = zlib.decompress(idat)
    stride = w * 4
    out = np.empty((h, w, 2), dtype=np.uint16)
    prev = np.zeros(stride, dtype=np.uint8)
    for y in range(h):
        fbyte = raw[y * (stride + 1)]
        line = np.frombuffer(raw[y * (stride + 1) + 1:(y + 1) * (stride + 1)],
                             dtype=np.uint8).copy()
        if fbyte == 0:
            pass
        elif fbyte == 2:  # Up
            line = (line.astype(np.uint16) + prev).astype(np.uint8)
        else:
            raise ValueError(f"{path}: unsupported PNG filter {fbyte}")
        prev = line
        out[y] = line.view(">u2").reshape(w, 2).astype(np.uint16)
    return out
