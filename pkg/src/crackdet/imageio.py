"""Lossless raster file I/O: PNG (via Pillow) and PGM/PPM (native codec)."""

import io
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .core import as_gray, as_mask, as_rgb

PNM_MAGICS = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class DecodeError(ValueError):
    """The file exists but its contents are not a supported raster."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def load_image(path) -> np.ndarray:
    """Decode a PNG, PGM or PPM file into an (H, W, 3) uint8 raster.

    Single-channel sources are replicated into three equal channels.
    """
    data = Path(path).read_bytes()
    if data[:8] == PNG_SIGNATURE:
        return _decode_png(data)
    if data[:2] in PNM_MAGICS:
        return _decode_pnm(data)
    raise DecodeError(f"{path}: unrecognised image signature", offset=0)


def _decode_png(data):
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            if mode in ("1", "L", "LA", "P", "PA", "RGBA", "RGB"):
                if mode in ("1", "L", "LA"):
                    gray = np.asarray(im.convert("L"), dtype=np.uint8)
                    return np.repeat(gray[:, :, None], 3, axis=2)
                return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"corrupt PNG stream: {exc}") from exc
    raise DecodeError(f"unsupported PNG mode {mode!r} (8-bit gray/RGB only)")


class _PnmReader:
    def __init__(self, data):
        self.data = data
        self.pos = 2

    def _skip_space(self):
        data = self.data
        while self.pos < len(data):
            c = data[self.pos : self.pos + 1]
            if c == b"#":
                end = data.find(b"\n", self.pos)
                self.pos = len(data) if end < 0 else end + 1
            elif c.isspace():
                self.pos += 1
            else:
                break

    def integer(self, what):
        self._skip_space()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if start == self.pos:
            raise DecodeError(f"expected {what}", offset=start)
        return int(self.data[start : self.pos]), start


def _decode_pnm(data):
    channels, binary = PNM_MAGICS[data[:2]]
    reader = _PnmReader(data)
    width, w_at = reader.integer("width")
    height, h_at = reader.integer("height")
    maxval, m_at = reader.integer("maxval")
    if width < 1:
        raise DecodeError("width must be positive", offset=w_at)
    if height < 1:
        raise DecodeError("height must be positive", offset=h_at)
    if not 1 <= maxval <= 255:
        raise DecodeError(f"maxval {maxval} unsupported (8-bit only)", offset=m_at)
    count = width * height * channels

    if binary:
        start = reader.pos
        if start >= len(data) or not data[start : start + 1].isspace():
            raise DecodeError("missing whitespace after header", offset=start)
        start += 1
        body = data[start : start + count]
        if len(body) < count:
            raise DecodeError(
                f"raster truncated: need {count} bytes, have {len(body)}",
                offset=start + len(body),
            )
        values = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
        bad = np.flatnonzero(values > maxval)
        if bad.size:
            raise DecodeError("sample exceeds maxval", offset=start + int(bad[0]))
    else:
        values = np.empty(count, dtype=np.int64)
        for i in range(count):
            values[i], at = reader.integer("sample")
            if values[i] > maxval:
                raise DecodeError("sample exceeds maxval", offset=at)

    if maxval != 255:
        values = (values * 255 * 2 + maxval) // (2 * maxval)
    raster = values.astype(np.uint8).reshape(height, width, channels)
    if channels == 1:
        raster = np.repeat(raster, 3, axis=2)
    return raster


def _encode_pnm(pixels, channels):
    height, width = pixels.shape[:2]
    magic = b"P5" if channels == 1 else b"P6"
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def _encode(pixels, suffix):
    """Encode gray (H, W) or color (H, W, 3) uint8 pixels for a file suffix."""
    suffix = suffix.lower()
    channels = 1 if pixels.ndim == 2 else 3
    if suffix == ".png":
        buf = io.BytesIO()
        Image.fromarray(pixels, mode="L" if channels == 1 else "RGB").save(buf, format="PNG")
        return buf.getvalue()
    if suffix == ".pgm":
        if channels != 1:
            raise ValueError("PGM holds gray images only")
        return _encode_pnm(pixels, 1)
    if suffix == ".ppm":
        if channels == 1:
            pixels = np.repeat(pixels[:, :, None], 3, axis=2)
        return _encode_pnm(pixels, 3)
    raise ValueError(f"unsupported output format {suffix!r} (use .png, .pgm or .ppm)")


def write_bytes_atomic(path, payload: bytes):
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def save_gray(image, path):
    gray = as_gray(image)
    write_bytes_atomic(path, _encode(np.ascontiguousarray(gray), Path(path).suffix))


def save_binary(mask, path):
    """Save a mask with crack pixels as 255 and background as 0."""
    save_gray(np.where(as_mask(mask), 255, 0).astype(np.uint8), path)


def save_rgb(image, path):
    rgb = as_rgb(image)
    write_bytes_atomic(path, _encode(np.ascontiguousarray(rgb), Path(path).suffix))


def load_gray(path) -> np.ndarray:
    """Load a file and keep its first channel; meant for files this package wrote."""
    return load_image(path)[:, :, 0].copy()


def load_binary(path) -> np.ndarray:
    return load_image(path)[:, :, 0] == 255
