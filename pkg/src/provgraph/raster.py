"""Raster loading and saving.

PGM/PPM and uncompressed 8-bit TIFF are read natively; anything else
(JPEG, PNG) goes through Pillow when it is installed.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from provgraph.metadata import MalformedContainer, _TiffReader

# Integer luma approximation (BT.601 weights scaled by 256).
LUMA_R, LUMA_G, LUMA_B = 77, 150, 29


def to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return np.ascontiguousarray(img, dtype=np.uint8)
    rgb = img[..., :3].astype(np.uint32)
    y = (LUMA_R * rgb[..., 0] + LUMA_G * rgb[..., 1] + LUMA_B * rgb[..., 2] + 128) >> 8
    return np.ascontiguousarray(y, dtype=np.uint8)


def _netpbm_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    out: list[int] = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated netpbm header")
        out.append(int(data[start:pos]))
    return out, pos


def decode_netpbm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError("not a PGM/PPM stream")
    (w, h, maxval), pos = _netpbm_tokens(data, 3, 2)
    channels = 3 if magic in (b"P3", b"P6") else 1
    if magic in (b"P5", b"P6"):
        pos += 1  # single whitespace after maxval
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        count = w * h * channels
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    else:
        vals, _ = _netpbm_tokens(data, w * h * channels, pos)
        arr = np.array(vals)
    arr = arr.astype(np.float64 if maxval != 255 else np.uint8)
    if maxval != 255:
        arr = np.round(arr * (255.0 / maxval)).astype(np.uint8)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return arr.reshape(shape)


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        header = b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    else:
        header = b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    return header + img.tobytes()


def decode_tiff(data: bytes) -> np.ndarray:
    r = _TiffReader(data)
    ifd, _ = r.ifd(r.ifd0, strict=True)

    def values(tag: int) -> list[int]:
        entry = ifd.get(tag)
        if entry is None:
            return []
        typ, n, payload = entry
        fmt = {3: "H", 4: "I"}.get(typ)
        if fmt is None:
            return []
        return list(struct.unpack(r.endian + fmt * n, payload))

    try:
        (w,), (h,) = values(256), values(257)
    except ValueError:
        raise MalformedContainer("TIFF has no image dimensions") from None
    spp = (values(277) or [1])[0]
    bps = values(258) or [1]
    if (values(259) or [1])[0] != 1 or any(b != 8 for b in bps):
        raise ValueError("only uncompressed 8-bit TIFF is supported natively")
    offsets, counts = values(273), values(279)
    strip = b"".join(data[o : o + c] for o, c in zip(offsets, counts))
    need = w * h * spp
    if len(strip) < need:
        raise MalformedContainer("TIFF strip data truncated")
    arr = np.frombuffer(strip[:need], dtype=np.uint8)
    return arr.reshape((h, w) if spp == 1 else (h, w, spp)).copy()


def decode_image(data: bytes) -> np.ndarray:
    if data[:2] in (b"P2", b"P3", b"P5", b"P6"):
        return decode_netpbm(data)
    if data[:2] in (b"II", b"MM"):
        try:
            return decode_tiff(data)
        except ValueError:
            pass  # compressed TIFF: let Pillow try
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ValueError("format needs Pillow, which is not installed") from exc
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L" if im.mode in ("L", "1", "P") else "RGB"))


def load_raster(path: str | Path) -> np.ndarray:
    """Grayscale uint8 raster of an image file."""
    return to_gray(decode_image(Path(path).read_bytes()))


def thumbnail_bytes(img: np.ndarray, max_side: int = 24) -> bytes:
    """Small block-averaged preview encoded as binary PGM."""
    gray = to_gray(img)
    h, w = gray.shape
    step = max(1, -(-max(h, w) // max_side))
    hh, ww = h // step, w // step
    blocks = gray[: hh * step, : ww * step].reshape(hh, step, ww, step).astype(np.uint32)
    area = step * step
    small = (blocks.sum(axis=(1, 3)) + area // 2) // area
    return encode_pgm(small.astype(np.uint8))
