"""Minimal EXIF writer: the inverse of :func:`provgraph.metadata.parse_exif`.

Produces an uncompressed TIFF (optionally carrying the raster itself) or a
JPEG with an APP1 EXIF segment. Only the fifteen tracked tags are written.
"""

from __future__ import annotations

import io
import struct
from typing import Optional

import numpy as np

from provgraph import metadata as md
from provgraph.metadata import TagBundle

_Entry = list  # [tag, type, count, payload-bytes]


def _ascii(tag: int, text: str) -> _Entry:
    raw = text.encode("utf-8") + b"\x00"
    return [tag, md.TYPE_ASCII, len(raw), raw]


def _ifd_size(entries: list[_Entry]) -> int:
    size = 2 + 12 * len(entries) + 4
    for e in entries:
        if len(e[3]) > 4:
            size += len(e[3]) + (len(e[3]) & 1)
    return size


def _pack_ifd(entries: list[_Entry], offset: int, next_ifd: int, bo: str) -> bytes:
    entries = sorted(entries, key=lambda e: e[0])
    table = bytearray(struct.pack(bo + "H", len(entries)))
    data = bytearray()
    data_at = offset + 2 + 12 * len(entries) + 4
    for tag, typ, count, payload in entries:
        table += struct.pack(bo + "HHI", tag, typ, count)
        if len(payload) <= 4:
            table += payload.ljust(4, b"\x00")
        else:
            table += struct.pack(bo + "I", data_at + len(data))
            data += payload
            if len(payload) & 1:
                data += b"\x00"
    table += struct.pack(bo + "I", next_ifd)
    return bytes(table + data)


def _tiff(bundle: TagBundle, raster: Optional[np.ndarray], bo: str) -> bytes:
    def long(tag: int, value: int = 0) -> _Entry:
        return [tag, md.TYPE_LONG, 1, struct.pack(bo + "I", value)]

    def short(tag: int, *values: int) -> _Entry:
        return [tag, md.TYPE_SHORT, len(values), struct.pack(bo + f"{len(values)}H", *values)]

    def rationals(tag: int, triple: md.GPSTriple) -> _Entry:
        flat = [v for pair in triple for v in pair]
        return [tag, md.TYPE_RATIONAL, 3, struct.pack(bo + "6I", *flat)]

    ifd0: list[_Entry] = []
    for tag, name in md.IFD0_TEXT_TAGS.items():
        value = getattr(bundle, name)
        if value is not None:
            ifd0.append(_ascii(tag, value))
    if bundle.modify_date is not None:
        ifd0.append(_ascii(md.TAG_MODIFY_DATE, md.format_exif_date(bundle.modify_date)))
    if bundle.image_resources is not None:
        blob = bytes(bundle.image_resources)
        ifd0.append([md.TAG_IMAGE_RESOURCES, md.TYPE_UNDEFINED, len(blob), blob])

    exif: list[_Entry] = []
    for tag, name in md.EXIF_DATE_TAGS.items():
        value = getattr(bundle, name)
        if value is not None:
            exif.append(_ascii(tag, md.format_exif_date(value)))

    gps: list[_Entry] = []
    if bundle.gps_latitude is not None:
        gps.append(_ascii(md.TAG_GPS_LATITUDE_REF, bundle.gps_latitude_ref))
        gps.append(rationals(md.TAG_GPS_LATITUDE, bundle.gps_latitude))
    if bundle.gps_longitude is not None:
        gps.append(_ascii(md.TAG_GPS_LONGITUDE_REF, bundle.gps_longitude_ref))
        gps.append(rationals(md.TAG_GPS_LONGITUDE, bundle.gps_longitude))

    strip = b""
    if raster is not None:
        img = np.ascontiguousarray(raster, dtype=np.uint8)
        h, w = img.shape[:2]
        spp = 1 if img.ndim == 2 else img.shape[2]
        strip = img.tobytes()
        ifd0 += [
            long(256, w),
            long(257, h),
            short(258, *([8] * spp)),
            short(259, 1),
            short(262, 1 if spp == 1 else 2),
            long(273),
            short(277, spp),
            long(278, h),
            long(279, len(strip)),
        ]
    exif_ptr = long(md.TAG_EXIF_IFD) if exif else None
    gps_ptr = long(md.TAG_GPS_IFD) if gps else None
    ifd0 += [e for e in (exif_ptr, gps_ptr) if e is not None]

    ifd1: list[_Entry] = []
    thumb_off = None
    if bundle.thumbnail is not None:
        thumb_off = long(md.TAG_THUMBNAIL_OFFSET)
        ifd1 = [short(259, 6), thumb_off, long(md.TAG_THUMBNAIL_LENGTH, len(bundle.thumbnail))]

    # layout: header, IFD0, Exif IFD, GPS IFD, IFD1, thumbnail, strip
    pos = 8
    at_ifd0 = pos
    pos += _ifd_size(ifd0)
    at_exif = pos
    pos += _ifd_size(exif) if exif else 0
    at_gps = pos
    pos += _ifd_size(gps) if gps else 0
    at_ifd1 = pos
    pos += _ifd_size(ifd1) if ifd1 else 0
    at_thumb = pos
    pos += len(bundle.thumbnail or b"")
    pos += pos & 1
    at_strip = pos

    if exif_ptr is not None:
        exif_ptr[3] = struct.pack(bo + "I", at_exif)
    if gps_ptr is not None:
        gps_ptr[3] = struct.pack(bo + "I", at_gps)
    if thumb_off is not None:
        thumb_off[3] = struct.pack(bo + "I", at_thumb)
    if raster is not None:
        for e in ifd0:
            if e[0] == 273:
                e[3] = struct.pack(bo + "I", at_strip)

    out = bytearray(b"II" if bo == "<" else b"MM")
    out += struct.pack(bo + "HI", 42, at_ifd0)
    out += _pack_ifd(ifd0, at_ifd0, at_ifd1 if ifd1 else 0, bo)
    if exif:
        out += _pack_ifd(exif, at_exif, 0, bo)
    if gps:
        out += _pack_ifd(gps, at_gps, 0, bo)
    if ifd1:
        out += _pack_ifd(ifd1, at_ifd1, 0, bo)
    out += bundle.thumbnail or b""
    if len(out) & 1:
        out += b"\x00"
    assert len(out) == at_strip
    out += strip
    return bytes(out)


def write_exif(
    bundle: TagBundle,
    base_image: Optional[np.ndarray] = None,
    fmt: str = "tiff",
    byteorder: str = "<",
) -> bytes:
    """Serialize ``bundle`` so that ``parse_exif`` gives it back unchanged.

    ``fmt="tiff"`` embeds ``base_image`` as an uncompressed strip (the file is
    then a readable image); ``fmt="jpeg"`` encodes the raster with Pillow and
    inserts the EXIF block as an APP1 segment.
    """
    if fmt == "tiff":
        return _tiff(bundle, base_image, byteorder)
    if fmt != "jpeg":
        raise ValueError(f"unknown format {fmt!r}")
    from PIL import Image

    block = b"Exif\x00\x00" + _tiff(bundle, None, byteorder)
    if len(block) + 2 > 0xFFFF:
        raise ValueError("EXIF block too large for a single APP1 segment")
    img = base_image if base_image is not None else np.zeros((8, 8), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="JPEG", quality=95)
    jpeg = buf.getvalue()
    app1 = b"\xff\xe1" + struct.pack(">H", len(block) + 2) + block
    return jpeg[:2] + app1 + jpeg[2:]
