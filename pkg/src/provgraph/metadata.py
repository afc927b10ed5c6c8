"""Per-image metadata: EXIF parsing, JSON sidecars and harvested post dates.

Every source is reduced to a :class:`TagBundle`, the fifteen tag values the
provenance heuristics look at. Unknown tags are ignored everywhere.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import logging
import struct
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from provgraph.errors import DanglingParent, EmptyCollection, MalformedContainer, SchemaError

logger = logging.getLogger(__name__)

# Standard TIFF/EXIF tag ids, keyed by where they live.
TAG_PROCESSING_SOFTWARE = 0x000B
TAG_MAKE = 0x010F
TAG_MODEL = 0x0110
TAG_SOFTWARE = 0x0131
TAG_MODIFY_DATE = 0x0132  # "DateTime" in the TIFF baseline
TAG_ARTIST = 0x013B
TAG_HOST_COMPUTER = 0x013C
TAG_IMAGE_RESOURCES = 0x8649  # Photoshop image resource block
TAG_EXIF_IFD = 0x8769
TAG_GPS_IFD = 0x8825
TAG_DATE_TIME_ORIGINAL = 0x9003
TAG_CREATE_DATE = 0x9004  # "DateTimeDigitized"
TAG_GPS_LATITUDE_REF = 0x0001
TAG_GPS_LATITUDE = 0x0002
TAG_GPS_LONGITUDE_REF = 0x0003
TAG_GPS_LONGITUDE = 0x0004
TAG_THUMBNAIL_OFFSET = 0x0201  # JPEGInterchangeFormat, IFD1
TAG_THUMBNAIL_LENGTH = 0x0202  # JPEGInterchangeFormatLength, IFD1

IFD0_TEXT_TAGS = {
    TAG_PROCESSING_SOFTWARE: "processing_software",
    TAG_MAKE: "make",
    TAG_MODEL: "model",
    TAG_SOFTWARE: "software",
    TAG_ARTIST: "artist",
    TAG_HOST_COMPUTER: "host_computer",
}
EXIF_DATE_TAGS = {
    TAG_DATE_TIME_ORIGINAL: "date_time_original",
    TAG_CREATE_DATE: "create_date",
}

EXIF_DATE_FORMAT = "%Y:%m:%d %H:%M:%S"

# TIFF field type -> byte size
TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8, 13: 4}
TYPE_BYTE, TYPE_ASCII, TYPE_SHORT, TYPE_LONG, TYPE_RATIONAL, TYPE_UNDEFINED = 1, 2, 3, 4, 5, 7

Rational = tuple[int, int]
GPSTriple = tuple[Rational, Rational, Rational]


class Source(str, enum.Enum):
    EMBEDDED = "embedded"
    SIDECAR = "sidecar"
    HARVESTED = "harvested"


@dataclass(frozen=True)
class TagBundle:
    """The metadata tags of one image.

    Location fields come in (value, ref) pairs; a half-present pair is
    dropped on construction so consumers never see partial GPS data.
    """

    date_time_original: Optional[datetime] = None
    modify_date: Optional[datetime] = None
    create_date: Optional[datetime] = None
    gps_latitude: Optional[GPSTriple] = None
    gps_latitude_ref: Optional[str] = None
    gps_longitude: Optional[GPSTriple] = None
    gps_longitude_ref: Optional[str] = None
    make: Optional[str] = None
    model: Optional[str] = None
    software: Optional[str] = None
    processing_software: Optional[str] = None
    artist: Optional[str] = None
    host_computer: Optional[str] = None
    image_resources: Optional[bytes] = None
    thumbnail: Optional[bytes] = None
    source: Source = field(default=Source.EMBEDDED)

    def __post_init__(self) -> None:
        for value, ref, allowed in (
            ("gps_latitude", "gps_latitude_ref", ("N", "S")),
            ("gps_longitude", "gps_longitude_ref", ("E", "W")),
        ):
            v, r = getattr(self, value), getattr(self, ref)
            if v is None or r is None or r not in allowed:
                object.__setattr__(self, value, None)
                object.__setattr__(self, ref, None)
        object.__setattr__(self, "source", Source(self.source))

    def present(self) -> tuple[str, ...]:
        return tuple(name for name in TAG_FIELDS if getattr(self, name) is not None)

    def stripped(self) -> "TagBundle":
        return TagBundle(source=self.source)


TAG_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(TagBundle) if f.name != "source")

# Sidecar / ExifTool labels for each field.
LABELS = {
    "date_time_original": "DateTimeOriginal",
    "modify_date": "ModifyDate",
    "create_date": "CreateDate",
    "gps_latitude": "GPSLatitude",
    "gps_latitude_ref": "GPSLatitudeRef",
    "gps_longitude": "GPSLongitude",
    "gps_longitude_ref": "GPSLongitudeRef",
    "make": "Make",
    "model": "Model",
    "software": "Software",
    "processing_software": "ProcessingSoftware",
    "artist": "Artist",
    "host_computer": "HostComputer",
    "image_resources": "ImageResources",
    "thumbnail": "ThumbnailImage",
}
DATE_FIELDS = ("date_time_original", "modify_date", "create_date")
GPS_FIELDS = ("gps_latitude", "gps_longitude")
REF_FIELDS = ("gps_latitude_ref", "gps_longitude_ref")
TEXT_FIELDS = ("make", "model", "software", "processing_software", "artist", "host_computer")
BINARY_FIELDS = ("image_resources", "thumbnail")


def parse_exif_date(text: str) -> Optional[datetime]:
    try:
        return datetime.strptime(text.strip(), EXIF_DATE_FORMAT)
    except ValueError:
        return None


def format_exif_date(value: datetime) -> str:
    return value.strftime(EXIF_DATE_FORMAT)


# --------------------------------------------------------------------------
# binary EXIF


def _tiff_from_jpeg(data: bytes) -> bytes:
    pos = 2
    n = len(data)
    while pos + 4 <= n:
        if data[pos] != 0xFF:
            break
        marker = data[pos + 1]
        if marker == 0xFF:
            pos += 1
            continue
        if marker == 0x01 or 0xD0 <= marker <= 0xD7:
            pos += 2
            continue
        if marker in (0xD9, 0xDA):
            break
        (length,) = struct.unpack_from(">H", data, pos + 2)
        if length < 2 or pos + 2 + length > n:
            break
        if marker == 0xE1 and data[pos + 4 : pos + 10] == b"Exif\x00\x00":
            return data[pos + 10 : pos + 2 + length]
        pos += 2 + length
    raise MalformedContainer("no EXIF APP1 segment")


class _TiffReader:
    def __init__(self, tiff: bytes) -> None:
        if len(tiff) < 8:
            raise MalformedContainer("truncated TIFF header")
        order = tiff[:2]
        if order == b"II":
            self.endian = "<"
        elif order == b"MM":
            self.endian = ">"
        else:
            raise MalformedContainer("bad byte-order mark")
        magic, ifd0 = struct.unpack_from(self.endian + "HI", tiff, 2)
        if magic != 42:
            raise MalformedContainer("bad TIFF magic")
        self.tiff = tiff
        self.ifd0 = ifd0

    def ifd(self, offset: int, strict: bool = False) -> tuple[dict[int, tuple[int, int, bytes]], int]:
        """Entries of the IFD at ``offset`` plus the next-IFD offset.

        Out-of-range IFDs raise when ``strict``, otherwise read as empty.
        Individual entries whose data falls outside the buffer are skipped.
        """
        t = self.tiff
        if offset < 8 or offset + 2 > len(t):
            if strict:
                raise MalformedContainer(f"IFD offset {offset} out of bounds")
            return {}, 0
        (count,) = struct.unpack_from(self.endian + "H", t, offset)
        end = offset + 2 + 12 * count
        if end > len(t):
            if strict:
                raise MalformedContainer("IFD runs past end of data")
            return {}, 0
        entries: dict[int, tuple[int, int, bytes]] = {}
        for k in range(count):
            tag, typ, n = struct.unpack_from(self.endian + "HHI", t, offset + 2 + 12 * k)
            size = TYPE_SIZES.get(typ)
            if size is None:
                continue
            nbytes = size * n
            raw_at = offset + 2 + 12 * k + 8
            if nbytes <= 4:
                payload = t[raw_at : raw_at + nbytes]
            else:
                (ptr,) = struct.unpack_from(self.endian + "I", t, raw_at)
                if ptr + nbytes > len(t):
                    continue
                payload = t[ptr : ptr + nbytes]
            entries[tag] = (typ, n, payload)
        nxt = 0
        if end + 4 <= len(t):
            (nxt,) = struct.unpack_from(self.endian + "I", t, end)
        return entries, nxt

    def uint(self, entry: Optional[tuple[int, int, bytes]]) -> Optional[int]:
        if entry is None:
            return None
        typ, n, payload = entry
        if n < 1:
            return None
        if typ == TYPE_SHORT:
            return struct.unpack_from(self.endian + "H", payload)[0]
        if typ in (TYPE_LONG, 13):
            return struct.unpack_from(self.endian + "I", payload)[0]
        return None

    def text(self, entry: Optional[tuple[int, int, bytes]]) -> Optional[str]:
        if entry is None or entry[0] != TYPE_ASCII:
            return None
        raw = entry[2].split(b"\x00", 1)[0]
        if not raw:
            return None
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            return raw.decode("latin-1")

    def triple(self, entry: Optional[tuple[int, int, bytes]]) -> Optional[GPSTriple]:
        if entry is None or entry[0] != TYPE_RATIONAL or entry[1] != 3:
            return None
        vals = struct.unpack(self.endian + "6I", entry[2])
        pairs = tuple((vals[i], vals[i + 1]) for i in range(0, 6, 2))
        if any(den == 0 for _, den in pairs):
            return None
        return pairs  # type: ignore[return-value]

    def blob(self, entry: Optional[tuple[int, int, bytes]]) -> Optional[bytes]:
        if entry is None or entry[0] not in (TYPE_BYTE, TYPE_UNDEFINED) or not entry[2]:
            return None
        return bytes(entry[2])


def parse_exif(file_bytes: bytes) -> TagBundle:
    """Extract the target tags from a JPEG (APP1) or bare TIFF stream.

    Raises:
        MalformedContainer: no EXIF segment, bad TIFF header, or IFD0 out
            of bounds. Problems inside individual tags only blank those tags.
    """
    data = bytes(file_bytes)
    if data[:2] == b"\xff\xd8":
        tiff = _tiff_from_jpeg(data)
    elif data[:2] in (b"II", b"MM"):
        tiff = data
    else:
        raise MalformedContainer("neither JPEG nor TIFF")
    r = _TiffReader(tiff)
    ifd0, ifd1_offset = r.ifd(r.ifd0, strict=True)

    values: dict[str, object] = {}
    for tag, name in IFD0_TEXT_TAGS.items():
        values[name] = r.text(ifd0.get(tag))
    modify = r.text(ifd0.get(TAG_MODIFY_DATE))
    values["modify_date"] = parse_exif_date(modify) if modify else None
    values["image_resources"] = r.blob(ifd0.get(TAG_IMAGE_RESOURCES))

    exif_ptr = r.uint(ifd0.get(TAG_EXIF_IFD))
    if exif_ptr:
        exif, _ = r.ifd(exif_ptr)
        for tag, name in EXIF_DATE_TAGS.items():
            s = r.text(exif.get(tag))
            values[name] = parse_exif_date(s) if s else None

    gps_ptr = r.uint(ifd0.get(TAG_GPS_IFD))
    if gps_ptr:
        gps, _ = r.ifd(gps_ptr)
        values["gps_latitude"] = r.triple(gps.get(TAG_GPS_LATITUDE))
        values["gps_latitude_ref"] = r.text(gps.get(TAG_GPS_LATITUDE_REF))
        values["gps_longitude"] = r.triple(gps.get(TAG_GPS_LONGITUDE))
        values["gps_longitude_ref"] = r.text(gps.get(TAG_GPS_LONGITUDE_REF))

    if ifd1_offset and ifd1_offset != r.ifd0:
        ifd1, _ = r.ifd(ifd1_offset)
        off = r.uint(ifd1.get(TAG_THUMBNAIL_OFFSET))
        length = r.uint(ifd1.get(TAG_THUMBNAIL_LENGTH))
        if off is not None and length and off + length <= len(tiff):
            values["thumbnail"] = tiff[off : off + length]

    return TagBundle(source=Source.EMBEDDED, **values)  # type: ignore[arg-type]


def read_bundle(path: str | Path) -> TagBundle:
    """Embedded metadata of a file; containers without EXIF give an empty bundle."""
    data = Path(path).read_bytes()
    try:
        return parse_exif(data)
    except MalformedContainer as exc:
        logger.warning("%s: no usable embedded metadata (%s)", path, exc)
        return TagBundle(source=Source.EMBEDDED)


# --------------------------------------------------------------------------
# sidecars


def _sidecar_rational(value: object, key: str) -> Rational:
    if isinstance(value, bool):
        raise SchemaError(f"{key}: boolean is not a number")
    if isinstance(value, int):
        if value < 0:
            raise SchemaError(f"{key}: negative component")
        return (value, 1)
    if isinstance(value, float):
        if value < 0 or value != value:
            raise SchemaError(f"{key}: invalid component {value!r}")
        frac = Fraction(repr(value))
        return (frac.numerator, frac.denominator)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in value)
        and value[1] != 0
    ):
        return (value[0], value[1])
    raise SchemaError(f"{key}: expected number or [num, den], got {value!r}")


def load_sidecar(json_text: str) -> TagBundle:
    """Parse one sidecar JSON object keyed by EXIF labels."""
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unparseable sidecar: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("sidecar must be a JSON object")
    values: dict[str, object] = {}
    for name, label in LABELS.items():
        if label not in doc or doc[label] is None:
            continue
        raw = doc[label]
        if name in DATE_FIELDS:
            if not isinstance(raw, str):
                raise SchemaError(f"{label}: expected date string")
            parsed = parse_exif_date(raw)
            if parsed is None:
                raise SchemaError(f"{label}: bad date {raw!r}")
            values[name] = parsed
        elif name in GPS_FIELDS:
            if not isinstance(raw, list) or len(raw) != 3:
                raise SchemaError(f"{label}: expected 3 components")
            values[name] = tuple(_sidecar_rational(v, label) for v in raw)
        elif name in REF_FIELDS:
            allowed = ("N", "S") if name == "gps_latitude_ref" else ("E", "W")
            if raw not in allowed:
                raise SchemaError(f"{label}: expected one of {allowed}")
            values[name] = raw
        elif name in TEXT_FIELDS:
            if not isinstance(raw, str):
                raise SchemaError(f"{label}: expected string")
            if raw:
                values[name] = raw
        else:
            if not isinstance(raw, str):
                raise SchemaError(f"{label}: expected base64 string")
            text = raw[len("base64:") :] if raw.startswith("base64:") else raw
            try:
                blob = base64.b64decode(text, validate=True)
            except binascii.Error as exc:
                raise SchemaError(f"{label}: invalid base64") from exc
            if blob:
                values[name] = blob
    return TagBundle(source=Source.SIDECAR, **values)  # type: ignore[arg-type]


def dump_sidecar(bundle: TagBundle) -> str:
    doc: dict[str, object] = {}
    for name in TAG_FIELDS:
        value = getattr(bundle, name)
        if value is None:
            continue
        label = LABELS[name]
        if name in DATE_FIELDS:
            doc[label] = format_exif_date(value)
        elif name in GPS_FIELDS:
            doc[label] = [list(pair) for pair in value]
        elif name in BINARY_FIELDS:
            doc[label] = "base64:" + base64.b64encode(value).decode("ascii")
        else:
            doc[label] = value
    return json.dumps(doc, sort_keys=True)


# --------------------------------------------------------------------------
# harvested post metadata


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    author: str
    submitted_at: datetime
    image_ref: str
    parent_post_id: Optional[str] = None


def parse_rfc3339(text: str) -> datetime:
    s = text.strip()
    if s[-1:] in ("Z", "z"):
        s = s[:-1] + "+00:00"
    return datetime.fromisoformat(s)


def load_posts(json_text: str) -> list[PostRecord]:
    """Read a JSON array of post records."""
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unparseable post list: {exc}") from exc
    if not isinstance(doc, list):
        raise SchemaError("post records must be a JSON array")
    records = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            raise SchemaError(f"record {i} is not an object")
        try:
            parent = item.get("parent_post_id")
            if parent is not None and not isinstance(parent, str):
                raise SchemaError(f"record {i}: parent_post_id must be a string")
            for key in ("post_id", "author", "submitted_at", "image_ref"):
                if not isinstance(item[key], str):
                    raise SchemaError(f"record {i}: {key} must be a string")
            records.append(
                PostRecord(
                    post_id=item["post_id"],
                    author=item["author"],
                    submitted_at=parse_rfc3339(item["submitted_at"]),
                    image_ref=item["image_ref"],
                    parent_post_id=parent,
                )
            )
        except KeyError as exc:
            raise SchemaError(f"record {i}: missing {exc.args[0]}") from exc
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"record {i}: bad timestamp") from exc
    return records


def _calendar(ts: datetime) -> datetime:
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts.replace(microsecond=0)


def harvest_posts(records: Iterable[PostRecord]) -> dict[str, TagBundle]:
    """Upload times of posted images, used as their DateTimeOriginal.

    An image posted more than once keeps its earliest time.
    """
    records = list(records)
    if not records:
        raise EmptyCollection("no post records")
    known = {r.post_id for r in records}
    for r in records:
        if r.parent_post_id is not None and r.parent_post_id not in known:
            raise DanglingParent(f"post {r.post_id} replies to unknown {r.parent_post_id}")
    earliest: dict[str, datetime] = {}
    for r in records:
        ts = _calendar(r.submitted_at)
        if r.image_ref not in earliest or ts < earliest[r.image_ref]:
            earliest[r.image_ref] = ts
    return {
        ref: TagBundle(date_time_original=ts, source=Source.HARVESTED)
        for ref, ts in sorted(earliest.items())
    }


def merge_bundles(primary: TagBundle, fallback: TagBundle) -> TagBundle:
    """Fill primary's absent fields from ``fallback``; keeps primary's source."""
    updates = {
        name: getattr(fallback, name)
        for name in TAG_FIELDS
        if getattr(primary, name) is None and getattr(fallback, name) is not None
    }
    return replace(primary, **updates) if updates else primary
