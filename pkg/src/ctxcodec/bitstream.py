"""On-disk container for coded sequences.

Layout (all integers little-endian):
  magic "LSTC" | version u8 | width u16 | height u16 | display_width u16 |
  display_height u16 | frame_count u16 | lambda_index u8
then per frame: type u8 (0 = intra, 1 = inter);
  intra: u32 length + raw 24-bit interleaved RGB of the padded frame;
  inter: four segments (motion hyper, motion, context hyper, context),
         each u32 length + range-coder bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import CorruptionError, FormatError

MAGIC = b"LSTC"
VERSION = 1
SEGMENT_NAMES = ("hyper_motion", "motion", "hyper_context", "context")
_HEADER = struct.Struct("<4sBHHHHHB")


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    display_width: int
    display_height: int
    frame_count: int
    lambda_index: int


@dataclass(frozen=True)
class IntraRecord:
    rgb8: bytes  # padded H*W*3 bytes

    @property
    def payload_bytes(self) -> int:
        return len(self.rgb8)


@dataclass(frozen=True)
class InterRecord:
    segments: tuple[bytes, bytes, bytes, bytes]  # order per SEGMENT_NAMES

    @property
    def payload_bytes(self) -> int:
        return sum(len(s) for s in self.segments)


Record = IntraRecord | InterRecord


def write_sequence(header: StreamHeader, records: list[Record]) -> bytes:
    if len(records) != header.frame_count:
        raise FormatError(f"header declares {header.frame_count} frames, got {len(records)} records")
    out = bytearray(
        _HEADER.pack(
            MAGIC,
            VERSION,
            header.width,
            header.height,
            header.display_width,
            header.display_height,
            header.frame_count,
            header.lambda_index,
        )
    )
    for rec in records:
        if isinstance(rec, IntraRecord):
            out.append(0)
            out += struct.pack("<I", len(rec.rgb8))
            out += rec.rgb8
        else:
            out.append(1)
            for seg in rec.segments:
                out += struct.pack("<I", len(seg))
                out += seg
    return bytes(out)


def read_sequence(data: bytes) -> tuple[StreamHeader, list[Record]]:
    if len(data) < _HEADER.size:
        raise FormatError("container shorter than its header")
    magic, version, w, h, dw, dh, count, lam = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    pos = _HEADER.size
    records: list[Record] = []
    for i in range(count):
        if pos >= len(data):
            raise CorruptionError(f"container truncated before frame {i}")
        ftype = data[pos]
        pos += 1
        if ftype == 0:
            (length,) = _read_u32(data, pos, i)
            pos += 4
            if pos + length > len(data):
                raise CorruptionError(f"intra payload overruns container at frame {i}")
            records.append(IntraRecord(data[pos : pos + length]))
            pos += length
        elif ftype == 1:
            segments = []
            for _ in SEGMENT_NAMES:
                (length,) = _read_u32(data, pos, i)
                pos += 4
                if pos + length > len(data):
                    raise CorruptionError(f"inter segment overruns container at frame {i}")
                segments.append(data[pos : pos + length])
                pos += length
            records.append(InterRecord(tuple(segments)))
        else:
            raise CorruptionError(f"unknown frame type {ftype} at frame {i}")
    if pos != len(data):
        raise CorruptionError(f"{len(data) - pos} trailing bytes after frame {count - 1}")
    return StreamHeader(w, h, dw, dh, count, lam), records


def _read_u32(data: bytes, pos: int, frame: int):
    if pos + 4 > len(data):
        raise CorruptionError(f"container truncated in frame {frame} length prefix")
    return struct.unpack_from("<I", data, pos)


def bpp_of(data: bytes) -> float:
    """Container bits per *display* pixel per frame."""
    header, _ = read_sequence(data)
    pixels = header.display_width * header.display_height * header.frame_count
    return len(data) * 8.0 / pixels
