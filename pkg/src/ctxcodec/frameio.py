"""Frame ingestion: raw YCbCr / RGB sources, color conversion, padding, crops.

Frames are stored planar float32 in [0, 1]. The codec itself only ever sees
dimensions that are multiples of 16; `display_height`/`display_width` remember
the pre-padding size so metrics and output run on the real picture.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ConfigError
from .errors import DataError, DimensionError

# BT.709 limited-range constants (8-bit): Kr/Kb with luma excursion 219
# offset 16 and chroma excursion 224 offset 128.
_KR, _KB = 0.2126, 0.0722
_KG = 1.0 - _KR - _KB

SUPPORTED_FORMATS = ("yuv420", "rgb8")


@dataclass
class Frame:
    """One RGB picture; `pixels` is (3, H, W) float32 in [0, 1]."""

    pixels: np.ndarray
    display_height: int
    display_width: int

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise DimensionError(f"expected (3, H, W) pixel array, got {self.pixels.shape}")
        if self.display_height > self.height or self.display_width > self.width:
            raise DimensionError("display size cannot exceed stored size")

    @staticmethod
    def from_array(pixels: np.ndarray) -> "Frame":
        pixels = np.asarray(pixels, dtype=np.float32)
        return Frame(pixels, pixels.shape[1], pixels.shape[2])


@dataclass(frozen=True)
class SequenceSpec:
    """Where a sequence lives and how to read it."""

    source: Path
    fmt: str
    width: int
    height: int
    frames: int

    def __post_init__(self):
        if self.fmt not in SUPPORTED_FORMATS:
            raise ConfigError(f"unknown format {self.fmt!r}; expected one of {SUPPORTED_FORMATS}")
        if self.frames < 1:
            raise ConfigError("frame count must be >= 1")

    @staticmethod
    def from_config(cfg: dict[str, str], base: Path | None = None) -> "SequenceSpec":
        try:
            source = Path(cfg["source"])
            fmt = cfg["format"]
            width = int(cfg["width"])
            height = int(cfg["height"])
            frames = int(cfg["frames"])
        except KeyError as e:
            raise ConfigError(f"missing config key {e.args[0]!r}") from None
        except ValueError as e:
            raise ConfigError(f"bad numeric config value: {e}") from None
        if base is not None and not source.is_absolute():
            source = base / source
        return SequenceSpec(source, fmt, width, height, frames)


def bt709_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> Frame:
    """Convert limited-range 8-bit BT.709 4:2:0 planes to an RGB frame.

    Chroma is bilinearly upsampled with co-sited top-left siting; output is
    clamped to [0, 1].
    """
    h, w = y.shape
    if cb.shape != cr.shape or cb.shape != ((h + 1) // 2, (w + 1) // 2):
        raise DimensionError(
            f"chroma planes {cb.shape}/{cr.shape} do not match half of luma {y.shape}"
        )
    yf = (y.astype(np.float64) - 16.0) / 219.0
    cbf = _upsample_chroma(cb.astype(np.float64) - 128.0, h, w) / 224.0
    crf = _upsample_chroma(cr.astype(np.float64) - 128.0, h, w) / 224.0

    r = yf + 2.0 * (1.0 - _KR) * crf
    b = yf + 2.0 * (1.0 - _KB) * cbf
    g = yf - (2.0 * _KB * (1.0 - _KB) / _KG) * cbf - (2.0 * _KR * (1.0 - _KR) / _KG) * crf

    rgb = np.stack([r, g, b]).clip(0.0, 1.0).astype(np.float32)
    return Frame.from_array(rgb)


def _upsample_chroma(plane: np.ndarray, h: int, w: int) -> np.ndarray:
    # Co-sited top-left: chroma sample (i, j) sits at luma (2i, 2j); odd luma
    # rows/columns interpolate between neighbours, clamped at the far edge.
    ch, cw = plane.shape
    rows = np.empty((h, cw), dtype=plane.dtype)
    rows[0::2] = plane[: (h + 1) // 2]
    lo = plane[: h // 2]
    hi = plane[np.minimum(np.arange(h // 2) + 1, ch - 1)]
    rows[1::2] = 0.5 * (lo + hi)
    out = np.empty((h, w), dtype=plane.dtype)
    out[:, 0::2] = rows[:, : (w + 1) // 2]
    lo = rows[:, : w // 2]
    hi = rows[:, np.minimum(np.arange(w // 2) + 1, cw - 1)]
    out[:, 1::2] = 0.5 * (lo + hi)
    return out


def rgb_to_bt709(frame: Frame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact inverse matrix (float planes, full luma grid, no subsampling).

    Used by round-trip checks and the raw-video writer in tests; values are
    unclamped analog Y'CbCr scaled back to 8-bit code levels.
    """
    r, g, b = frame.pixels.astype(np.float64)
    yf = _KR * r + _KG * g + _KB * b
    cbf = (b - yf) / (2.0 * (1.0 - _KB))
    crf = (r - yf) / (2.0 * (1.0 - _KR))
    return yf * 219.0 + 16.0, cbf * 224.0 + 128.0, crf * 224.0 + 128.0


def pad_to_multiple16(frame: Frame) -> Frame:
    """Replicate-pad right/bottom to the next multiples of 16."""
    h, w = frame.height, frame.width
    ph = (-h) % 16
    pw = (-w) % 16
    if ph == 0 and pw == 0:
        return frame
    pixels = np.pad(frame.pixels, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return replace(frame, pixels=pixels)


def crop_to_display(frame: Frame) -> Frame:
    """Inverse of pad_to_multiple16."""
    h, w = frame.display_height, frame.display_width
    return Frame(frame.pixels[:, :h, :w], h, w)


def crop_random_patch(frames: list[Frame], size: int, rng: np.random.Generator) -> list[Frame]:
    """Crop the same random size×size window out of every frame of a clip."""
    if not frames:
        return []
    h, w = frames[0].height, frames[0].width
    for f in frames:
        if (f.height, f.width) != (h, w):
            raise DimensionError("all frames of a clip must share dimensions")
    if size > h or size > w:
        raise DimensionError(f"crop size {size} exceeds frame size {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return [Frame(f.pixels[:, top : top + size, left : left + size], size, size) for f in frames]


def load_sequence(spec: SequenceSpec, n: int) -> list[Frame]:
    """Read the first n frames in decode order, converted to RGB, display-sized."""
    if n > spec.frames:
        raise DataError(f"requested {n} frames but spec declares {spec.frames}")
    if spec.fmt == "yuv420":
        return _load_yuv420(spec, n)
    return _load_rgb_dir(spec, n)


def _load_yuv420(spec: SequenceSpec, n: int) -> list[Frame]:
    w, h = spec.width, spec.height
    ysize = w * h
    csize = ((w + 1) // 2) * ((h + 1) // 2)
    frame_bytes = ysize + 2 * csize
    path = spec.source
    if not path.is_file():
        raise DataError(f"missing source file: {path}")
    frames = []
    with open(path, "rb") as f:
        for i in range(n):
            buf = f.read(frame_bytes)
            if len(buf) < frame_bytes:
                raise DataError(f"truncated YCbCr file {path} at frame {i}")
            y = np.frombuffer(buf, np.uint8, ysize).reshape(h, w)
            cb = np.frombuffer(buf, np.uint8, csize, ysize).reshape((h + 1) // 2, (w + 1) // 2)
            cr = np.frombuffer(buf, np.uint8, csize, ysize + csize).reshape(cb.shape)
            frames.append(bt709_to_rgb(y, cb, cr))
    return frames


def _load_rgb_dir(spec: SequenceSpec, n: int) -> list[Frame]:
    path = spec.source
    if not path.is_dir():
        raise DataError(f"missing source directory: {path}")
    names = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".ppm", ".jpg", ".jpeg", ".bmp"))
    if len(names) < n:
        raise DataError(f"directory {path} holds {len(names)} frames, {n} requested (frame {len(names)})")
    frames = []
    for i in range(n):
        with Image.open(names[i]) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        if arr.shape[:2] != (spec.height, spec.width):
            raise DataError(f"frame {i} is {arr.shape[1]}x{arr.shape[0]}, spec says {spec.width}x{spec.height}")
        frames.append(Frame.from_array(arr.transpose(2, 0, 1)))
    return frames
