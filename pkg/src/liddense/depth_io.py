"""Depth-map and RGB raster I/O in the KITTI on-disk convention.

Depth is stored on disk as 16-bit grayscale PNG where ``depth_m = raw / 256``
and raw 0 marks an invalid pixel.  In memory depth lives in 64-bit floats so
metric math downstream is oracle-grade; file I/O stays 16-bit.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CalibrationError,
    DepthFormatError,
    DepthRangeError,
    DimensionMismatchError,
)

# Largest depth the DepthMap type tolerates, in meters.
MAX_DEPTH_M = 655.35
# Largest depth the 16-bit /256 encoding can hold, in meters (raw 65535).
MAX_ENCODABLE_M = 65535 / 256.0

_DEPTH_SCALE = 256.0
_16BIT_MODES = ("I;16", "I;16B", "I;16L", "I")


@dataclass(frozen=True)
class DepthMap:
    """Single-channel depth raster in meters; 0.0 marks an invalid pixel."""

    width: int
    height: int
    data: np.ndarray  # float64, shape (height, width)

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.shape != (self.height, self.width):
            raise DimensionMismatchError(
                f"data shape {data.shape} does not match "
                f"(height, width)=({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(data)):
            raise DepthRangeError("depth map contains non-finite values")
        if np.any(data < 0.0):
            raise DepthRangeError("depth map contains negative values")
        if np.any(data > MAX_DEPTH_M):
            raise DepthRangeError(
                f"depth map contains values above the {MAX_DEPTH_M} m ceiling"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "DepthMap":
        data = np.asarray(data, dtype=np.float64)
        return cls(width=data.shape[1], height=data.shape[0], data=data)


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster."""

    width: int
    height: int
    data: np.ndarray  # uint8, shape (height, width, 3)

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.uint8))
        if data.shape != (self.height, self.width, 3):
            raise DimensionMismatchError(
                f"RGB data shape {data.shape} does not match "
                f"(height, width, 3)=({self.height}, {self.width}, 3)"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "RgbImage":
        data = np.asarray(data)
        return cls(width=data.shape[1], height=data.shape[0], data=data)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise CalibrationError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )


def decode_depth_png(data: bytes) -> DepthMap:
    """Decode a 16-bit grayscale PNG into a DepthMap.

    Parameters
    ----------
    data : bytes
        PNG file contents.  Raw value 0 maps to invalid (0.0 m); any other
        raw value v maps to v / 256 meters.

    Returns
    -------
    DepthMap
        Float64 depth raster in meters.

    Raises
    ------
    DepthFormatError
        If the bytes are not a well-formed PNG, not 16-bit, or not
        single-channel.  The message names the violated property.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DepthFormatError(f"malformed PNG: {exc}") from exc
    if img.format != "PNG":
        raise DepthFormatError(f"expected PNG data, got format {img.format!r}")
    if img.mode in ("RGB", "RGBA", "P", "LA"):
        raise DepthFormatError(
            f"wrong channel count: expected single-channel 16-bit, got mode {img.mode!r}"
        )
    if img.mode not in _16BIT_MODES:
        raise DepthFormatError(
            f"wrong bit depth: expected 16-bit grayscale, got mode {img.mode!r}"
        )
    raw = np.asarray(img)
    if raw.ndim != 2:
        raise DepthFormatError(
            f"wrong channel count: expected 2-d raster, got shape {raw.shape}"
        )
    if np.any(raw < 0) or np.any(raw > 65535):
        raise DepthFormatError("raw values outside the 16-bit range")
    depth = raw.astype(np.float64) / _DEPTH_SCALE
    return DepthMap.from_array(depth)


def encode_depth_png(depth_map: DepthMap) -> bytes:
    """Encode a DepthMap as 16-bit grayscale PNG bytes (raw = round(depth*256)).

    Raises
    ------
    DepthRangeError
        If any depth rounds above the 16-bit ceiling; the message names the
        offending (row, col).
    """
    raw = np.rint(depth_map.data * _DEPTH_SCALE)
    over = raw > 65535
    if np.any(over):
        r, c = np.argwhere(over)[0]
        raise DepthRangeError(
            f"depth {depth_map.data[r, c]} m at pixel (row={r}, col={c}) "
            f"overflows the 16-bit /256 encoding (max {MAX_ENCODABLE_M} m)"
        )
    img = Image.fromarray(raw.astype(np.uint16))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def valid_mask(depth_map: DepthMap) -> np.ndarray:
    """Boolean raster, true exactly where depth > 0."""
    return depth_map.data > 0.0


def sparsity(depth_map: DepthMap) -> float:
    """Fraction of valid pixels."""
    return float(np.count_nonzero(valid_mask(depth_map))) / (
        depth_map.width * depth_map.height
    )


# Palettes map t in [0, 1] (0 = nearest valid depth) to an RGB triple.
# "warmcool" runs warm (near) to cool (far) through a perceptually ordered ramp.
_PALETTES = {
    "warmcool": [
        (255, 0, 0),
        (255, 255, 0),
        (0, 255, 0),
        (0, 255, 255),
        (0, 0, 255),
    ],
    "gray": [(255, 255, 255), (0, 0, 0)],
}


def palette_names() -> list[str]:
    return sorted(_PALETTES)


def _palette_eval(name: str, t: np.ndarray) -> np.ndarray:
    """Vectorized palette lookup: t array in [0, 1] -> uint8 array (..., 3)."""
    if name not in _PALETTES:
        raise KeyError(f"unknown palette {name!r}; known: {palette_names()}")
    stops = np.asarray(_PALETTES[name], dtype=np.float64)
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    xs = np.linspace(0.0, 1.0, len(stops))
    channels = [np.interp(t, xs, stops[:, ch]) for ch in range(3)]
    return np.rint(np.stack(channels, axis=-1)).astype(np.uint8)


def palette_color(name: str, t: float) -> tuple[int, int, int]:
    """Evaluate palette `name` at t in [0, 1] by linear interpolation."""
    rgb = _palette_eval(name, np.asarray(float(t)))
    return tuple(int(v) for v in rgb)


def overlay(rgb: RgbImage, depth_map: DepthMap, colormap: str = "warmcool") -> RgbImage:
    """Overlay valid depth pixels on an RGB image using a named palette.

    Valid pixels are replaced by the colormapped depth (near=warm, far=cool);
    invalid pixels pass the RGB through untouched.
    """
    if (rgb.height, rgb.width) != (depth_map.height, depth_map.width):
        raise DimensionMismatchError(
            f"RGB {rgb.width}x{rgb.height} vs depth "
            f"{depth_map.width}x{depth_map.height}"
        )
    mask = valid_mask(depth_map)
    out = np.array(rgb.data, copy=True)
    if not np.any(mask):
        return RgbImage.from_array(out)
    depths = depth_map.data[mask]
    d_min, d_max = depths.min(), depths.max()
    span = d_max - d_min
    t = np.zeros_like(depths) if span == 0.0 else (depths - d_min) / span
    out[mask] = _palette_eval(colormap, t)
    return RgbImage.from_array(out)


def decode_rgb_png(data: bytes) -> RgbImage:
    """Decode an 8-bit RGB PNG."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DepthFormatError(f"malformed PNG: {exc}") from exc
    if img.mode != "RGB":
        img = img.convert("RGB")
    return RgbImage.from_array(np.asarray(img, dtype=np.uint8))


def encode_rgb_png(rgb: RgbImage) -> bytes:
    img = Image.fromarray(np.asarray(rgb.data))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def load_calibration(path: str | Path) -> CameraIntrinsics:
    """Read `fx fy cx cy` (whitespace-separated, one line) from a text file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CalibrationError(f"cannot read calibration file {path}: {exc}") from exc
    fields = text.split()
    if len(fields) != 4:
        raise CalibrationError(
            f"calibration file {path} must hold exactly 4 numbers "
            f"(fx fy cx cy), found {len(fields)} fields"
        )
    try:
        fx, fy, cx, cy = (float(f) for f in fields)
    except ValueError as exc:
        raise CalibrationError(f"calibration file {path}: {exc}") from exc
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy)
