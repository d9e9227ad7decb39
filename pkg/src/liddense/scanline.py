"""Scan-line decimation: turn a 64-line depth map into an N-line one.

The pipeline backprojects every valid pixel to a 3D point, computes its
vertical angle in a z-up sensor frame, quantizes the angle into line bins,
then keeps only the pixels whose line index is in the requested set.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depth_io import (
    CameraIntrinsics,
    DepthMap,
    decode_depth_png,
    encode_depth_png,
    load_calibration,
    sparsity,
    valid_mask,
)
from .errors import EmptyInputError, GeometryDomainError, LidDenseError

# Velodyne HDL-64E upper field-of-view bound, degrees.
DEFAULT_THETA_TOP = 2.0
DEFAULT_INTERVAL = 0.4
DEFAULT_LEVELS = 64
# Middle line of 64: the {31, 32} tie is fixed to the lower index.
MIDDLE_LINE = 31


@dataclass(frozen=True)
class PointCloud:
    """Sensor-frame points (z up) with per-point pixel provenance."""

    points: np.ndarray  # float64, shape (n, 3)
    pixel: np.ndarray  # int64, shape (n, 2) as (row, col)
    depth: np.ndarray  # float64, shape (n,) original depth per point

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ScanLineAssignment:
    """Per-point quantized line index and the vertical angle it came from."""

    line_index: np.ndarray  # int64 in [0, levels-1], shape (n,)
    theta: np.ndarray  # float64 degrees, shape (n,)
    levels: int
    pixel: np.ndarray  # int64, shape (n, 2); copied from the source cloud


def backproject(depth_map: DepthMap, k: CameraIntrinsics) -> PointCloud:
    """Lift every valid pixel to a sensor-frame 3D point.

    Camera frame: x_c=(u-cx)*d/fx, y_c=(v-cy)*d/fy, z_c=d.  The sensor frame
    is (x, y, z) = (z_c, -x_c, -y_c) so z points up and the vertical-angle
    formula applies directly.
    """
    mask = valid_mask(depth_map)
    if not np.any(mask):
        raise EmptyInputError("depth map has no valid pixels to backproject")
    rows, cols = np.nonzero(mask)
    d = depth_map.data[rows, cols]
    x_c = (cols - k.cx) * d / k.fx
    y_c = (rows - k.cy) * d / k.fy
    points = np.stack([d, -x_c, -y_c], axis=1)
    pixel = np.stack([rows, cols], axis=1).astype(np.int64)
    return PointCloud(points=points, pixel=pixel, depth=d)


def vertical_angle(points: np.ndarray) -> np.ndarray:
    """Vertical angle arcsin(z / |p|) in degrees for (..., 3) points."""
    points = np.asarray(points, dtype=np.float64)
    norms = np.linalg.norm(points, axis=-1)
    if np.any(norms == 0.0):
        raise GeometryDomainError("vertical angle undefined for zero-norm point")
    return np.degrees(np.arcsin(points[..., 2] / norms))


def assign_lines(
    cloud: PointCloud,
    theta_top: float = DEFAULT_THETA_TOP,
    interval: float = DEFAULT_INTERVAL,
    levels: int = DEFAULT_LEVELS,
) -> ScanLineAssignment:
    """Quantize vertical angles into `levels` bins of `interval` degrees.

    line = clamp(floor((theta_top - theta) / interval), 0, levels - 1);
    line 0 is the topmost (largest theta) line.  Out-of-range angles are
    clamped so every point lands on some line.
    """
    if interval <= 0:
        raise ValueError(f"interval must be positive, got {interval}")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    theta = vertical_angle(cloud.points)
    idx = np.floor((theta_top - theta) / interval).astype(np.int64)
    idx = np.clip(idx, 0, levels - 1)
    return ScanLineAssignment(
        line_index=idx, theta=theta, levels=levels, pixel=cloud.pixel.copy()
    )


def select_lines(
    assign: ScanLineAssignment,
    mode: str,
    explicit: list[int] | None = None,
    middle_index: int = MIDDLE_LINE,
) -> set[int]:
    """Resolve a selection mode to a set of line indices.

    mode "single" -> {middle_index}; "sixteen" -> {0, 4, ..., 60} scaled to
    `levels`; "explicit" -> the given list (validated against [0, levels-1]).
    """
    levels = assign.levels
    if mode == "single":
        if not 0 <= middle_index < levels:
            raise ValueError(f"middle index {middle_index} outside [0, {levels - 1}]")
        return {middle_index}
    if mode == "sixteen":
        return set(range(0, levels, 4))
    if mode == "explicit":
        lines = set(int(i) for i in (explicit or []))
        bad = [i for i in lines if not 0 <= i < levels]
        if bad:
            raise ValueError(f"explicit line indices {bad} outside [0, {levels - 1}]")
        return lines
    raise ValueError(f"unknown selection mode {mode!r}")


def extract_depthmap(
    depth_map: DepthMap, assign: ScanLineAssignment, lines: set[int]
) -> DepthMap:
    """Keep only pixels whose assigned line index is in `lines`.

    Depth values are copied unchanged; everything else becomes invalid.
    """
    out = np.zeros((depth_map.height, depth_map.width), dtype=np.float64)
    if lines:
        keep = np.isin(assign.line_index, list(lines))
        rows = assign.pixel[keep, 0]
        cols = assign.pixel[keep, 1]
        out[rows, cols] = depth_map.data[rows, cols]
    return DepthMap.from_array(out)


def resolve_theta_top(cloud: PointCloud, theta_top: float | str) -> float:
    """Fixed angle in degrees, or "auto" = the largest observed angle."""
    if theta_top == "auto":
        return float(np.max(vertical_angle(cloud.points)))
    return float(theta_top)


def convert_frame(
    depth_map: DepthMap,
    k: CameraIntrinsics,
    mode: str,
    explicit: list[int] | None = None,
    theta_top: float | str = DEFAULT_THETA_TOP,
    interval: float = DEFAULT_INTERVAL,
    levels: int = DEFAULT_LEVELS,
    middle_index: int = MIDDLE_LINE,
) -> DepthMap:
    """Full single-frame pipeline: backproject, assign, select, extract."""
    cloud = backproject(depth_map, k)
    top = resolve_theta_top(cloud, theta_top)
    assign = assign_lines(cloud, theta_top=top, interval=interval, levels=levels)
    lines = select_lines(assign, mode, explicit=explicit, middle_index=middle_index)
    return extract_depthmap(depth_map, assign, lines)


@dataclass
class ConversionSummary:
    """Outcome of a dataset conversion run."""

    n_files: int = 0
    n_failed: int = 0
    mean_sparsity_before: float = 0.0
    mean_sparsity_after: float = 0.0
    failures: list[tuple[str, str]] = field(default_factory=list)  # (file, error)

    @property
    def ok(self) -> bool:
        return self.n_failed == 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": 1,
                "n_files": self.n_files,
                "n_failed": self.n_failed,
                "mean_sparsity_before": self.mean_sparsity_before,
                "mean_sparsity_after": self.mean_sparsity_after,
                "failures": [{"file": f, "error": e} for f, e in self.failures],
            },
            indent=2,
        )


def _thread_cap() -> int:
    raw = os.environ.get("LIDDENSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def convert_dataset(
    in_dir: str | Path,
    calib: str | Path | CameraIntrinsics,
    out_dir: str | Path,
    mode: str,
    explicit: list[int] | None = None,
    theta_top: float | str = DEFAULT_THETA_TOP,
    interval: float = DEFAULT_INTERVAL,
    levels: int = DEFAULT_LEVELS,
    middle_index: int = MIDDLE_LINE,
) -> ConversionSummary:
    """Convert every depth PNG under `in_dir`, writing same-named outputs.

    Per-file errors are collected and the run continues; the summary's `ok`
    flag is false if any file failed.  Results are deterministic given the
    inputs regardless of the LIDDENSE_THREADS cap.
    """
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise LidDenseError(f"input directory {in_dir} does not exist")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not isinstance(calib, CameraIntrinsics):
        calib = load_calibration(calib)
    k = calib
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".png")

    def process(path: Path) -> tuple[float, float]:
        src = decode_depth_png(path.read_bytes())
        dst = convert_frame(
            src,
            k,
            mode,
            explicit=explicit,
            theta_top=theta_top,
            interval=interval,
            levels=levels,
            middle_index=middle_index,
        )
        (out_dir / path.name).write_bytes(encode_depth_png(dst))
        return sparsity(src), sparsity(dst)

    summary = ConversionSummary(n_files=len(files))
    results: list[tuple[float, float] | None] = [None] * len(files)
    workers = min(_thread_cap(), max(1, len(files)))

    def run_one(i: int) -> None:
        try:
            results[i] = process(files[i])
        except LidDenseError as exc:
            summary.failures.append((files[i].name, str(exc)))

    if workers == 1:
        for i in range(len(files)):
            run_one(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_one, range(len(files))))
        # map preserves submission order for results; failures may interleave
        summary.failures.sort()

    done = [r for r in results if r is not None]
    summary.n_failed = len(summary.failures)
    if done:
        summary.mean_sparsity_before = float(np.mean([b for b, _ in done]))
        summary.mean_sparsity_after = float(np.mean([a for _, a in done]))
    return summary
