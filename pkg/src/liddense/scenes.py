"""Procedural desk-scale scenes: a ground plane plus a few frontal boxes.

Ground truth is an analytic dense depth map; the RGB image is flat-shaded
with distinct per-surface albedos, so color discontinuities line up with
depth discontinuities.  The sparse input is the gt masked to a single scan
line via the same machinery the dataset converter uses, with the line
interval rescaled to the scene's vertical field of view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth_io import CameraIntrinsics, DepthMap
from .scanline import assign_lines, backproject, extract_depthmap, vertical_angle


@dataclass(frozen=True)
class Scene:
    rgb: np.ndarray  # float64 (3, H, W) in [0, 1]
    sparse: DepthMap
    gt: DepthMap
    intrinsics: CameraIntrinsics


def _single_line_mask(gt: DepthMap, k: CameraIntrinsics, levels: int = 64) -> DepthMap:
    """Keep the scan line passing through a reference pixel below the horizon.

    The interval is rescaled to the scene's vertical field of view; at desk
    resolutions the 64 lines oversample the rows, so the kept line is the one
    owning a fixed anchor pixel (which crosses ground/box content) rather
    than a hardcoded index that may fall between rows.
    """
    cloud = backproject(gt, k)
    theta = vertical_angle(cloud.points)
    theta_top = float(theta.max())
    span = float(theta.max() - theta.min())
    interval = max(span / levels, 1e-9)
    assign = assign_lines(cloud, theta_top=theta_top, interval=interval, levels=levels)
    anchor_row = (3 * gt.height) // 5
    anchor_col = gt.width // 2
    on_anchor = (assign.pixel[:, 0] == anchor_row) & (assign.pixel[:, 1] == anchor_col)
    line = int(assign.line_index[np.argmax(on_anchor)])
    return extract_depthmap(gt, assign, {line})


def make_synthetic_scene(seed: int, height: int = 32, width: int = 32) -> Scene:
    """Deterministic scene for the given seed; height and width divisible by 4."""
    if height % 4 or width % 4:
        raise ValueError(f"scene dims must be divisible by 4, got {height}x{width}")
    rng = np.random.default_rng(seed)
    k = CameraIntrinsics(
        fx=float(width), fy=float(width), cx=(width - 1) / 2.0, cy=(height - 1) / 2.0
    )

    d_bg = rng.uniform(30.0, 50.0)
    cam_height = rng.uniform(1.2, 1.8)
    depth = np.full((height, width), d_bg, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    below = rows > k.cy
    ground = np.where(below, k.fy * cam_height / np.maximum(rows - k.cy, 1e-9), d_bg)
    depth[:] = np.minimum(depth, ground[:, None])

    rgb = np.empty((3, height, width), dtype=np.float64)
    sky = np.array([0.55, 0.70, 0.90])
    ground_color = np.array([0.35, 0.30, 0.25])
    rgb[:] = sky[:, None, None]
    shade = 1.0 - 0.3 * (rows - k.cy) / height  # mild vertical gradient on the ground
    for ch in range(3):
        rgb[ch][below] = (ground_color[ch] * shade[:, None] * np.ones(width))[below]

    n_boxes = int(rng.integers(1, 4))
    for _ in range(n_boxes):
        bw = int(rng.integers(max(2, width // 5), max(3, width // 2)))
        bh = int(rng.integers(max(2, height // 5), max(3, height // 2)))
        u0 = int(rng.integers(0, width - bw + 1))
        v0 = int(rng.integers(0, height - bh + 1))
        d_box = float(rng.uniform(2.5, 25.0))
        albedo = rng.uniform(0.1, 0.9, size=3)
        region = np.zeros((height, width), dtype=bool)
        region[v0 : v0 + bh, u0 : u0 + bw] = True
        closer = region & (d_box < depth)
        depth[closer] = d_box
        for ch in range(3):
            rgb[ch][closer] = albedo[ch]

    gt = DepthMap.from_array(depth)
    sparse = _single_line_mask(gt, k)
    return Scene(rgb=rgb, sparse=sparse, gt=gt, intrinsics=k)
