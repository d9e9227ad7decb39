"""Virtual-normal loss: L1 gap between plane normals of sampled point triples.

Triples are drawn from ground-truth-valid pixels, rejected when nearly
colinear in 3D or too close in the image, then backprojected through shared
intrinsics for both prediction and ground truth.  Normals are
sign-canonicalized (largest-magnitude component positive, earliest axis on
ties) so the L1 difference is well defined regardless of point order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, absolute, sqrt, take, tensor_sum
from .depth_io import CameraIntrinsics, DepthMap
from .errors import (
    ColinearTripleError,
    EmptyInputError,
    NonPositiveDepthError,
    SamplingExhaustedError,
)

CROSS_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class VnlConfig:
    """Sampling controls for the loss."""

    n_groups: int = 100
    colinearity_threshold: float = 0.15  # min sine of the spanned angle
    min_pixel_distance: float = 2.0
    seed: int = 0
    max_attempts_factor: int = 100

    def __post_init__(self):
        if self.n_groups < 1:
            raise ValueError(f"n_groups must be >= 1, got {self.n_groups}")
        if not 0.0 < self.colinearity_threshold < 1.0:
            raise ValueError(
                f"colinearity threshold must be in (0, 1), got {self.colinearity_threshold}"
            )


@dataclass(frozen=True)
class PointGroup:
    """Three gt-valid pixels with their ground-truth 3D points."""

    pixels: np.ndarray  # int64 (3, 2) as (row, col)
    gt_points: np.ndarray  # float64 (3, 3) camera-frame


def camera_points(
    rows: np.ndarray, cols: np.ndarray, depths: np.ndarray, k: CameraIntrinsics
) -> np.ndarray:
    """Backproject pixels to camera-frame (x, y, z); z is the depth."""
    x = (np.asarray(cols, dtype=np.float64) - k.cx) * depths / k.fx
    y = (np.asarray(rows, dtype=np.float64) - k.cy) * depths / k.fy
    return np.stack([x, y, np.asarray(depths, dtype=np.float64)], axis=-1)


def _canonical_sign(n: np.ndarray) -> np.ndarray:
    """Sign flip factor (+-1) per row so argmax-|component| ends up positive."""
    n = np.atleast_2d(n)
    j = np.argmax(np.abs(n), axis=1)
    lead = n[np.arange(n.shape[0]), j]
    return np.where(lead < 0.0, -1.0, 1.0)


def virtual_normal(p1, p2, p3) -> np.ndarray:
    """Canonicalized unit normal of the plane through three points."""
    p1, p2, p3 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3))
    n = np.cross(p2 - p1, p3 - p1)
    norm = np.linalg.norm(n)
    if norm < CROSS_NORM_FLOOR:
        raise ColinearTripleError(
            f"triple is colinear (cross-product norm {norm:.3e} < {CROSS_NORM_FLOOR})"
        )
    n = n / norm
    return n * _canonical_sign(n)[0]


def group_normals(triples: np.ndarray) -> np.ndarray:
    """Canonicalized unit normals for an (N, 3, 3) array of point triples."""
    triples = np.asarray(triples, dtype=np.float64)
    v1 = triples[:, 1] - triples[:, 0]
    v2 = triples[:, 2] - triples[:, 0]
    n = np.cross(v1, v2)
    norms = np.linalg.norm(n, axis=1)
    if np.any(norms < CROSS_NORM_FLOOR):
        i = int(np.argmin(norms))
        raise ColinearTripleError(
            f"triple {i} is colinear (cross-product norm {norms[i]:.3e})"
        )
    n = n / norms[:, None]
    return n * _canonical_sign(n)[:, None]


def vnl_loss_from_triples(pred_triples: np.ndarray, gt_triples: np.ndarray) -> float:
    """Loss value from explicit point triples (reference path, no gradients)."""
    n_pred = group_normals(pred_triples)
    n_gt = group_normals(gt_triples)
    return float(np.mean(np.sum(np.abs(n_pred - n_gt), axis=1)))


def sample_groups(
    gt: DepthMap, k: CameraIntrinsics, cfg: VnlConfig
) -> list[PointGroup]:
    """Rejection-sample exactly cfg.n_groups non-colinear triples; seeded."""
    rows, cols = np.nonzero(gt.data > 0.0)
    if rows.size < 3:
        raise EmptyInputError(
            f"need at least 3 valid gt pixels to sample triples, have {rows.size}"
        )
    pts = camera_points(rows, cols, gt.data[rows, cols], k)
    rng = np.random.default_rng(cfg.seed)
    budget = cfg.max_attempts_factor * cfg.n_groups
    groups: list[PointGroup] = []
    attempts = 0
    while len(groups) < cfg.n_groups:
        if attempts >= budget:
            raise SamplingExhaustedError(
                f"found {len(groups)}/{cfg.n_groups} valid point groups "
                f"in {attempts} attempts",
                attempts=attempts,
            )
        attempts += 1
        idx = rng.choice(rows.size, size=3, replace=False)
        prc = np.stack([rows[idx], cols[idx]], axis=1)
        d01 = np.hypot(*(prc[0] - prc[1]).astype(np.float64))
        d02 = np.hypot(*(prc[0] - prc[2]).astype(np.float64))
        d12 = np.hypot(*(prc[1] - prc[2]).astype(np.float64))
        if min(d01, d02, d12) < cfg.min_pixel_distance:
            continue
        p = pts[idx]
        v1, v2 = p[1] - p[0], p[2] - p[0]
        cross = np.cross(v1, v2)
        denom = np.linalg.norm(v1) * np.linalg.norm(v2)
        if denom == 0.0 or np.linalg.norm(cross) / denom < cfg.colinearity_threshold:
            continue
        groups.append(PointGroup(pixels=prc.astype(np.int64), gt_points=p))
    return groups


def _gather_corner(pred: Tensor, rows, cols, width: int, k: CameraIntrinsics):
    """Differentiable camera-frame coordinates of one corner across all groups."""
    flat = rows * width + cols
    d = take(pred, flat)
    bad = d.values <= 0.0
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonPositiveDepthError(
            f"predicted depth {d.values[i]} at sampled pixel "
            f"(row={rows[i]}, col={cols[i]}) must be positive"
        )
    px = (cols.astype(np.float64) - k.cx) / k.fx
    py = (rows.astype(np.float64) - k.cy) / k.fy
    return d * px, d * py, d


def vnl_loss(
    pred: Tensor,
    gt: DepthMap,
    k: CameraIntrinsics,
    cfg: VnlConfig,
    groups: list[PointGroup] | None = None,
) -> Tensor:
    """Differentiable mean L1 gap between predicted and gt virtual normals.

    `pred` is a depth tensor of shape (H, W) or (1, H, W) in meters.  Groups
    are fixed by (gt, cfg.seed) unless passed in, so gt normals are constants
    and gradients flow only through the predicted depths.
    """
    if groups is None:
        groups = sample_groups(gt, k, cfg)
    if pred.values.ndim == 3:
        if pred.shape[0] != 1:
            raise ValueError(f"expected single-channel depth, got {pred.shape}")
        height, width = pred.shape[1], pred.shape[2]
    else:
        height, width = pred.shape
    if (height, width) != (gt.height, gt.width):
        raise ValueError(
            f"prediction {width}x{height} does not match gt {gt.width}x{gt.height}"
        )

    pixels = np.stack([g.pixels for g in groups])  # (N, 3, 2)
    gt_normals = group_normals(np.stack([g.gt_points for g in groups]))

    corners = []
    for m in range(3):
        rows = pixels[:, m, 0]
        cols = pixels[:, m, 1]
        corners.append(_gather_corner(pred, rows, cols, width, k))

    (x1, y1, z1), (x2, y2, z2), (x3, y3, z3) = corners
    ax, ay, az = x2 - x1, y2 - y1, z2 - z1
    bx, by, bz = x3 - x1, y3 - y1, z3 - z1
    nx = ay * bz - az * by
    ny = az * bx - ax * bz
    nz = ax * by - ay * bx
    norm_sq = nx * nx + ny * ny + nz * nz
    if np.any(np.sqrt(norm_sq.values) < CROSS_NORM_FLOOR):
        i = int(np.argmin(norm_sq.values))
        raise ColinearTripleError(
            f"predicted triple {i} is colinear (cross-product norm "
            f"{float(np.sqrt(norm_sq.values[i])):.3e})"
        )
    norm = sqrt(norm_sq)
    # sign canonicalization is a piecewise-constant decision made on values
    sign = _canonical_sign(
        np.stack([nx.values, ny.values, nz.values], axis=1) / norm.values[:, None]
    )
    ux = nx / norm * sign
    uy = ny / norm * sign
    uz = nz / norm * sign

    gap = (
        absolute(ux - gt_normals[:, 0])
        + absolute(uy - gt_normals[:, 1])
        + absolute(uz - gt_normals[:, 2])
    )
    return tensor_sum(gap) * (1.0 / len(groups))
