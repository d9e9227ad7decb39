"""KITTI-style six-metric evaluation over valid ground-truth pixels.

Errors are computed only where ground truth is valid (depth > 0); the
prediction mask is ignored.  `evaluate` is the production path; `evaluate_oracle`
recomputes everything with a naive per-pixel loop and exact summation for
testing.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .depth_io import DepthMap
from .errors import DimensionMismatchError, EmptyInputError, NonPositiveDepthError


@dataclass(frozen=True)
class EvalReport:
    """Six error metrics plus the evaluated pixel count.

    rmse, mae in millimeters; irmse, imae in 1/km; the relative errors in
    percent.
    """

    rmse: float
    mae: float
    irmse: float
    imae: float
    sq_error_rel: float
    abs_error_rel: float
    n_valid: int

    def to_json(self) -> str:
        payload = {"format_version": 1}
        payload.update(asdict(self))
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        payload.pop("format_version", None)
        return cls(**payload)


def _check_pair(pred: DepthMap, gt: DepthMap) -> np.ndarray:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatchError(
            f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    mask = gt.data > 0.0
    if not np.any(mask):
        raise EmptyInputError("ground truth has no valid pixels")
    bad = mask & (pred.data <= 0.0)
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise NonPositiveDepthError(
            f"prediction is {pred.data[r, c]} at gt-valid pixel (row={r}, col={c}); "
            "inverse metrics need strictly positive predictions"
        )
    return mask


def evaluate(pred: DepthMap, gt: DepthMap) -> EvalReport:
    """Compute RMSE, MAE, iRMSE, iMAE, sqErrorRel, absErrorRel over gt-valid pixels.

    Parameters
    ----------
    pred, gt : DepthMap
        Same dimensions; depths in meters.  Pixels invalid in gt are ignored;
        pred must be strictly positive wherever gt is valid.

    Returns
    -------
    EvalReport
        RMSE/MAE in mm, inverse metrics in 1/km, relative metrics in percent.
        sqErrorRel normalizes the squared meter error by gt depth (KITTI
        devkit convention).
    """
    mask = _check_pair(pred, gt)
    d_hat = pred.data[mask]
    d = gt.data[mask]
    diff = d_hat - d
    inv_diff = 1.0 / d_hat - 1.0 / d
    rmse = math.sqrt(float(np.mean(diff**2))) * 1000.0
    mae = float(np.mean(np.abs(diff))) * 1000.0
    irmse = math.sqrt(float(np.mean(inv_diff**2))) * 1000.0
    imae = float(np.mean(np.abs(inv_diff))) * 1000.0
    abs_rel = float(np.mean(np.abs(diff) / d)) * 100.0
    sq_rel = float(np.mean(diff**2 / d)) * 100.0
    return EvalReport(
        rmse=rmse,
        mae=mae,
        irmse=irmse,
        imae=imae,
        sq_error_rel=sq_rel,
        abs_error_rel=abs_rel,
        n_valid=int(diff.size),
    )


def evaluate_oracle(pred: DepthMap, gt: DepthMap) -> EvalReport:
    """Reference implementation: per-pixel Python loop, exact (fsum) accumulation."""
    mask = _check_pair(pred, gt)
    sq, ab, isq, iab, rel_ab, rel_sq = [], [], [], [], [], []
    for r in range(gt.height):
        for c in range(gt.width):
            if not mask[r, c]:
                continue
            d_hat = float(pred.data[r, c])
            d = float(gt.data[r, c])
            e = d_hat - d
            ie = 1.0 / d_hat - 1.0 / d
            sq.append(e * e)
            ab.append(abs(e))
            isq.append(ie * ie)
            iab.append(abs(ie))
            rel_ab.append(abs(e) / d)
            rel_sq.append(e * e / d)
    n = len(sq)
    return EvalReport(
        rmse=math.sqrt(math.fsum(sq) / n) * 1000.0,
        mae=math.fsum(ab) / n * 1000.0,
        irmse=math.sqrt(math.fsum(isq) / n) * 1000.0,
        imae=math.fsum(iab) / n * 1000.0,
        sq_error_rel=math.fsum(rel_sq) / n * 100.0,
        abs_error_rel=math.fsum(rel_ab) / n * 100.0,
        n_valid=n,
    )


def accumulate_pair(
    pred: DepthMap, gt: DepthMap, sums: dict[str, float] | None = None
) -> dict[str, float]:
    """Accumulate per-pixel error sums for pooled multi-file evaluation."""
    mask = _check_pair(pred, gt)
    d_hat = pred.data[mask]
    d = gt.data[mask]
    diff = d_hat - d
    inv_diff = 1.0 / d_hat - 1.0 / d
    if sums is None:
        sums = {k: 0.0 for k in ("sq", "ab", "isq", "iab", "rel_ab", "rel_sq", "n")}
    sums["sq"] += float(np.sum(diff**2))
    sums["ab"] += float(np.sum(np.abs(diff)))
    sums["isq"] += float(np.sum(inv_diff**2))
    sums["iab"] += float(np.sum(np.abs(inv_diff)))
    sums["rel_ab"] += float(np.sum(np.abs(diff) / d))
    sums["rel_sq"] += float(np.sum(diff**2 / d))
    sums["n"] += float(diff.size)
    return sums


def report_from_sums(sums: dict[str, float]) -> EvalReport:
    n = sums["n"]
    if n <= 0:
        raise EmptyInputError("no valid pixels accumulated")
    return EvalReport(
        rmse=math.sqrt(sums["sq"] / n) * 1000.0,
        mae=sums["ab"] / n * 1000.0,
        irmse=math.sqrt(sums["isq"] / n) * 1000.0,
        imae=sums["iab"] / n * 1000.0,
        sq_error_rel=sums["rel_sq"] / n * 100.0,
        abs_error_rel=sums["rel_ab"] / n * 100.0,
        n_valid=int(n),
    )
