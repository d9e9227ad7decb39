"""Desk-scale two-branch depth completion network, fusion rule, and losses.

The global branch encodes RGB and sparse depth separately (late fusion),
decodes through two guided upsamplers, and emits a depth, a confidence, and a
feature map that seeds the local branch.  The local branch runs two stacked
plain encoder-decoders over the sparse depth plus that feature.  The final
depth is the per-pixel confidence-softmax blend of the two branch depths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ChannelAffine,
    Conv2d,
    DownsampleConcat,
    Module,
    NonBottleneck1d,
    Tensor,
    TransposedConv2d,
    concat,
    exp,
    relu,
    softplus,
    tensor_sum,
)
from .depth_io import CameraIntrinsics, DepthMap
from .errors import EmptyInputError
from .vnl import PointGroup, VnlConfig, sample_groups, vnl_loss

# Strictly positive floor for depth heads; keeps inverse metrics finite even
# for saturated-negative head activations.
DEPTH_FLOOR_M = 1e-3

GLOBAL_FEATURE_CHANNELS = 8


@dataclass
class NetworkOutputs:
    """The five maps of one forward pass plus the fused result."""

    d_global: Tensor
    c_global: Tensor
    global_feature: Tensor
    d_local: Tensor
    c_local: Tensor
    d_final: Tensor


def fuse(d_global: Tensor, c_global: Tensor, d_local: Tensor, c_local: Tensor) -> Tensor:
    """Confidence-softmax blend of two depth maps.

    d_final = (e^{cg} * dg + e^{cl} * dl) / (e^{cg} + e^{cl}), computed with
    an overflow-safe shift by the per-pixel max confidence (the shift cancels
    exactly, so gradients are unaffected).
    """
    for t in (c_global, d_local, c_local):
        if t.shape != d_global.shape:
            raise ValueError(
                f"fuse: shape mismatch {d_global.shape} vs {t.shape}"
            )
    m = np.maximum(c_global.values, c_local.values)
    wg = exp(c_global - m)
    wl = exp(c_local - m)
    return (wg * d_global + wl * d_local) / (wg + wl)


class _LocalStack(Module):
    """Plain conv encoder / transposed-conv decoder with a skip connection."""

    def __init__(self, c_in: int, width: int, rng: np.random.Generator):
        self.enc1 = Conv2d(c_in, width, 3, rng, stride=2, padding=1)
        self.enc2 = Conv2d(width, 2 * width, 3, rng, stride=2, padding=1)
        self.dec1 = TransposedConv2d(2 * width, width, 2, rng, stride=2)
        self.dec2 = TransposedConv2d(width, width, 2, rng, stride=2)

    def __call__(self, x: Tensor, inject: Tensor | None = None) -> Tensor:
        e1 = relu(self.enc1(x))
        if inject is not None:
            e1 = e1 + inject
        e2 = relu(self.enc2(e1))
        u1 = relu(self.dec1(e2)) + e1
        return self.dec2(u1)


class _Encoder(Module):
    """Two downsample stages with residual 1d-factorized blocks (widths 8, 16)."""

    def __init__(self, c_in: int, rng: np.random.Generator, w1: int = 8, w2: int = 16):
        self.down1 = DownsampleConcat(c_in, w1, rng)
        self.aff1 = ChannelAffine(w1)
        self.block1 = NonBottleneck1d(w1, rng)
        self.down2 = DownsampleConcat(w1, w2, rng)
        self.aff2 = ChannelAffine(w2)
        self.block2 = NonBottleneck1d(w2, rng)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        s1 = self.block1(relu(self.aff1(self.down1(x))))
        s2 = self.block2(relu(self.aff2(self.down2(s1))))
        return s1, s2


class TwoBranchNet(Module):
    """Two-branch completion network over (3, H, W) RGB and (1, H, W) sparse depth.

    H and W must be divisible by 4 (two downsampling stages).
    """

    def __init__(self, seed: int = 0, width: int = 8):
        from .guided_upsample import GuidedUpsampler, UpsampleConfig

        rng = np.random.default_rng(seed)
        w1, w2 = width, 2 * width
        self.rgb_encoder = _Encoder(3, rng, w1, w2)
        self.depth_encoder = _Encoder(1, rng, w1, w2)
        self.bottleneck = Conv2d(2 * w2, w2, 1, rng)
        self.bottleneck_aff = ChannelAffine(w2)
        self.bottleneck_block = NonBottleneck1d(w2, rng)
        self.up1 = GuidedUpsampler(UpsampleConfig(c_in=w2, c_out=w2), rng)
        self.dec_block = NonBottleneck1d(w2, rng)
        self.up2 = GuidedUpsampler(UpsampleConfig(c_in=w2, c_out=w1), rng)
        self.head_depth = Conv2d(w1, 1, 1, rng)
        self.head_conf = Conv2d(w1, 1, 1, rng)
        self.head_feat = Conv2d(w1, GLOBAL_FEATURE_CHANNELS, 1, rng)
        self.local1 = _LocalStack(1 + GLOBAL_FEATURE_CHANNELS, w1, rng)
        self.local2 = _LocalStack(w1, w1, rng)
        self.head_local_depth = Conv2d(w1, 1, 1, rng)
        self.head_local_conf = Conv2d(w1, 1, 1, rng)

    def __call__(self, rgb: Tensor, sparse: Tensor) -> NetworkOutputs:
        if rgb.values.ndim != 3 or rgb.shape[0] != 3:
            raise ValueError(f"expected (3, H, W) rgb, got {rgb.shape}")
        if sparse.values.ndim != 3 or sparse.shape[0] != 1:
            raise ValueError(f"expected (1, H, W) sparse depth, got {sparse.shape}")
        if rgb.shape[1:] != sparse.shape[1:]:
            raise ValueError(
                f"rgb {rgb.shape} and sparse {sparse.shape} spatial sizes differ"
            )
        h, w = rgb.shape[1], rgb.shape[2]
        if h % 4 or w % 4:
            raise ValueError(f"spatial dims must be divisible by 4, got {h}x{w}")

        _, rgb_s2 = self.rgb_encoder(rgb)
        dep_s1, dep_s2 = self.depth_encoder(sparse)
        z = relu(self.bottleneck_aff(self.bottleneck(concat([rgb_s2, dep_s2]))))
        z = self.bottleneck_block(z)
        y = self.dec_block(self.up1(z))
        y = self.up2(y)
        d_global = softplus(self.head_depth(y)) + DEPTH_FLOOR_M
        c_global = self.head_conf(y)
        feature = self.head_feat(y)

        # the global depth-encoder's first-stage feature is injected additively
        # after the first local downsampling
        t = relu(self.local1(concat([sparse, feature]), inject=dep_s1))
        t = relu(self.local2(t) + t)
        d_local = softplus(self.head_local_depth(t)) + DEPTH_FLOOR_M
        c_local = self.head_local_conf(t)

        d_final = fuse(d_global, c_global, d_local, c_local)
        return NetworkOutputs(
            d_global=d_global,
            c_global=c_global,
            global_feature=feature,
            d_local=d_local,
            c_local=c_local,
            d_final=d_final,
        )


def mse_loss(pred: Tensor, gt: DepthMap) -> Tensor:
    """Mean squared meter-error over gt-valid pixels only."""
    mask = (gt.data > 0.0).astype(np.float64)
    n = float(mask.sum())
    if n == 0:
        raise EmptyInputError("ground truth has no valid pixels")
    if pred.values.ndim == 3:
        mask = mask[None]
    if pred.shape != mask.shape:
        raise ValueError(f"prediction {pred.shape} does not match gt mask {mask.shape}")
    diff = pred - gt.data.reshape(mask.shape)
    return tensor_sum(diff * diff * mask) * (1.0 / n)


@dataclass
class LossBreakdown:
    """Scalar values of every loss term for one prediction set."""

    l_mse: float
    l_vn: float
    l_final_out: float
    l_final_global: float
    l_final_local: float
    l_total: float
    lam: float
    w1: float
    w2: float
    total: Tensor  # differentiable handle for backward


def final_loss(
    pred: Tensor,
    gt: DepthMap,
    k: CameraIntrinsics,
    lam: float,
    vnl_cfg: VnlConfig,
    groups: list[PointGroup] | None = None,
) -> tuple[Tensor, float, float]:
    """Combined term mse + lam * vnl; returns (tensor, mse value, vnl value)."""
    m = mse_loss(pred, gt)
    if lam == 0.0:
        return m, m.item(), 0.0
    v = vnl_loss(pred, gt, k, vnl_cfg, groups=groups)
    return m + lam * v, m.item(), v.item()


def total_loss(
    outputs: NetworkOutputs,
    gt: DepthMap,
    k: CameraIntrinsics,
    lam: float = 100.0,
    w1: float = 0.1,
    w2: float = 0.1,
    vnl_cfg: VnlConfig | None = None,
    groups: list[PointGroup] | None = None,
) -> LossBreakdown:
    """Supervise the fused output plus both branches with shared point groups.

    total = final(d_final) + w1 * final(d_global) + w2 * final(d_local), where
    every final term uses the same gt, mask, and sampled groups.
    """
    vnl_cfg = vnl_cfg or VnlConfig()
    if groups is None and lam != 0.0:
        groups = sample_groups(gt, k, vnl_cfg)
    t_out, mse_out, vn_out = final_loss(outputs.d_final, gt, k, lam, vnl_cfg, groups)
    t_glob, _, _ = final_loss(outputs.d_global, gt, k, lam, vnl_cfg, groups)
    t_loc, _, _ = final_loss(outputs.d_local, gt, k, lam, vnl_cfg, groups)
    total = t_out + w1 * t_glob + w2 * t_loc
    return LossBreakdown(
        l_mse=mse_out,
        l_vn=vn_out,
        l_final_out=t_out.item(),
        l_final_global=t_glob.item(),
        l_final_local=t_loc.item(),
        l_total=total.item(),
        lam=lam,
        w1=w1,
        w2=w2,
        total=total,
    )
