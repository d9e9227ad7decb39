"""Content-adaptive upsampling: per-position fusion kernels predicted from features.

Two branches: a kernel-generation branch (1x1 compression, 3x3 kernel
prediction, pixel shuffle, per-position softmax) and a reassembly branch
(nearest-neighbor upsample, dilated K x K gather with replicate padding,
inner product with the predicted kernel, final 1x1 projection).  Every output
position's K^2 kernel weights are nonnegative and sum to one, so reassembly
of a constant map returns that constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Conv2d, Module, Tensor, pixel_shuffle
from .autodiff.ops import _pad_values, _unpad_grad, channel_softmax, nearest_upsample
from .autodiff.tensor import make_op


@dataclass(frozen=True)
class UpsampleConfig:
    """Channel/kernel geometry; c_mid defaults to max(1, c_in // 4)."""

    c_in: int
    c_out: int
    kernel: int = 5
    scale: int = 2
    c_mid: int | None = None

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {self.kernel}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.c_mid is not None and self.c_mid < 1:
            raise ValueError(f"c_mid must be >= 1, got {self.c_mid}")

    @property
    def mid_channels(self) -> int:
        if self.c_mid is not None:
            return self.c_mid
        return max(1, self.c_in // 4)


def kernel_reassembly(
    up: Tensor, kernels: Tensor, kernel: int, scale: int, pad_mode: str = "replicate"
) -> Tensor:
    """Fuse each output position's dilated K x K neighborhood with its kernel.

    `up` is the already-upsampled (C, SH, SW) feature; `kernels` is
    (K^2, SH, SW).  The window is taken in `up` with dilation `scale`; the
    same kernel serves every channel at a position.
    """
    k, s = int(kernel), int(scale)
    c, sh, sw = up.shape
    if kernels.shape != (k * k, sh, sw):
        raise ValueError(
            f"kernel_reassembly: kernels shape {kernels.shape} != ({k * k}, {sh}, {sw})"
        )
    r = (k // 2) * s
    padded = _pad_values(up.values, r, r, pad_mode)
    out = np.zeros((c, sh, sw), dtype=np.float64)
    for t in range(k * k):
        i, j = divmod(t, k)
        seg = padded[:, i * s : i * s + sh, j * s : j * s + sw]
        out += seg * kernels.values[t]

    def vjp(g):
        dk = np.empty((k * k, sh, sw), dtype=np.float64)
        dpad = np.zeros_like(padded)
        for t in range(k * k):
            i, j = divmod(t, k)
            seg = padded[:, i * s : i * s + sh, j * s : j * s + sw]
            dk[t] = np.sum(g * seg, axis=0)
            dpad[:, i * s : i * s + sh, j * s : j * s + sw] += g * kernels.values[t]
        dup = _unpad_grad(dpad, sh, sw, r, r, pad_mode)
        return (dup, dk)

    return make_op("kernel_reassembly", out, (up, kernels), vjp)


class GuidedUpsampler(Module):
    """Upsample (c_in, H, W) to (c_out, S*H, S*W) with content-predicted kernels."""

    def __init__(
        self,
        config: UpsampleConfig,
        rng: np.random.Generator,
        pad_mode: str = "replicate",
    ):
        cfg = config
        self.config = cfg
        self.pad_mode = pad_mode
        self.compress = Conv2d(cfg.c_in, cfg.mid_channels, 1, rng)
        # predicts S^2 * K^2 logits per coarse position, spread by pixel shuffle
        self.kernel_conv = Conv2d(
            cfg.mid_channels, cfg.scale**2 * cfg.kernel**2, 3, rng, padding=1
        )
        self.project = Conv2d(cfg.c_in, cfg.c_out, 1, rng)

    def generate_kernels(self, x: Tensor) -> Tensor:
        """(c_in, H, W) -> (K^2, S*H, S*W) nonnegative kernels summing to 1."""
        logits = self.kernel_conv(self.compress(x))
        spread = pixel_shuffle(logits, self.config.scale)
        return channel_softmax(spread)

    def reassemble_features(self, x: Tensor, kernels: Tensor) -> Tensor:
        """Kernel-weighted gather before the final projection; keeps c_in channels."""
        up = nearest_upsample(x, self.config.scale)
        return kernel_reassembly(
            up, kernels, self.config.kernel, self.config.scale, self.pad_mode
        )

    def reassemble(self, x: Tensor, kernels: Tensor) -> Tensor:
        return self.project(self.reassemble_features(x, kernels))

    def __call__(self, x: Tensor) -> Tensor:
        return self.reassemble(x, self.generate_kernels(x))


def check_kernels(kernels: np.ndarray, tol: float = 1e-12) -> bool:
    """True when all entries are nonnegative and each position sums to 1 +- tol."""
    if np.any(kernels < 0.0):
        return False
    sums = kernels.sum(axis=0)
    return bool(np.all(np.abs(sums - 1.0) <= tol))
