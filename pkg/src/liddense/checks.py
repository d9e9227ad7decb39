"""Named finite-difference checks over every differentiable building block.

Each check builds a small seeded random instance, reduces its output to a
scalar through a fixed random projection (so wrong gradient routing cannot
hide in a uniform reduction), and compares analytic gradients against central
differences.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    ChannelAffine,
    Conv2d,
    DownsampleConcat,
    NonBottleneck1d,
    Tensor,
    TransposedConv2d,
    absolute,
    channel_softmax,
    concat,
    conv2d,
    exp,
    log,
    maxpool2d,
    nearest_upsample,
    pixel_shuffle,
    relu,
    softplus,
    sqrt,
    take,
    tensor_sum,
    transposed_conv2d,
)
from .autodiff.gradcheck import GradcheckReport, gradcheck
from .guided_upsample import GuidedUpsampler, UpsampleConfig, kernel_reassembly
from .network import TwoBranchNet, fuse, mse_loss, total_loss
from .scenes import make_synthetic_scene
from .vnl import VnlConfig, sample_groups, vnl_loss


def _proj(rng, shape) -> np.ndarray:
    return rng.normal(size=shape)


def _check_elementwise(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    y = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    p = _proj(rng, (3, 4))

    def f():
        z = (x * y + x / y - y) * p
        z = z + exp(x * 0.3) + log(y) + sqrt(x) + absolute(x - y)
        z = z + softplus(x - 1.0) + relu(y - 1.0) + x**2
        return tensor_sum(z)

    return gradcheck(f, [("x", x), ("y", y)], h=h)


def _check_conv2d(seed: int, h: float) -> GradcheckReport:
    # rectangular kernel with asymmetric zero padding, then strided follow-ups
    # under both padding modes
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 6, 7)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 2)) * 0.5, requires_grad=True)
    b = Tensor(rng.normal(size=(3,)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(2, 3, 2, 2)) * 0.5, requires_grad=True)
    p1 = _proj(rng, (2, 4, 4))
    p2 = _proj(rng, (2, 3, 3))

    def f():
        a = conv2d(x, w, b, stride=1, padding=(1, 0), pad_mode="zero")  # (3, 6, 6)
        r1 = conv2d(a, w2, None, stride=2, padding=1, pad_mode="replicate")  # (2, 4, 4)
        r2 = conv2d(a, w2, None, stride=2, padding=0, pad_mode="zero")  # (2, 3, 3)
        return tensor_sum(r1 * p1) + tensor_sum(r2 * p2)

    return gradcheck(f, [("x", x), ("w", w), ("b", b), ("w2", w2)], h=h)


def _check_transposed_conv2d(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(3, 4, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 3, 2, 2)) * 0.5, requires_grad=True)
    b = Tensor(rng.normal(size=(2,)), requires_grad=True)
    w3 = Tensor(rng.normal(size=(2, 3, 3, 3)) * 0.5, requires_grad=True)
    p = _proj(rng, (2, 8, 10))
    p3 = _proj(rng, (2, 9, 11))

    def f():
        y = transposed_conv2d(x, w, b, stride=2)
        z = transposed_conv2d(x, w3, None, stride=2)
        return tensor_sum(y * p) + tensor_sum(z * p3)

    return gradcheck(f, [("x", x), ("w", w), ("b", b), ("w3", w3)], h=h)


def _check_maxpool2d(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    p = _proj(rng, (2, 3, 3))
    p2 = _proj(rng, (2, 2, 2))

    def f():
        return tensor_sum(maxpool2d(x, 2, 2) * p) + tensor_sum(
            maxpool2d(x, 3, 2) * p2
        )

    return gradcheck(f, [("x", x)], h=h)


def _check_nearest_upsample(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    p = _proj(rng, (2, 6, 8))

    def f():
        return tensor_sum(nearest_upsample(x, 2) * p)

    return gradcheck(f, [("x", x)], h=h)


def _check_pixel_shuffle(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(8, 3, 3)), requires_grad=True)
    p = _proj(rng, (2, 6, 6))

    def f():
        return tensor_sum(pixel_shuffle(x, 2) * p)

    return gradcheck(f, [("x", x)], h=h)


def _check_channel_softmax(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(5, 3, 3)) * 2.0, requires_grad=True)
    p = _proj(rng, (5, 3, 3))

    def f():
        return tensor_sum(channel_softmax(x) * p)

    return gradcheck(f, [("x", x)], h=h)


def _check_channel_affine(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    aff = ChannelAffine(3)
    aff.gamma.values[:] = rng.normal(size=3)
    aff.beta.values[:] = rng.normal(size=3)
    x = Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True)
    p = _proj(rng, (3, 4, 4))

    def f():
        return tensor_sum(aff(x) * p)

    return gradcheck(f, [("x", x)] + list(aff.named_parameters()), h=h)


def _check_concat_take(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
    y = Tensor(rng.normal(size=(1, 3, 3)), requires_grad=True)
    idx = rng.integers(0, 27, size=10)  # repeated indices exercise scatter-add
    p = _proj(rng, (10,))

    def f():
        return tensor_sum(take(concat([x, y]), idx) * p)

    return gradcheck(f, [("x", x), ("y", y)], h=h)


def _check_nonbottleneck1d(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    block = NonBottleneck1d(3, rng)
    x = Tensor(rng.normal(size=(3, 5, 5)), requires_grad=True)
    p = _proj(rng, (3, 5, 5))

    def f():
        return tensor_sum(block(x) * p)

    return gradcheck(f, [("x", x)] + list(block.named_parameters()), h=h)


def _check_downsample_concat(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    block = DownsampleConcat(2, 5, rng)
    x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    p = _proj(rng, (5, 3, 3))

    def f():
        return tensor_sum(block(x) * p)

    return gradcheck(f, [("x", x)] + list(block.named_parameters()), h=h)


def _check_kernel_reassembly(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    up = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    logits = rng.normal(size=(9, 6, 6))
    kern = np.exp(logits) / np.exp(logits).sum(axis=0, keepdims=True)
    kernels = Tensor(kern, requires_grad=True)
    p = _proj(rng, (2, 6, 6))

    def f():
        return tensor_sum(kernel_reassembly(up, kernels, kernel=3, scale=2) * p)

    return gradcheck(f, [("up", up), ("kernels", kernels)], h=h)


def _check_guided_upsample(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    module = GuidedUpsampler(UpsampleConfig(c_in=2, c_out=2, kernel=5, scale=2), rng)
    x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    p = _proj(rng, (2, 12, 12))

    def f():
        return tensor_sum(module(x) * p)

    return gradcheck(f, [("x", x)] + list(module.named_parameters()), h=h)


def _check_fuse(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    dg = Tensor(rng.uniform(1.0, 10.0, size=(1, 4, 4)), requires_grad=True)
    dl = Tensor(rng.uniform(1.0, 10.0, size=(1, 4, 4)), requires_grad=True)
    cg = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    cl = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    p = _proj(rng, (1, 4, 4))

    def f():
        return tensor_sum(fuse(dg, cg, dl, cl) * p)

    return gradcheck(
        f, [("dg", dg), ("cg", cg), ("dl", dl), ("cl", cl)], h=h
    )


def _check_mse(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    scene = make_synthetic_scene(seed, 8, 8)
    pred = Tensor(rng.uniform(1.0, 20.0, size=(1, 8, 8)), requires_grad=True)

    def f():
        return mse_loss(pred, scene.gt)

    return gradcheck(f, [("pred", pred)], h=h)


def _check_vnl(seed: int, h: float) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    scene = make_synthetic_scene(seed, 8, 8)
    pred = Tensor(scene.gt.data[None] * rng.uniform(0.8, 1.2, size=(1, 8, 8)),
                  requires_grad=True)
    cfg = VnlConfig(n_groups=5, seed=seed)

    def f():
        return vnl_loss(pred, scene.gt, scene.intrinsics, cfg)

    return gradcheck(f, [("pred", pred)], h=h)


def _check_network(seed: int, h: float) -> GradcheckReport:
    scene = make_synthetic_scene(seed, 8, 8)
    model = TwoBranchNet(seed=seed)
    rgb = Tensor(scene.rgb)
    sparse = Tensor(scene.sparse.data[None])
    cfg = VnlConfig(n_groups=5, seed=seed)
    groups = sample_groups(scene.gt, scene.intrinsics, cfg)

    def f():
        out = model(rgb, sparse)
        return total_loss(
            out, scene.gt, scene.intrinsics, lam=100.0, w1=0.1, w2=0.1,
            vnl_cfg=cfg, groups=groups,
        ).total

    return gradcheck(f, list(model.named_parameters()), h=h)


CHECKS = {
    "elementwise": _check_elementwise,
    "conv2d": _check_conv2d,
    "transposed_conv2d": _check_transposed_conv2d,
    "maxpool2d": _check_maxpool2d,
    "nearest_upsample": _check_nearest_upsample,
    "pixel_shuffle": _check_pixel_shuffle,
    "channel_softmax": _check_channel_softmax,
    "channel_affine": _check_channel_affine,
    "concat_take": _check_concat_take,
    "nonbottleneck1d": _check_nonbottleneck1d,
    "downsample_concat": _check_downsample_concat,
    "kernel_reassembly": _check_kernel_reassembly,
    "guided_upsample": _check_guided_upsample,
    "fuse": _check_fuse,
    "mse": _check_mse,
    "vnl": _check_vnl,
    "network": _check_network,
}


def run_checks(
    names: list[str] | None = None, seed: int = 0, h: float = 1e-5
) -> dict[str, GradcheckReport]:
    """Run the named checks (all when names is None), in declaration order."""
    selected = list(CHECKS) if not names else names
    unknown = [n for n in selected if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; known: {list(CHECKS)}")
    return {name: CHECKS[name](seed, h) for name in selected}
