"""Parameter-bearing building blocks for the two-branch network.

Initialization is uniform in +-sqrt(1/fan_in) from a caller-supplied seeded
generator, so construction order fixes every weight bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, relu


class Module:
    """Lightweight container: recursively yields (name, parameter) pairs."""

    def named_parameters(self, prefix: str = ""):
        for attr, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield f"{prefix}{attr}", val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{attr}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{attr}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel,
        rng: np.random.Generator,
        stride=1,
        padding=0,
        pad_mode: str = "zero",
        bias: bool = True,
    ):
        kh, kw = ops._pair(kernel)
        fan_in = c_in * kh * kw
        self.w = Tensor(uniform_init(rng, (c_out, c_in, kh, kw), fan_in), requires_grad=True)
        self.b = Tensor(uniform_init(rng, (c_out,), fan_in), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x, self.w, self.b, stride=self.stride, padding=self.padding, pad_mode=self.pad_mode
        )


class TransposedConv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel, rng: np.random.Generator, stride=2):
        kh, kw = ops._pair(kernel)
        fan_in = c_in * kh * kw
        self.w = Tensor(uniform_init(rng, (c_out, c_in, kh, kw), fan_in), requires_grad=True)
        self.b = Tensor(uniform_init(rng, (c_out,), fan_in), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ops.transposed_conv2d(x, self.w, self.b, stride=self.stride)


class ChannelAffine(Module):
    # beta starts slightly positive: zero-plateau features (max-pooled empty
    # sparse-depth regions) would otherwise sit exactly on the rectifier kink,
    # where finite differences and the subgradient disagree
    def __init__(self, channels: int, beta_init: float = 0.01):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.full(channels, beta_init), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.channel_affine(x, self.gamma, self.beta)


class NonBottleneck1d(Module):
    """Residual block factoring 3x3 convolutions into 3x1 / 1x3 pairs.

    conv3x1 - relu - conv1x3 - relu - conv3x1 - relu - conv1x3, residual add,
    final relu.  Requires in-channels == out-channels.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv_a1 = Conv2d(channels, channels, (3, 1), rng, padding=(1, 0))
        self.conv_a2 = Conv2d(channels, channels, (1, 3), rng, padding=(0, 1))
        self.conv_b1 = Conv2d(channels, channels, (3, 1), rng, padding=(1, 0))
        self.conv_b2 = Conv2d(channels, channels, (1, 3), rng, padding=(0, 1))

    def __call__(self, x: Tensor) -> Tensor:
        y = relu(self.conv_a1(x))
        y = relu(self.conv_a2(y))
        y = relu(self.conv_b1(y))
        y = self.conv_b2(y)
        return relu(y + x)


class DownsampleConcat(Module):
    """Halve resolution by concatenating a stride-2 conv with a stride-2 max pool.

    The conv contributes c_out - c_in channels, the pool passes the input's
    c_in through, so the block emits c_out channels total.
    """

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        if c_out <= c_in:
            raise ValueError(
                f"DownsampleConcat needs c_out > c_in, got {c_in} -> {c_out}"
            )
        self.conv = Conv2d(c_in, c_out - c_in, 3, rng, stride=2, padding=1)

    def __call__(self, x: Tensor) -> Tensor:
        from .tensor import concat

        if x.shape[1] % 2 or x.shape[2] % 2:
            raise ValueError(
                f"DownsampleConcat needs even spatial dims, got {x.shape[1]}x{x.shape[2]}"
            )
        return concat([self.conv(x), ops.maxpool2d(x, kernel=2, stride=2)], axis=0)
