import numpy as np
import pytest

from liddense.autodiff import Tensor, nearest_upsample, tensor_sum
from liddense.autodiff.gradcheck import gradcheck
from liddense.guided_upsample import (
    GuidedUpsampler,
    UpsampleConfig,
    check_kernels,
    kernel_reassembly,
)


def make_module(seed=0, c_in=4, c_out=4, kernel=5, scale=2):
    rng = np.random.default_rng(seed)
    return GuidedUpsampler(UpsampleConfig(c_in=c_in, c_out=c_out, kernel=kernel, scale=scale), rng)


def softmax_kernels(rng, k, sh, sw):
    logits = rng.normal(size=(k * k, sh, sw))
    e = np.exp(logits)
    return e / e.sum(axis=0, keepdims=True)


class TestConfig:
    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            UpsampleConfig(c_in=4, c_out=4, kernel=4)

    def test_mid_channels_quarter(self):
        assert UpsampleConfig(c_in=16, c_out=8).mid_channels == 4

    def test_mid_channels_floor_at_one(self):
        assert UpsampleConfig(c_in=2, c_out=2).mid_channels == 1

    def test_mid_channels_override(self):
        assert UpsampleConfig(c_in=16, c_out=8, c_mid=2).mid_channels == 2


class TestKernelGeneration:
    def test_output_shape(self):
        m = make_module()
        x = Tensor(np.random.default_rng(1).normal(size=(4, 6, 6)))
        kernels = m.generate_kernels(x)
        assert kernels.shape == (25, 12, 12)

    def test_zero_conv_weights_give_uniform_kernels(self):
        m = make_module()
        m.kernel_conv.w.values[...] = 0.0
        m.kernel_conv.b.values[...] = 0.0
        x = Tensor(np.random.default_rng(2).normal(size=(4, 6, 6)))
        kernels = m.generate_kernels(x)
        assert np.allclose(kernels.values, 1.0 / 25.0, atol=1e-15)

    def test_kernels_sum_to_one(self):
        m = make_module()
        x = Tensor(np.random.default_rng(3).normal(size=(4, 6, 6)) * 4)
        assert check_kernels(m.generate_kernels(x).values, tol=1e-12)


class TestReassembly:
    def test_one_hot_center_reproduces_nearest_upsample(self):
        rng = np.random.default_rng(4)
        m = make_module()
        x = Tensor(rng.normal(size=(4, 5, 5)))
        kernels = np.zeros((25, 10, 10))
        kernels[12] = 1.0  # center tap of the 5x5 window
        out = m.reassemble_features(x, Tensor(kernels))
        assert np.array_equal(out.values, nearest_upsample(x, 2).values)

    def test_constant_input_preserved(self):
        rng = np.random.default_rng(5)
        m = make_module()
        c = 3.7
        x = Tensor(np.full((4, 5, 5), c))
        kernels = Tensor(softmax_kernels(rng, 5, 10, 10))
        out = m.reassemble_features(x, kernels)
        assert np.all(np.abs(out.values - c) <= 1e-12)

    def test_uniform_kernels_match_box_filter_oracle(self):
        # uniform kernels = dilated K x K box average of the NN-upsampled map
        rng = np.random.default_rng(6)
        k, s = 3, 2
        x = rng.normal(size=(1, 4, 4))
        up = np.repeat(np.repeat(x, s, 1), s, 2)
        pad = (k // 2) * s
        pads = np.pad(up, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
        want = np.zeros_like(up)
        for i in range(up.shape[1]):
            for j in range(up.shape[2]):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        acc += pads[0, i + a * s, j + b * s]
                want[0, i, j] = acc / (k * k)
        kernels = Tensor(np.full((k * k, 8, 8), 1.0 / (k * k)))
        got = kernel_reassembly(Tensor(up), kernels, kernel=k, scale=s).values
        assert np.allclose(got, want, atol=1e-12)

    def test_locality(self):
        rng = np.random.default_rng(7)
        m = make_module(kernel=3)
        x = rng.normal(size=(4, 6, 6))
        kernels = Tensor(softmax_kernels(rng, 3, 12, 12))
        base = m.reassemble_features(Tensor(x), kernels).values
        x2 = x.copy()
        x2[:, 3, 3] += 1.0
        moved = m.reassemble_features(Tensor(x2), kernels).values
        changed = np.argwhere(np.any(base != moved, axis=0))
        # copies of (3,3) live at outputs (6..7, 6..7); dilated 3x3 reach is +-2
        assert changed.size > 0
        for r, c in changed:
            assert 4 <= r <= 9 and 4 <= c <= 9

    def test_channel_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        m = make_module()
        x = rng.normal(size=(4, 5, 5))
        kernels = Tensor(softmax_kernels(rng, 5, 10, 10))
        perm = np.array([2, 0, 3, 1])
        a = m.reassemble_features(Tensor(x[perm]), kernels).values
        b = m.reassemble_features(Tensor(x), kernels).values[perm]
        assert np.array_equal(a, b)


class TestFullModule:
    def test_shape_law(self):
        m = make_module(c_in=4, c_out=6)
        x = Tensor(np.random.default_rng(9).normal(size=(4, 6, 6)))
        assert m(x).shape == (6, 12, 12)

    def test_gradcheck_small_instance(self):
        # the acceptance-scale instance: 2 channels, 6x6, K=5, S=2
        rng = np.random.default_rng(10)
        m = GuidedUpsampler(UpsampleConfig(c_in=2, c_out=2), rng)
        x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
        proj = rng.normal(size=(2, 12, 12))

        def f():
            return tensor_sum(m(x) * proj)

        report = gradcheck(f, [("x", x)] + list(m.named_parameters()))
        assert report.max_rel_error < 1e-4
