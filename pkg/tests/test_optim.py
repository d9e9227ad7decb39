import numpy as np
import pytest

from liddense.autodiff import Tensor
from liddense.optim import AdamW


def reference_adamw_step(values, grad, m, v, t, lr, b1, b2, eps, wd):
    """Naive single-parameter AdamW step for cross-checking."""
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new_values = values - lr * (m_hat / (np.sqrt(v_hat) + eps) + wd * values)
    return new_values, m, v


def make_param(rng, shape):
    p = Tensor(rng.normal(size=shape), requires_grad=True)
    p.grad = rng.normal(size=shape)
    return p


class TestAdamW:
    def test_matches_reference_without_gc(self):
        rng = np.random.default_rng(0)
        p = make_param(rng, (4, 3))
        start = p.values.copy()
        grad = p.grad.copy()
        opt = AdamW([p], lr=1e-2, weight_decay=1e-3, gradient_centralization=False)
        m = np.zeros_like(start)
        v = np.zeros_like(start)
        want = start
        for t in range(1, 4):
            opt.step()
            want, m, v = reference_adamw_step(
                want, grad, m, v, t, 1e-2, 0.9, 0.999, 1e-8, 1e-3
            )
            assert np.array_equal(p.values, want)
            p.grad = grad.copy()

    def test_missing_gradient_rejected(self):
        p = Tensor(np.ones(3), requires_grad=True)
        opt = AdamW([p])
        with pytest.raises(ValueError, match="no gradient"):
            opt.step()


class TestGradientCentralization:
    def test_centralized_slice_has_zero_mean(self):
        rng = np.random.default_rng(1)
        grad = rng.normal(size=(4, 3, 2, 2)) + 5.0
        centered = grad - grad.mean(axis=(1, 2, 3), keepdims=True)
        assert np.allclose(centered.mean(axis=(1, 2, 3)), 0.0, atol=1e-14)

    def test_gc_equals_manual_centering(self):
        # GC on raw gradients must match no-GC on pre-centered gradients
        rng = np.random.default_rng(2)
        base = rng.normal(size=(3, 2, 2, 2))
        grad = rng.normal(size=(3, 2, 2, 2)) + 1.0

        p_gc = Tensor(base.copy(), requires_grad=True)
        p_gc.grad = grad.copy()
        AdamW([p_gc], gradient_centralization=True).step()

        p_ref = Tensor(base.copy(), requires_grad=True)
        p_ref.grad = grad - grad.mean(axis=(1, 2, 3), keepdims=True)
        AdamW([p_ref], gradient_centralization=False).step()

        assert np.array_equal(p_gc.values, p_ref.values)

    def test_zero_mean_gradient_is_fixed_point(self):
        rng = np.random.default_rng(3)
        base = rng.normal(size=(3, 4))
        grad = rng.normal(size=(3, 4))
        grad -= grad.mean(axis=1, keepdims=True)

        p_a = Tensor(base.copy(), requires_grad=True)
        p_a.grad = grad.copy()
        AdamW([p_a], gradient_centralization=True).step()

        p_b = Tensor(base.copy(), requires_grad=True)
        p_b.grad = grad.copy()
        AdamW([p_b], gradient_centralization=False).step()

        assert np.array_equal(p_a.values, p_b.values)

    def test_rank1_parameters_not_centralized(self):
        rng = np.random.default_rng(4)
        base = rng.normal(size=5)
        grad = rng.normal(size=5) + 3.0  # decidedly nonzero mean

        p_a = Tensor(base.copy(), requires_grad=True)
        p_a.grad = grad.copy()
        AdamW([p_a], gradient_centralization=True).step()

        p_b = Tensor(base.copy(), requires_grad=True)
        p_b.grad = grad.copy()
        AdamW([p_b], gradient_centralization=False).step()

        assert np.array_equal(p_a.values, p_b.values)

    def test_gc_changes_rank2_updates(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(3, 4))
        grad = rng.normal(size=(3, 4)) + 2.0

        p_a = Tensor(base.copy(), requires_grad=True)
        p_a.grad = grad.copy()
        AdamW([p_a], gradient_centralization=True).step()

        p_b = Tensor(base.copy(), requires_grad=True)
        p_b.grad = grad.copy()
        AdamW([p_b], gradient_centralization=False).step()

        assert not np.array_equal(p_a.values, p_b.values)
