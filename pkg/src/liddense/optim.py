"""AdamW with optional gradient centralization.

Weight decay is decoupled from the adaptive-moment update.  When
centralization is on, the gradient of every tensor of rank >= 2 has its
per-output-slice mean (mean over all axes but the first) subtracted before
the moment updates; rank-1 parameters (biases, affine scales) are untouched.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class AdamW:
    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
        gradient_centralization: bool = True,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.gc = gradient_centralization
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(
                    f"parameter {p.name or i} has no gradient; run backward first"
                )
            g = p.grad
            if self.gc and g.ndim >= 2:
                g = g - g.mean(axis=tuple(range(1, g.ndim)), keepdims=True)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.values -= self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.values
            )
