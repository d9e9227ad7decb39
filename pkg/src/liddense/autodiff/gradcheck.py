"""Finite-difference verification of analytic gradients.

Central differences at 64-bit precision; the relative error per element is
|analytic - numeric| / max(1, |numeric|).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, backward


class NonDeterministicFunctionError(Exception):
    """Two evaluations at the same point disagreed."""


@dataclass
class GradcheckReport:
    max_rel_error: float = 0.0
    per_tensor: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def gradcheck(
    f,
    tensors: list[tuple[str, Tensor]],
    h: float = 1e-5,
    two_sided_determinism_check: bool = True,
) -> GradcheckReport:
    """Compare backward() gradients of the scalar f() against central differences.

    `f` must be a zero-argument callable that reads the given tensors and
    returns a scalar Tensor; it is re-evaluated under elementwise +-h
    perturbations of every tensor.
    """
    base = f().item()
    if two_sided_determinism_check and f().item() != base:
        raise NonDeterministicFunctionError(
            "f() returned different values on repeated evaluation"
        )

    for _, t in tensors:
        t.zero_grad()
    backward(f())
    analytic = {}
    for name, t in tensors:
        if t.grad is None:
            analytic[name] = np.zeros_like(t.values)
        else:
            analytic[name] = t.grad.copy()

    report = GradcheckReport()
    for name, t in tensors:
        flat = t.values.reshape(-1)
        ana = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f().item()
            flat[i] = orig - h
            f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(ana[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
        report.per_tensor[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
