"""Finite-difference verification of analytic gradients.

Runs the model in float64, perturbs every parameter element (or a seeded
subset) by +-h, and compares central differences against tape gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ParameterError, ReproducibilityError


@dataclass
class GradCheckReport:
    per_group: Dict[str, float]   # parameter name -> max relative error
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max(self.per_group.values()) if self.per_group else 0.0

    @property
    def worst_group(self) -> str:
        if not self.per_group:
            return ""
        return max(self.per_group, key=self.per_group.get)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"gradient check {status}: max rel err {self.max_rel_error:.3e} "
                f"(worst group '{self.worst_group}', tolerance {self.tolerance:g})")


def gradient_check(forward: Callable[[], Tensor], params: Dict[str, Tensor],
                   tolerance: float = 1e-3, h: float = 1e-4,
                   max_elements_per_group: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """Compare tape gradients of a scalar-valued forward against central differences.

    `forward` must be deterministic and close over the tensors in `params`;
    all parameters must be float64 (gradient-check mode).
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ParameterError(f"gradient_check requires float64 parameters; '{name}' is {p.data.dtype}")

    y1 = np.array(forward().data)
    y2 = np.array(forward().data)
    if not np.array_equal(y1, y2):
        raise ReproducibilityError("two identical forward passes disagree; forward is not deterministic")

    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = forward()
    tape.backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    for p in params.values():
        p.zero_grad()

    if rng is None:
        rng = np.random.default_rng(0)

    def scalar_loss() -> float:
        return float(forward().data.reshape(()))

    per_group: Dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_elements_per_group is not None and n > max_elements_per_group:
            idx = rng.choice(n, size=max_elements_per_group, replace=False)
        else:
            idx = np.arange(n)
        worst = 0.0
        a_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = scalar_loss()
            flat[i] = orig - h
            fm = scalar_loss()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = a_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            if rel > worst:
                worst = rel
        per_group[name] = worst
    return GradCheckReport(per_group=per_group, tolerance=tolerance)
