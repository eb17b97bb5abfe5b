"""Finite-difference verification of tape gradients.

The checker evaluates the loss closure twice per probed element
(central differences, step 1e-5) and compares against the gradients
accumulated by the autodiff tape. Large tensors are subsampled with a
seeded RNG; every element is probed for small ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import DimensionError, Tensor

__all__ = ["GradCheckReport", "grad_check"]

# Denominator floor keeps the ratio meaningful when both gradients are
# near zero (pure finite-difference noise would otherwise dominate).
_REL_FLOOR = 1e-2


@dataclass
class GradCheckReport:
    op: str
    tol: float
    max_rel_error: float = 0.0
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{self.op}: max_rel_err={self.max_rel_error:.3e} tol={self.tol:.1e} [{status}]"


def _param_list(params) -> list[tuple[str, Tensor]]:
    if isinstance(params, ParamStore):
        return list(params.items())
    out = []
    for i, t in enumerate(params):
        out.append((t.name or f"param{i}", t))
    return out


def grad_check(f: Callable[[], Tensor], params, tol: float = 1e-4, *,
               step: float = 1e-5, max_samples: int = 64, seed: int = 0,
               op_name: str = "op", negate_analytic: bool = False) -> GradCheckReport:
    """Compare tape gradients of the scalar closure `f` with central differences.

    `negate_analytic` is a fault-injection hook used to exercise the
    failure-reporting path; it must never be set in production code.
    """
    pairs = _param_list(params)
    for _, t in pairs:
        t.zero_grad()
    loss = f()
    if loss.size != 1:
        raise DimensionError("grad_check requires a scalar-valued function")
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in pairs}
    if negate_analytic:
        analytic = {k: -v for k, v in analytic.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(op=op_name, tol=tol)
    for name, t in pairs:
        flat = t.data.reshape(-1)
        n = flat.size
        if n <= max_samples:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=max_samples, replace=False)
        worst = 0.0
        ga = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            lo_hi = f().item()
            flat[i] = orig - step
            lo_lo = f().item()
            flat[i] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * step)
            a = float(ga[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), _REL_FLOOR)
            worst = max(worst, rel)
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
