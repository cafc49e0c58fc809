"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from plnmt.numcore.params import ParamStore
from plnmt.numcore.tape import Tape, Tensor

LossClosure = Callable[[ParamStore], tuple[Tape, Tensor]]


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def failures(self) -> list[str]:
        return [name for name, err in self.errors.items() if not err <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def format(self) -> str:
        lines = []
        for name, err in self.errors.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            lines.append(f"{name:<24s} {err:.3e} {flag}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict}: max relative error {self.max_error:.3e} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor: float = 1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is ~0 from dominating.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(closure: LossClosure, params: ParamStore, name: str, eps: float = 1e-3):
    base = params[name]
    grad = np.zeros(base.shape, dtype=np.float64)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = base[idx]
        base[idx] = orig + eps
        plus = float(closure(params)[1].value)
        base[idx] = orig - eps
        minus = float(closure(params)[1].value)
        base[idx] = orig
        grad[idx] = (plus - minus) / (2.0 * eps)
    return grad


def check_gradients(closure: LossClosure, params: ParamStore, tolerance: float = 1e-4,
                    eps: float = 1e-3, names=None, analytic=None,
                    floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients with central differences, parameter by parameter.

    ``closure(params)`` must rebuild the forward pass deterministically and
    return ``(tape, loss)``.  ``analytic`` overrides the tape gradients, which
    is how fault-injection tests feed in a corrupted gradient.  The report
    passes iff every parameter's max relative error is within ``tolerance``.
    """
    if analytic is None:
        tape, loss = closure(params)
        analytic = tape.backward(loss)
    report = GradCheckReport(tolerance)
    for name in names or params.names():
        numeric = numeric_gradient(closure, params, name, eps)
        err = relative_error(analytic[name], numeric, floor)
        report.errors[name] = float(err.max()) if err.size else 0.0
    return report
