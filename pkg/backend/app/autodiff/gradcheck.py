"""
Finite-difference verification of tape gradients
"""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from app.autodiff.tensor import GradTape, Tensor, grad


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    checked: int
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    params: Dict[str, ParamCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.params.values())

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.params.values()), default=0.0)

    def failures(self) -> Dict[str, ParamCheck]:
        return {k: c for k, c in self.params.items() if not c.passed}


def finite_difference_check(
    tape: GradTape,
    loss: Tensor,
    params: Optional[Dict[str, Tensor]] = None,
    tolerance: float = 1e-3,
    step: float = 1e-4,
    grads: Optional[Dict[str, Tensor]] = None,
    max_entries: Optional[int] = None,
    atol: float = 1e-5,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare analytic gradients with central differences.

    The loss is re-evaluated by replaying the tape after nudging one parameter
    entry in place, so dropout masks and inputs stay fixed. Relative error is
    |a - n| / max(|a|, |n|, atol). ``grads`` overrides the analytic gradients.
    ``max_entries`` samples at most that many entries per parameter.
    Run in float64; float32 central differences are too coarse for 1e-3.
    """
    params = tape.params if params is None else params
    analytic = grads if grads is not None else grad(tape, loss, params)
    position = tape.position_of(loss)
    rng = np.random.default_rng(seed)

    def evaluate() -> float:
        return float(np.asarray(tape.replay()[position]).reshape(-1)[0])

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        a_flat = analytic[name].data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        worst = 0.0
        for i in entries:
            original = flat[i]
            flat[i] = original + step
            f_plus = evaluate()
            flat[i] = original - step
            f_minus = evaluate()
            flat[i] = original

            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), atol)
            worst = max(worst, rel)

        report.params[name] = ParamCheck(
            name=name, max_rel_error=worst, checked=len(entries), passed=worst <= tolerance
        )
    return report
