# Reverse-mode autodiff over numpy arrays
from app.autodiff.tensor import GradTape, OpRecord, Tensor, active_tape, grad
from app.autodiff.optim import AdamState, adam_step
from app.autodiff.gradcheck import GradCheckReport, finite_difference_check

__all__ = [
    "GradTape",
    "OpRecord",
    "Tensor",
    "active_tape",
    "grad",
    "AdamState",
    "adam_step",
    "GradCheckReport",
    "finite_difference_check",
]
