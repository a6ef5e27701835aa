"""
Dense tensors and the gradient tape that records operations on them
"""

import contextvars
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ContractViolation

_ACTIVE_TAPE: contextvars.ContextVar[Optional["GradTape"]] = contextvars.ContextVar(
    "ctrforge_active_tape", default=None
)


class Tensor:
    """Dense n-dimensional array of reals, row-major"""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"<Tensor shape={self.shape} dtype={self.dtype}{label}>"

    # Arithmetic routes through the recorded primitives
    def __add__(self, other):
        from app.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from app.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from app.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from app.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from app.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from app.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, scalar: float):
        from app.autodiff import ops
        return ops.mul(self, 1.0 / float(scalar))

    def __neg__(self):
        from app.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from app.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from app.autodiff import ops
        return ops.slice_(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from app.autodiff import ops
        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from app.autodiff import ops
        return ops.reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from app.autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from app.autodiff import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


@dataclass
class OpRecord:
    """One primitive application on the tape"""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    forward: Callable[..., np.ndarray]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class GradTape:
    """
    Ordered record of primitive operations plus a parameter registry.

    Operations are recorded while the tape is the active one (``with tape:``)
    and at least one input requires a gradient. Appending in execution order
    gives a topological order, so the backward pass walks the list reversed.
    """

    def __init__(self):
        self.records: List[OpRecord] = []
        self.params: Dict[str, Tensor] = {}
        self._tokens: List[contextvars.Token] = []

    def __enter__(self) -> "GradTape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.records)

    def watch(self, params: Dict[str, Tensor]) -> None:
        """Register parameters whose gradients grad() should return"""
        for name, tensor in params.items():
            tensor.requires_grad = True
            self.params[name] = tensor

    def record(self, record: OpRecord) -> None:
        self.records.append(record)

    def replay(self) -> List[np.ndarray]:
        """Recompute every recorded output from current leaf values"""
        values: Dict[int, np.ndarray] = {}
        outputs: List[np.ndarray] = []
        for rec in self.records:
            args = [values.get(id(t), t.data) for t in rec.inputs]
            out = rec.forward(*args)
            values[id(rec.output)] = out
            outputs.append(out)
        return outputs

    def position_of(self, tensor: Tensor) -> int:
        for i, rec in enumerate(self.records):
            if rec.output is tensor:
                return i
        raise ContractViolation("Tensor was not produced by this tape")


def active_tape() -> Optional[GradTape]:
    return _ACTIVE_TAPE.get()


def grad(tape: GradTape, loss: Tensor, params: Optional[Dict[str, Tensor]] = None) -> Dict[str, Tensor]:
    """
    Reverse-mode gradients of a scalar loss with respect to parameters.

    Parameters never touched by the recorded computation get a zero gradient.
    """
    if loss.size != 1:
        raise ContractViolation(f"Loss must be a scalar, got shape {loss.shape}")
    params = tape.params if params is None else params

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g_out = grads.pop(id(rec.output), None)
        if g_out is None:
            continue
        for inp, g in zip(rec.inputs, rec.backward(g_out)):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = grads[key] + g if key in grads else g

    result: Dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads.get(id(p))
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.data.dtype).reshape(p.shape)
        result[name] = Tensor(g, name=name)
    return result
