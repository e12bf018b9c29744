"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable op records an Operation on its output. Calling
backward() on a scalar result builds a ComputationTape (the recorded
operations in topological order) and replays it once in reverse.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ContractViolation, NumericalError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@dataclass(eq=False)
class Operation:
    """One recorded op: its inputs, its output and the rule mapping dL/dout to dL/dinputs"""
    name: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward_fn: BackwardFn


class Tensor:
    def __init__(self, data: ArrayLike, requires_grad: bool = False, copy: bool = True):
        self.data = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._op: Optional[Operation] = None

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
    def is_leaf(self) -> bool:
        return self._op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: Optional[ArrayLike] = None):
        """Accumulate dL/dleaf into .grad of every leaf that requires grad"""
        if not self.requires_grad:
            raise ContractViolation("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise ContractViolation("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        else:
            seed = np.array(grad, dtype=np.float64)
            if seed.shape != self.shape:
                raise ContractViolation(f"seed shape {seed.shape} != output shape {self.shape}")
        ComputationTape.from_output(self).run_backward(self, seed)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class ComputationTape:
    """Recorded operations reachable from one output, inputs always before their consumers"""

    def __init__(self, operations: List[Operation]):
        self.operations = operations

    def __len__(self):
        return len(self.operations)

    @classmethod
    def from_output(cls, output: Tensor) -> "ComputationTape":
        order: List[Operation] = []
        visited = set()
        stack = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            op = tensor._op
            if op is None:
                continue
            if expanded:
                order.append(op)
                continue
            if id(op) in visited:
                continue
            visited.add(id(op))
            stack.append((tensor, True))
            for inp in op.inputs:
                if inp._op is not None and id(inp._op) not in visited:
                    stack.append((inp, False))
        return cls(order)

    def run_backward(self, output: Tensor, seed: np.ndarray):
        pending = {id(output): seed}
        for op in reversed(self.operations):
            grad_out = pending.pop(id(op.output), None)
            if grad_out is None:
                continue
            input_grads = op.backward_fn(grad_out)
            for inp, grad_in in zip(op.inputs, input_grads):
                if grad_in is None or not inp.requires_grad:
                    continue
                if grad_in.shape != inp.shape:
                    raise ContractViolation(
                        f"{op.name}: gradient shape {grad_in.shape} != input shape {inp.shape}"
                    )
                if inp.is_leaf:
                    inp.grad = grad_in.copy() if inp.grad is None else inp.grad + grad_in
                else:
                    key = id(inp)
                    pending[key] = grad_in if key not in pending else pending[key] + grad_in


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def record(name: str, inputs: Sequence[Tensor], out_data: np.ndarray,
           backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result, refusing non-finite values, and attach its backward rule"""
    if not np.all(np.isfinite(out_data)):
        raise NumericalError(f"{name} produced non-finite values")
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires_grad, copy=False)
    if requires_grad:
        out._op = Operation(name, tuple(inputs), out, backward_fn)
    return out
