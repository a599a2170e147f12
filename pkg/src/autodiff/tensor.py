"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that produces a Tensor from inputs that require gradients
stores its parents and a backward closure mapping the output gradient to one
gradient per parent. `Tape` orders those nodes topologically for a single
reverse sweep.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from src.exceptions import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference, frozen models)"""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """A node of the computation graph holding a float64 array"""

    __slots__ = ("data", "requires_grad", "grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Create an op output, recording it only if some parent needs gradients"""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.name = None
        out.op = op
        needs_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = needs_grad
        if needs_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Populate .grad of every requires_grad ancestor (accumulating with +=)"""
        if self.data.size != 1:
            raise ContractError(
                f"backward() needs a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that is not on the tape")
        Tape.from_root(self).run(np.ones_like(self.data))

    # Operator sugar; the implementations live in src.autodiff.ops
    def __add__(self, other):
        from src.autodiff import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from src.autodiff import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from src.autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import ops

        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from src.autodiff import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.autodiff import ops

        return ops.mul(self, other)

    def __neg__(self):
        from src.autodiff import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from src.autodiff import ops

        return ops.matmul(self, other)

    def __getitem__(self, index):
        from src.autodiff import ops

        return ops.take(self, index)


class Tape:
    """Topologically ordered list of recorded operations reachable from a root"""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        # Iterative DFS: deep transformer graphs overflow the recursion limit
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def run(self, seed: np.ndarray) -> None:
        pending: dict[int, np.ndarray] = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad
