from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from errors import NonFiniteError, TapeError


"""
Dense float64 tensors and the tape that records operations on them for reverse-mode
differentiation.

A Tensor that requires grad and was produced by an op remembers the Tape it was recorded
on. Leaves (parameters, inputs) carry no tape: ops record on the active tape (`with Tape():`),
or on the live tape of their tracked inputs. With neither, results are untracked. Mixing
tensors from two live tapes in one op is an error, and a consumed tape records nothing.
"""


_tensor_ids = itertools.count()
_local = threading.local()


class Tensor:
    __slots__ = ("data", "requires_grad", "id", "tape")

    def __init__(self, data, requires_grad: bool = False):
        # float64 data is not copied
        array = np.asarray(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        if not np.isfinite(array).all():
            raise NonFiniteError(f"tensor: non-finite values in array of shape {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.id: int = next(_tensor_ids)
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic is delegated to autodiff.ops
    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from autodiff import ops
        return ops.mul(other, self)

    def __neg__(self):
        from autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from autodiff import ops
        return ops.slice_(self, index)


@dataclass
class Node:
    # one recorded op; backward maps the output gradient to one gradient per input (or None)
    op: str
    inputs: tuple[Tensor, ...]
    out_id: int
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered op records; nodes are appended at creation time, so the order is topological."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._known_ids: set[int] = set()
        self.consumed = False

    def __enter__(self) -> Tape:
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _stack().pop()

    @staticmethod
    def active() -> Tape | None:
        stack = _stack()
        return stack[-1] if stack else None

    def __len__(self):
        return len(self.nodes)

    def record(self, op: str, inputs: tuple[Tensor, ...], out: Tensor,
               backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> None:
        if self.consumed:
            raise TapeError(f"{op}: tape was consumed by gradient(); open a new Tape")
        self.nodes.append(Node(op, inputs, out.id, backward))
        for tensor in inputs:
            if tensor.requires_grad:
                self._known_ids.add(tensor.id)
        self._known_ids.add(out.id)
        out.tape = self

    def knows(self, tensor: Tensor) -> bool:
        return tensor.id in self._known_ids

    def reset(self) -> None:
        self.nodes = []
        self._known_ids = set()
        self.consumed = True

    def gradient(self, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """
        Reverse pass from a one-element <loss>. Returns d(loss)/d(w) for each requested
        tensor (zeros when the loss does not depend on it). The tape is reset afterwards.
        """
        if loss.size != 1:
            raise TapeError(f"gradient: loss must have a single element, got shape {loss.shape}")
        if loss.tape is not self or not self.knows(loss):
            raise TapeError("gradient: loss is not on this tape")
        for tensor in wrt:
            if not self.knows(tensor):
                raise TapeError(f"gradient: requested tensor {tensor!r} is not on the tape")

        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            out_grad = grads.get(node.out_id)
            if out_grad is None:
                continue
            for tensor, in_grad in zip(node.inputs, node.backward(out_grad)):
                if in_grad is None or not tensor.requires_grad:
                    continue
                if tensor.id in grads:
                    grads[tensor.id] = grads[tensor.id] + in_grad
                else:
                    grads[tensor.id] = in_grad

        result = []
        for tensor in wrt:
            grad = grads.get(tensor.id)
            result.append(np.zeros_like(tensor.data) if grad is None else np.asarray(grad).reshape(tensor.shape))
        self.reset()
        return result


def _stack() -> list[Tape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def gradient(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradient of <loss> with respect to each tensor in <wrt>, via the tape that recorded it."""
    if loss.tape is None or loss.tape.consumed:
        raise TapeError("gradient: loss is not on a live tape (was it computed from tracked tensors?)")
    return loss.tape.gradient(loss, wrt)
