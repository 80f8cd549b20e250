"""Tensor and tape for reverse-mode differentiation."""
from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_RANK = 3

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("jointnlu_tape", default=None)


class Tensor:
    """Dense array of rank <= 3 that may take part in differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        if arr.ndim > MAX_RANK:
            raise ValueError(f"tensor rank {arr.ndim} exceeds {MAX_RANK}")
        if any(d < 1 for d in arr.shape):
            raise ValueError(f"tensor dims must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


@dataclass
class Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; primitives executed inside the block whose
    inputs require gradients are appended in execution order, which is
    already a topological order.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[Tensor]:
        produced = {id(n.out) for n in self.nodes}
        seen: dict[int, Tensor] = {}
        for n in self.nodes:
            for t in n.inputs:
                if t.requires_grad and id(t) not in produced:
                    seen.setdefault(id(t), t)
        return list(seen.values())


def current_tape() -> Tape | None:
    return _active_tape.get()


def record(out: Tensor, inputs: Sequence[Tensor], backward) -> Tensor:
    tape = _active_tape.get()
    if tape is None or not any(t.requires_grad for t in inputs):
        return out
    out.requires_grad = True
    tape.nodes.append(Node(out, tuple(inputs), backward))
    return out


def backward(loss: Tensor, tape: Tape, wrt: Iterable[Tensor] = ()) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) for every leaf on the tape, plus ``wrt``.

    Leaves that have no path to ``loss`` get a zero gradient.  Results are
    stored on ``tensor.grad`` and returned keyed by tensor.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    out: dict[Tensor, np.ndarray] = {}
    leaves = tape.leaves()
    extra = [t for t in wrt if all(t is not l for l in leaves)]
    for t in leaves + extra:
        g = grads.get(id(t))
        if g is None:
            g = np.zeros_like(t.data)
        elif g.shape != t.shape:
            raise RuntimeError(f"gradient shape {g.shape} does not match tensor shape {t.shape}")
        t.grad = g
        out[t] = g
    return out
