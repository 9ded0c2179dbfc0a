"""Tape-based reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied to its tensors in execution
order. A single call to :meth:`Tape.backward` walks the recording in reverse,
accumulates vector-Jacobian products and returns a :class:`GradientMap` for
the trainable leaves. The tape is consumed by that call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .params import GradientMap, ParameterSet


class StaleGraphError(RuntimeError):
    """Raised when a consumed tape is used again."""


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("value", "tape", "parents", "vjp", "index", "name", "trainable", "requires_grad")

    def __init__(self, value, tape, parents=(), vjp=None, name=None, trainable=False):
        self.value = value
        self.tape = tape
        self.parents = tuple(parents)
        self.vjp = vjp
        self.name = name
        self.trainable = trainable
        self.requires_grad = trainable or any(p.requires_grad for p in self.parents)
        self.index = -1

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.value.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{label})"


@dataclass
class Tape:
    nodes: list = field(default_factory=list)
    leaves: dict = field(default_factory=dict)
    consumed: bool = False

    def _check_live(self) -> None:
        if self.consumed:
            raise StaleGraphError("tape already consumed by backward(); record a new forward pass")

    def _push(self, tensor: Tensor) -> Tensor:
        self._check_live()
        tensor.index = len(self.nodes)
        self.nodes.append(tensor)
        return tensor

    def leaf(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self.leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        t = self._push(Tensor(arr, self, name=name, trainable=trainable))
        self.leaves[name] = t
        return t

    def constant(self, value) -> Tensor:
        return self._push(Tensor(np.asarray(value, dtype=np.float64), self))

    def watch(self, params: ParameterSet) -> dict:
        """Register every entry of ``params`` as a leaf; returns name -> Tensor."""
        return {e.name: self.leaf(e.name, e.value, e.trainable) for e in params.entries}

    def record(self, value: np.ndarray, parents: Sequence[Tensor], vjp: VJP) -> Tensor:
        for p in parents:
            if p.tape is not self:
                raise ValueError("operands belong to different tapes")
        return self._push(Tensor(value, self, parents, vjp))

    def backward(self, loss: Tensor) -> GradientMap:
        self._check_live()
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise DimensionError(f"backward() needs a scalar loss, got shape {loss.value.shape}")

        grads: dict = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.pop(node.index, None)
            if g is None or node.vjp is None or not node.requires_grad:
                if g is not None:
                    grads[node.index] = g
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.value.shape:
                    raise DimensionError(
                        f"internal gradient shape {pg.shape} != operand shape {parent.value.shape}"
                    )
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg

        out = {}
        for name, leaf in self.leaves.items():
            if not leaf.trainable:
                continue
            out[name] = grads.get(leaf.index, np.zeros_like(leaf.value))
        self.consumed = True
        self.nodes.clear()
        return GradientMap(out, float(loss.value.reshape(-1)[0]))


def backward(loss: Tensor) -> GradientMap:
    return loss.tape.backward(loss)
