from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .params import ParameterSet
from .tape import DimensionError, Tape, Tensor


class Graph:
    """A parameterised function with a declared input shape.

    ``fn(x, p)`` receives the input tensor and a name -> Tensor dict of the
    watched parameters, and must build its output from ``ops`` primitives.
    A leading ``None`` in ``input_shape`` accepts any batch size.
    """

    def __init__(self, input_shape: tuple, fn: Callable, params: Optional[ParameterSet] = None):
        self.input_shape = tuple(input_shape)
        self.fn = fn
        self.params = params if params is not None else ParameterSet()

    def check_input(self, shape: tuple) -> None:
        ok = len(shape) == len(self.input_shape) and all(
            want is None or want == got for want, got in zip(self.input_shape, shape)
        )
        if not ok:
            raise DimensionError(f"input shape {tuple(shape)} does not match declared {self.input_shape}")

    def forward(self, x, tape: Optional[Tape] = None) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        self.check_input(x.shape)
        tape = tape or Tape()
        p = tape.watch(self.params)
        return self.fn(tape.constant(x), p)


def forward(graph: Graph, x, tape: Optional[Tape] = None) -> Tensor:
    return graph.forward(x, tape)
