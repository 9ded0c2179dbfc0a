from . import ops
from .graph import Graph, forward
from .optim import AdamState, adam_step
from .params import Entry, GradientMap, ParameterSet, glorot_uniform
from .tape import DimensionError, StaleGraphError, Tape, Tensor, backward

__all__ = [
    "AdamState",
    "DimensionError",
    "Entry",
    "GradientMap",
    "Graph",
    "ParameterSet",
    "StaleGraphError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "forward",
    "glorot_uniform",
    "ops",
]
