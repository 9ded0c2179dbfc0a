from .autodiff import ParameterSet, Tape

__version__ = "0.1.0"
