"""Quantum state transfer between ion ensembles through a gradient echo memory."""

__version__ = "0.1.0"

from .core import Grid1D, IntegrationError, ParameterError, PhysParams, Signal  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND", "Grid1D", "IntegrationError", "ParameterError", "PhysParams", "Signal"]
