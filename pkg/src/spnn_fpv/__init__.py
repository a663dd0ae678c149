"""Fabrication-process-variation modelling and variation-tolerant MZI design for silicon-photonic neural networks."""

from . import errors, experiments, mesh, metrics, mzi, optimizer, photonics, spnn, varmap
from .errors import DomainError, OutOfRangeError
from .photonics import EimModel, TableModel

__version__ = "0.1.0"

__all__ = [
    "DomainError", "EimModel", "OutOfRangeError", "TableModel", "errors", "experiments", "mesh", "metrics",
    "mzi", "optimizer", "photonics", "spnn", "varmap",
]
