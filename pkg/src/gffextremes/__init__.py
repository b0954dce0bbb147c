"""Simulation and extreme-value statistics for the 2D discrete Gaussian free field
and its hierarchical relatives (modified and dyadic branching random walks)."""

from .lattice import GridSpec, Vertex
from .samplers import Field, FieldKind, sample
from .streams import RngStream

__version__ = "0.1.0"

__all__ = ["Field", "FieldKind", "GridSpec", "RngStream", "Vertex", "sample"]
