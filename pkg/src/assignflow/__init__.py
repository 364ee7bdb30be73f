"""Adaptive regularization learning for the (linear) assignment flow."""

from assignflow import manifold, graph, flow, integrate, learn

__version__ = "0.1.0"

__all__ = ["manifold", "graph", "flow", "integrate", "learn", "__version__"]
