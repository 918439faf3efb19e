"""Dual-channel KAN / quantum-circuit tabular classifier with its full
evaluation apparatus: preprocessing, training callbacks, metrics,
conformal prediction, and Shapley/LIME attributions."""

__version__ = "0.1.0"

from .backend import backend_name

__all__ = ["backend_name", "__version__"]
