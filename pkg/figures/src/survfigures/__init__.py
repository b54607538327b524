"""Thin rendering layer for survtensor validation outputs.

Figures are pure functions of the engine's emitted files (CSV curves, the
stats JSON, and the label npy arrays); nothing is re-estimated here.
"""

__version__ = "0.1.0"
