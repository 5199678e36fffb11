"""Deterministic figure rendering for the coherence-gating experiment CSVs."""

from .panels import PANELS, EmptyData, FigureSpec, MissingColumn, render

__all__ = ["PANELS", "EmptyData", "FigureSpec", "MissingColumn", "render"]
__version__ = "0.1.0"
