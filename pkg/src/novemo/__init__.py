"""Novelty-aware emotion recognition with human-in-the-loop retraining."""

from . import continual, data_io, geometry, nn, novelty, pipeline, synth

__version__ = "0.1.0"

__all__ = ["continual", "data_io", "geometry", "nn", "novelty", "pipeline", "synth"]
