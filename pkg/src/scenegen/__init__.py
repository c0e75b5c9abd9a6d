"""Interactive scene-graph-to-image generation."""

__version__ = "0.1.0"
