"""Handwritten text segmentation from scratch.

Synthesizes pixel-labeled documents, trains a numpy U-Net with class-balanced
focal cross-entropy and evaluates it with pooled IoU and OCR accuracy.
"""

from hwseg.errors import (
    ConfigError,
    DomainError,
    HwsegError,
    NumericError,
    PlacementError,
    ShapeError,
    SynthesisError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "HwsegError",
    "NumericError",
    "PlacementError",
    "ShapeError",
    "SynthesisError",
    "__version__",
]
