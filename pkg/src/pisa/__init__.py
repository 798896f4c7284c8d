"""Freefall world-model evaluation: drop simulator, mask metrics, rewards, and drop-time statistics."""

from .geometry import CameraModel, ImageCoordinate, WorldPoint
from .sequences import DenseFieldSequence, MaskSequence

__version__ = "0.1.0"

__all__ = ["CameraModel", "DenseFieldSequence", "ImageCoordinate", "MaskSequence", "WorldPoint"]
