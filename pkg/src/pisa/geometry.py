"""Pinhole camera conventions for the dropping scenes.

World: ``Y`` is height above the ground (up-positive, meters) and ``Z`` is
depth along the optical axis (meters). The optical axis is horizontal at
``camera_height``. Sensor-plane ``y`` is in millimeters, measured from the
optical axis, up-positive. Pixel rows count downward from the top of the image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class CameraModel:
    focal_length: float = 35.0  # mm
    sensor_width: float = 32.0  # mm, square sensor
    image_width: int = 256
    image_height: int = 256
    camera_height: float = 0.5  # m

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValidationError(f"focal_length must be > 0, got {self.focal_length}")
        if not self.sensor_width > 0:
            raise ValidationError(f"sensor_width must be > 0, got {self.sensor_width}")
        if self.image_width < 1 or self.image_height < 1:
            raise ValidationError("image dimensions must be >= 1")
        if self.image_width != self.image_height:
            raise ValidationError(
                f"only square images are supported, got {self.image_width}x{self.image_height}"
            )

    @property
    def pixel_pitch(self) -> float:
        """Sensor millimeters per pixel."""
        return self.sensor_width / self.image_height

    @property
    def half_sensor(self) -> float:
        return self.sensor_width / 2.0

    def pixel_world_size(self, Z):
        """World meters spanned by one pixel at depth ``Z``."""
        return self.pixel_pitch / self.focal_length * Z


@dataclass(frozen=True)
class WorldPoint:
    Y: float
    Z: float


@dataclass(frozen=True)
class ImageCoordinate:
    y: float
    row: Optional[int] = None

    def in_frame(self, cam: CameraModel) -> bool:
        return abs(self.y) <= cam.half_sensor


def round_half_away(x):
    """Round to nearest integer, ties away from zero (works on arrays)."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return out.astype(int) if out.ndim else int(out)


def project_y(cam: CameraModel, Y, Z):
    """Vectorized sensor-plane height of world height ``Y`` at depth ``Z``."""
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise DomainError("depth must be positive to project")
    y = cam.focal_length * (np.asarray(Y, dtype=float) - cam.camera_height) / Z
    return y if y.ndim else float(y)


def sensor_to_row(cam: CameraModel, y, clamp: bool = False):
    """Pixel row for sensor height ``y`` (not the inverse of pixel_to_sensor: no half-pixel shift)."""
    H = cam.image_height
    row = round_half_away(H / 2.0 - np.asarray(y, dtype=float) * H / cam.sensor_width)
    if clamp:
        row = np.clip(row, 0, H - 1)
        row = row.astype(int) if np.ndim(row) else int(row)
    return row


def project(cam: CameraModel, p: WorldPoint, in_frame: bool = False) -> ImageCoordinate:
    """Project a world point; with ``in_frame`` the pixel row is clamped to the image."""
    y = project_y(cam, p.Y, p.Z)
    return ImageCoordinate(y=y, row=sensor_to_row(cam, y, clamp=in_frame))


def beta(cam: CameraModel, y) -> float:
    """Slope of world height against depth along the ray through sensor height ``y``."""
    if isinstance(y, ImageCoordinate):
        y = y.y
    b = np.asarray(y, dtype=float) / cam.focal_length
    return b if b.ndim else float(b)


def back_project(cam: CameraModel, y, Z) -> WorldPoint:
    if isinstance(y, ImageCoordinate):
        y = y.y
    if not Z > 0:
        raise DomainError(f"depth must be positive, got {Z}")
    return WorldPoint(Y=cam.camera_height + beta(cam, y) * Z, Z=Z)


def ray_height(cam: CameraModel, y, Z):
    """Vectorized ``back_project(...).Y``."""
    Z = np.asarray(Z, dtype=float)
    if np.any(Z <= 0):
        raise DomainError("depth must be positive")
    out = cam.camera_height + beta(cam, y) * Z
    return out if np.ndim(out) else float(out)


def pixel_to_sensor(cam: CameraModel, row):
    """Sensor height of a pixel-row center. Accepts fractional rows for sub-pixel work."""
    r = np.asarray(row, dtype=float)
    if np.any(r < 0) or np.any(r >= cam.image_height):
        raise DomainError(f"row out of range [0, {cam.image_height})")
    y = (cam.image_height / 2.0 - (r + 0.5)) * cam.pixel_pitch
    return y if y.ndim else float(y)


def col_to_sensor_x(cam: CameraModel, col):
    """Sensor horizontal coordinate of a pixel-column center (right-positive)."""
    x = (np.asarray(col, dtype=float) + 0.5 - cam.image_width / 2.0) * cam.pixel_pitch
    return x if x.ndim else float(x)
