"""In-memory containers for per-frame masks and dense float fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class MaskSequence:
    """Binary masks of one object, shape ``(n_frames, height, width)``."""

    frames: np.ndarray
    object_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise ValidationError(f"mask frames must be 3-D (n, H, W), got shape {frames.shape}")
        if frames.dtype != bool:
            if not np.isin(frames, (0, 1)).all():
                raise ValidationError("mask values must be 0 or 1")
            frames = frames.astype(bool)
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def empty_frames(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(~self.frames.any(axis=(1, 2)))]

    def __len__(self):
        return self.n_frames

    def __eq__(self, other):
        if not isinstance(other, MaskSequence):
            return NotImplemented
        return (
            self.object_id == other.object_id
            and self.frames.shape == other.frames.shape
            and bool(np.array_equal(self.frames, other.frames))
        )


@dataclass
class DenseFieldSequence:
    """Float fields, shape ``(n_frames, height, width, channels)``.

    Channels are 1 for logits and depth, 2 for optical flow ``(u, v)``.
    """

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim == 3:
            frames = frames[..., None]
        if frames.ndim != 4:
            raise ValidationError(f"field frames must be (n, H, W[, C]), got shape {frames.shape}")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]

    @property
    def shape(self):
        return self.frames.shape
