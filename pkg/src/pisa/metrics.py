"""Mask-based physical-accuracy metrics: trajectory L2, Chamfer distance, IoU, time error.

Point coordinates are pixel centers divided by the image width, so a square
frame spans [0, 1] on both axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import AlignmentError, MetricError, StaticClipError, ValidationError
from .sequences import MaskSequence

L2_EMPTY_PENALTY = math.sqrt(2.0)
CHAMFER_EMPTY_PENALTY = 2.0 * math.sqrt(2.0)
VELOCITY_THRESHOLD = 0.25  # pixel rows per frame


def align_fps(gen_fps: float, gt_fps: float, gen_n_frames: int, gt_n_frames: int) -> list[int]:
    """Ground-truth frame index nearest in time to each generated frame."""
    if not (gen_fps > 0 and gt_fps > 0):
        raise AlignmentError("fps must be positive")
    gen_end = (gen_n_frames - 1) / gen_fps
    gt_end = (gt_n_frames - 1) / gt_fps
    if gen_end > gt_end + 0.5 / gt_fps:
        raise AlignmentError(
            f"generated clip ({gen_end:.4f} s) is longer than the ground truth ({gt_end:.4f} s)"
        )
    ratio = gt_fps / gen_fps
    return [min(int(math.floor(i * ratio + 0.5)), gt_n_frames - 1) for i in range(gen_n_frames)]


@dataclass
class AlignedPair:
    gen: MaskSequence
    gt_aligned: MaskSequence
    mapping: list

    @property
    def n_frames(self) -> int:
        return self.gen.n_frames


def align(gen: MaskSequence, gt: MaskSequence, gen_fps: float, gt_fps: float) -> AlignedPair:
    if gen.frames.shape[1:] != gt.frames.shape[1:]:
        raise AlignmentError(
            f"frame size mismatch: generated {gen.frames.shape[1:]}, ground truth {gt.frames.shape[1:]}"
        )
    mapping = align_fps(gen_fps, gt_fps, gen.n_frames, gt.n_frames)
    gt_aligned = MaskSequence(gt.frames[mapping], object_id=gt.object_id)
    return AlignedPair(gen, gt_aligned, mapping)


def _as_pair(pair_or_gen, gt=None):
    if isinstance(pair_or_gen, AlignedPair):
        return pair_or_gen.gen.frames, pair_or_gen.gt_aligned.frames
    a = pair_or_gen.frames if isinstance(pair_or_gen, MaskSequence) else np.asarray(pair_or_gen, bool)
    b = gt.frames if isinstance(gt, MaskSequence) else np.asarray(gt, bool)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _require_nonempty(a, b):
    if not a.any() or not b.any():
        raise MetricError("every frame is empty in one of the sequences")


def centroids(frames: np.ndarray) -> np.ndarray:
    """Normalized ``(x, y)`` centroid per frame; NaN rows for empty frames."""
    frames = np.asarray(frames, dtype=bool)
    n, h, w = frames.shape
    counts = frames.sum(axis=(1, 2)).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        cx = (frames.sum(axis=1) * (np.arange(w) + 0.5)).sum(axis=1) / counts
        cy = (frames.sum(axis=2) * (np.arange(h) + 0.5)).sum(axis=1) / counts
    return np.column_stack([cx, cy]) / w


def centroid_rows(frames: np.ndarray) -> np.ndarray:
    """Mean foreground row index per frame (pixels); NaN for empty frames."""
    frames = np.asarray(frames, dtype=bool)
    counts = frames.sum(axis=(1, 2)).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (frames.sum(axis=2) * np.arange(frames.shape[1])).sum(axis=1) / counts


def trajectory_l2_frames(pair, gt=None) -> np.ndarray:
    a, b = _as_pair(pair, gt)
    _require_nonempty(a, b)
    d = np.linalg.norm(centroids(a) - centroids(b), axis=1)
    return np.where(np.isnan(d), L2_EMPTY_PENALTY, d)


def trajectory_l2(pair, gt=None) -> float:
    return float(trajectory_l2_frames(pair, gt).mean())


def _directed_mean(src: np.ndarray, dst: np.ndarray, width: int) -> float:
    """Mean over ``src`` pixels of the distance to the nearest ``dst`` pixel."""
    rows, cols = np.nonzero(src | dst)
    r0, r1, c0, c1 = rows.min(), rows.max() + 1, cols.min(), cols.max() + 1
    # every point of both sets lies in the crop, so nearest neighbours do too
    dist = distance_transform_edt(~dst[r0:r1, c0:c1])
    return float(dist[src[r0:r1, c0:c1]].sum() / src.sum() / width)


def chamfer_frame(p: np.ndarray, q: np.ndarray) -> float:
    if not p.any() or not q.any():
        return CHAMFER_EMPTY_PENALTY
    w = p.shape[1]
    return _directed_mean(p, q, w) + _directed_mean(q, p, w)


def chamfer_frames(pair, gt=None) -> np.ndarray:
    a, b = _as_pair(pair, gt)
    _require_nonempty(a, b)
    return np.array([chamfer_frame(p, q) for p, q in zip(a, b)])


def chamfer(pair, gt=None) -> float:
    return float(chamfer_frames(pair, gt).mean())


def iou_frames(pair, gt=None) -> np.ndarray:
    a, b = _as_pair(pair, gt)
    inter = (a & b).sum(axis=(1, 2)).astype(float)
    union = (a | b).sum(axis=(1, 2)).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union == 0, 1.0, inter / union)


def iou(pair, gt=None) -> float:
    return float(iou_frames(pair, gt).mean())


# --- impact detection --------------------------------------------------------


@dataclass(frozen=True)
class Impact:
    frame: int
    kind: str  # "reversal", "settle", or "none" (still moving at clip end)


def detect_impact(frames, tau: float = VELOCITY_THRESHOLD) -> Impact:
    """Find the first impact frame from the centroid's vertical motion.

    Impact is the first frame moving upward (row delta < -tau) after downward
    motion began. Without a reversal, it is the first frame after onset from
    which the centroid stays within tau for two consecutive frames.
    """
    if isinstance(frames, MaskSequence):
        frames = frames.frames
    rows = centroid_rows(frames)
    if np.count_nonzero(~np.isnan(rows)) < 3:
        raise MetricError("need at least 3 non-empty frames to detect impact")
    d = np.full(rows.shape, np.nan)
    d[1:] = rows[1:] - rows[:-1]
    down = np.flatnonzero(d > tau)
    if down.size == 0:
        raise StaticClipError("no downward motion detected")
    onset = int(down[0])
    up = np.flatnonzero(d[onset + 1 :] < -tau)
    if up.size:
        return Impact(onset + 1 + int(up[0]), "reversal")
    still = np.abs(d) <= tau
    for j in range(onset, len(rows) - 2):
        if still[j + 1] and still[j + 2]:
            return Impact(j, "settle")
    return Impact(len(rows), "none")


def window_error(F: int, fps: float, t_drop: float) -> float:
    lo, hi = (F - 1) / fps, F / fps
    if lo <= t_drop <= hi:
        return 0.0
    return min(abs(lo - t_drop), abs(hi - t_drop))


def time_error(gen, gen_fps: float, Y0: float, g: float = 9.81) -> float:
    """Dropping-time error in seconds. A static clip scores the full clip duration."""
    frames = gen.frames if isinstance(gen, MaskSequence) else np.asarray(gen, bool)
    t_drop = math.sqrt(2.0 * Y0 / g)
    try:
        impact = detect_impact(frames)
    except StaticClipError:
        return frames.shape[0] / gen_fps
    return window_error(impact.frame, gen_fps, t_drop)


@dataclass
class MetricReport:
    l2: float
    chamfer: float
    iou: float
    time_error: Optional[float] = None
    per_frame: dict = field(default_factory=dict)


def evaluate(
    gen: MaskSequence,
    gt: MaskSequence,
    gen_fps: float,
    gt_fps: float,
    Y0: Optional[float] = None,
    g: float = 9.81,
) -> MetricReport:
    pair = align(gen, gt, gen_fps, gt_fps)
    per_frame = {
        "l2": trajectory_l2_frames(pair),
        "chamfer": chamfer_frames(pair),
        "iou": iou_frames(pair),
    }
    return MetricReport(
        l2=float(per_frame["l2"].mean()),
        chamfer=float(per_frame["chamfer"].mean()),
        iou=float(per_frame["iou"].mean()),
        time_error=None if Y0 is None else time_error(gen, gen_fps, Y0, g),
        per_frame=per_frame,
    )
