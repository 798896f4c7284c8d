"""Reward functions over precomputed perception outputs, with analytic gradients.

Each reward returns its value and the gradient with respect to the generated-
side input, shaped like that input. Chaining through a generator is left to the
caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ValidationError
from .sequences import DenseFieldSequence, MaskSequence

SIGMOID_SATURATION = 30.0


@dataclass
class RewardValue:
    value: float
    gradient: np.ndarray


def _array(x) -> np.ndarray:
    if isinstance(x, (DenseFieldSequence, MaskSequence)):
        x = x.frames
    return np.asarray(x, dtype=np.float64)


def seg_reward(gen_logits, gt_mask) -> RewardValue:
    """Soft IoU between sigmoid(logits) and a hard ground-truth mask, averaged over frames."""
    logits = _array(gen_logits)
    shape = logits.shape
    if logits.ndim == 4:
        if shape[3] != 1:
            raise ValidationError("segmentation logits must have one channel")
        logits = logits[..., 0]
    m = _array(gt_mask)
    if m.ndim == 4 and m.shape[3] == 1:
        m = m[..., 0]
    if m.shape != logits.shape:
        raise ValidationError(f"logits {logits.shape} and mask {m.shape} differ in shape")
    n = logits.shape[0]
    s = expit(logits)
    inter = (s * m).sum(axis=(1, 2))
    union = (s + m - s * m).sum(axis=(1, 2))
    empty = union == 0
    safe_u = np.where(empty, 1.0, union)
    per_frame = np.where(empty, 1.0, inter / safe_u)

    dsig = np.where(np.abs(logits) > SIGMOID_SATURATION, 0.0, s * (1.0 - s))
    U = safe_u[:, None, None]
    I = inter[:, None, None]
    grad = dsig * (m * U - (1.0 - m) * I) / U**2 / n
    grad[empty] = 0.0
    return RewardValue(float(per_frame.mean()), grad.reshape(shape))


def _l1_reward(gen, gt, channels) -> RewardValue:
    a, b = _array(gen), _array(gt)
    if a.shape != b.shape:
        raise ValidationError(f"generated {a.shape} and ground truth {b.shape} differ in shape")
    if a.ndim == 4 and a.shape[3] != channels:
        raise ValidationError(f"expected {channels} channel(s), got {a.shape[3]}")
    diff = a - b
    return RewardValue(-float(np.abs(diff).mean()), -np.sign(diff) / diff.size)


def flow_reward(gen_flow, gt_flow) -> RewardValue:
    """Negative mean absolute difference of optical-flow fields (two channels)."""
    a = _array(gen_flow)
    if a.ndim != 4:
        raise ValidationError("flow fields must be (n, H, W, 2)")
    return _l1_reward(a, gt_flow, 2)


def depth_reward(gen_depth, gt_depth) -> RewardValue:
    """Negative mean absolute difference of depth maps."""
    return _l1_reward(gen_depth, gt_depth, 1)
