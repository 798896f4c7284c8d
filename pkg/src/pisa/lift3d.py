"""Lift a 2-D mask trajectory to world heights through its implied depth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .geometry import CameraModel, beta
from .metrics import centroid_rows, detect_impact
from .sequences import MaskSequence


class NoConsistentDepthError(MetricError):
    pass


@dataclass
class LiftedTrajectory:
    times: np.ndarray
    y_image: np.ndarray  # sensor mm of the object's bottom
    Y_world: np.ndarray
    implied_Z: float
    t_drop: float
    beta0: float
    camera_height: float

    @property
    def implied_Y0(self) -> float:
        return float(self.Y_world[0])

    def reference_fan(self, depths=None, times=None, g: float = 9.81) -> dict:
        """Free-fall curves ``Y(t; Z)`` for objects on the same initial ray at other depths."""
        depths = np.linspace(2.0, 18.0, 9) if depths is None else np.asarray(depths, dtype=float)
        t = self.times if times is None else np.asarray(times, dtype=float)
        return {
            float(Z): np.maximum(self.camera_height + self.beta0 * Z - 0.5 * g * t**2, 0.0)
            for Z in depths
        }


def _frames(gen):
    return gen.frames if isinstance(gen, MaskSequence) else np.asarray(gen, dtype=bool)


def estimate_t_drop(gen, fps: float) -> float:
    """Drop time as impact frame over fps. Raises StaticClipError for motionless clips."""
    impact = detect_impact(_frames(gen))
    if impact.kind == "none":
        raise MetricError("no impact detected before the clip ends")
    return impact.frame / fps


def refine_t_drop(gen, fps: float) -> float:
    """Sub-frame drop time from parabola fits to the centroid row track.

    The pre-impact track is fit as ``r0 + a t^2`` (released from rest). For a
    settling object, contact is where that curve reaches the resting row; after
    a bounce, it is where it meets the rebound arc, which shares the curvature.
    The result is clamped to the impact frame's window.
    """
    frames = _frames(gen)
    impact = detect_impact(frames)
    if impact.kind == "none":
        raise MetricError("no impact detected before the clip ends")
    F = impact.frame
    coarse = F / fps
    rows = centroid_rows(frames)
    t = np.arange(len(rows)) / fps
    pre = np.arange(F)
    pre = pre[~np.isnan(rows[pre])]
    if pre.size < 2:
        return coarse
    A = np.column_stack([np.ones(pre.size), t[pre] ** 2])
    (r0, a), *_ = np.linalg.lstsq(A, rows[pre], rcond=None)
    if not a > 0:
        return coarse

    if impact.kind == "settle":
        drop = rows[F] - r0
        if not drop > 0:
            return coarse
        tc = math.sqrt(drop / a)
    else:
        # rebound frames certainly on the first arc: those at or above the row seen at F
        post = [F]
        for k in range(F + 1, len(rows)):
            if np.isnan(rows[k]) or rows[k] > rows[F]:
                break
            post.append(k)
        if len(post) < 2:
            return coarse
        post = np.array(post)
        B = np.column_stack([np.ones(post.size), t[post]])
        (c0, c1), *_ = np.linalg.lstsq(B, rows[post] - a * t[post] ** 2, rcond=None)
        if c1 == 0:
            return coarse
        tc = (r0 - c0) / c1
    return float(min(max(tc, (F - 1) / fps), F / fps))


def bottom_edge_rows(gen) -> np.ndarray:
    """Sub-pixel bottom boundary of each mask in pixel-edge coordinates; NaN if empty.

    The last foreground row ``r`` puts the boundary in ``[r + 0.5, r + 1.5)``;
    the ratio of its foreground count to the row above interpolates from
    ``r + 0.5`` (a vanishing tip) to ``r + 1`` (a flat bottom).
    """
    frames = _frames(gen)
    counts = frames.sum(axis=2)
    out = np.full(frames.shape[0], np.nan)
    for i, c in enumerate(counts):
        nz = np.flatnonzero(c)
        if nz.size == 0:
            continue
        r = nz[-1]
        above = c[r - 1] if r > 0 else 0
        frac = min(1.0, c[r] / above) if above > 0 else 0.5
        out[i] = r + 0.5 + 0.5 * frac
    return out


def bottom_sensor_y(cam: CameraModel, gen) -> np.ndarray:
    return (cam.image_height / 2.0 - bottom_edge_rows(gen)) * cam.pixel_pitch


def implied_depth(cam: CameraModel, y_bottom_t0, t_drop: float, g: float = 9.81) -> float:
    """Depth at which a drop from the ray through ``y_bottom_t0`` takes ``t_drop`` seconds."""
    b = beta(cam, y_bottom_t0)
    num = 0.5 * g * t_drop**2 - cam.camera_height
    if not b > 0:
        raise NoConsistentDepthError(f"ray slope {b:.4g} does not rise with depth")
    if not num > 0:
        raise NoConsistentDepthError(
            f"drop time {t_drop:.4g} s is too short for an object above camera height"
        )
    return num / b


def lift(cam: CameraModel, gen, fps: float, g: float = 9.81, subframe: bool = True) -> LiftedTrajectory:
    """World-height trajectory of the object's bottom, up to the drop time."""
    frames = _frames(gen)
    t_drop = refine_t_drop(frames, fps) if subframe else estimate_t_drop(frames, fps)
    N = min(int(math.floor(t_drop * fps)), frames.shape[0] - 1)
    y = bottom_sensor_y(cam, frames[: N + 1])
    if np.isnan(y[0]):
        raise MetricError("first frame is empty")
    Z = implied_depth(cam, y[0], t_drop, g)
    keep = ~np.isnan(y)
    times = np.arange(N + 1)[keep] / fps
    y = y[keep]
    return LiftedTrajectory(
        times=times,
        y_image=y,
        Y_world=cam.camera_height + beta(cam, y) * Z,
        implied_Z=Z,
        t_drop=t_drop,
        beta0=beta(cam, y[0]),
        camera_height=cam.camera_height,
    )


def parabola_residual_rms(traj: LiftedTrajectory, g: float = 9.81) -> float:
    """RMS residual of the least-squares fit ``Y(t) = Y0 - g t^2 / 2`` (free ``Y0``)."""
    fall = 0.5 * g * traj.times**2
    Y0 = float(np.mean(traj.Y_world + fall))
    return float(np.sqrt(np.mean((traj.Y_world - (Y0 - fall)) ** 2)))
