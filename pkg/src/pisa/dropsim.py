"""Analytic dropping-scene simulator.

Single rigid solids fall from rest, bounce off the ground with a coefficient
of restitution, and are rendered as exact perspective silhouettes. No physics
engine or renderer is involved: trajectories are closed form and masks come
from per-pixel ray tests.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MetricError, SamplerError, ValidationError
from .geometry import CameraModel, col_to_sensor_x
from .metrics import detect_impact, window_error
from .rng import derive_seed, make_rng
from .sequences import MaskSequence

GRAVITY = 9.81

MODES = ("psft", "ood_grid", "ambiguous")

PSFT_DEPTH = (1.0, 3.0)
PSFT_HEIGHT = (0.5, 1.5)
PSFT_CAMERA_HEIGHT = (0.4, 0.6)
OOD_DEPTH = (1.0, 5.0)
OOD_HEIGHT = (0.5, 2.5)
OOD_CAMERA_HEIGHT = 0.5
AMBIGUOUS_DEPTH = (2.0, 18.0)

FPS = 16
N_FRAMES = 32
MAX_ATTEMPTS = 1000

_ALBEDOS = ("red", "green", "blue", "yellow", "white", "black", "orange", "purple")


@dataclass(frozen=True)
class ObjectSolid:
    """A sphere (``size=(radius,)``) or box (``size=(half_w, half_d, half_h)``)."""

    shape: str
    size: tuple
    albedo: str = "gray"

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if self.shape == "sphere":
            if len(self.size) != 1:
                raise ValidationError("sphere size is (radius,)")
        elif self.shape == "box":
            if len(self.size) != 3:
                raise ValidationError("box size is (half_width, half_depth, half_height)")
        else:
            raise ValidationError(f"unknown shape {self.shape!r}")
        if any(not s > 0 for s in self.size):
            raise ValidationError("all size components must be > 0")

    @property
    def half_height(self) -> float:
        return self.size[0] if self.shape == "sphere" else self.size[2]

    @property
    def half_depth(self) -> float:
        return self.size[0] if self.shape == "sphere" else self.size[1]

    def scaled(self, k: float) -> "ObjectSolid":
        return ObjectSolid(self.shape, tuple(k * s for s in self.size), self.albedo)

    def describe(self) -> str:
        return f"a {self.albedo} {self.shape}"


@dataclass(frozen=True)
class SceneSpec:
    dropper: ObjectSolid
    Y0: float  # height of the object's bottom above the ground
    Z: float  # depth of the object's center
    fps: float = FPS
    n_frames: int = N_FRAMES
    restitution: float = 0.0
    camera: CameraModel = CameraModel()
    rng_seed: int = 0
    label: Optional[str] = None

    def __post_init__(self):
        if not self.Y0 > 0:
            raise ValidationError(f"Y0 must be > 0, got {self.Y0}")
        if not self.Z > 0:
            raise ValidationError(f"Z must be > 0, got {self.Z}")
        if not self.fps > 0:
            raise ValidationError(f"fps must be > 0, got {self.fps}")
        if self.n_frames < 2:
            raise ValidationError(f"n_frames must be >= 2, got {self.n_frames}")
        if not 0.0 <= self.restitution < 1.0:
            raise ValidationError(f"restitution must lie in [0, 1), got {self.restitution}")
        if self.Z - self.dropper.half_depth <= 0:
            raise ValidationError("object must lie entirely in front of the camera")

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps


@dataclass
class TrajectorySample:
    times: np.ndarray
    bottom_Y: np.ndarray
    contact_time: float


def contact_time(Y0: float, g: float = GRAVITY) -> float:
    return math.sqrt(2.0 * Y0 / g)


def bottom_height(t, Y0: float, restitution: float = 0.0, g: float = GRAVITY):
    """Height of the object's bottom at times ``t`` (free fall, then bounces)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    tc = contact_time(Y0, g)
    falling = t <= tc
    out[falling] = np.maximum(Y0 - 0.5 * g * t[falling] ** 2, 0.0)
    if restitution > 0:
        start, v = tc, restitution * g * tc
        t_end = float(t.max(initial=0.0))
        while v > 1e-9 and start < t_end:
            dur = 2.0 * v / g
            sel = (t > start) & (t <= start + dur)
            s = t[sel] - start
            out[sel] = np.maximum(v * s - 0.5 * g * s**2, 0.0)
            start += dur
            v *= restitution
    return out


def simulate(spec: SceneSpec, g: float = GRAVITY) -> TrajectorySample:
    times = np.arange(spec.n_frames) / spec.fps
    return TrajectorySample(
        times=times,
        bottom_Y=bottom_height(times, spec.Y0, spec.restitution, g),
        contact_time=contact_time(spec.Y0, g),
    )


# --- silhouettes -------------------------------------------------------------


def _box_corners(cam: CameraModel, solid: ObjectSolid, bottom_Y: float, Z: float):
    hw, hd, hh = solid.size
    ys = np.array([bottom_Y, bottom_Y + 2 * hh]) - cam.camera_height
    corners = np.array([(x, y, z) for x in (-hw, hw) for y in ys for z in (Z - hd, Z + hd)])
    f = cam.focal_length
    return f * corners[:, 0] / corners[:, 2], f * corners[:, 1] / corners[:, 2]


def sensor_extent(cam: CameraModel, solid: ObjectSolid, bottom_Y: float, Z: float):
    """``(x_min, x_max, y_min, y_max)`` of the silhouette on the sensor, in mm.

    Vertical bounds are exact. For spheres the horizontal bound is that of the
    enclosing cube, which is conservative.
    """
    f = cam.focal_length
    if solid.shape == "sphere":
        r = solid.size[0]
        cy = bottom_Y + r - cam.camera_height
        theta = math.atan2(cy, Z)
        alpha = math.asin(r / math.hypot(cy, Z))
        xm = f * r / (Z - r)
        return -xm, xm, f * math.tan(theta - alpha), f * math.tan(theta + alpha)
    xs, ys = _box_corners(cam, solid, bottom_Y, Z)
    return xs.min(), xs.max(), ys.min(), ys.max()


def fits_in_frame(cam: CameraModel, solid: ObjectSolid, bottom_Y: float, Z: float) -> bool:
    x0, x1, y0, y1 = sensor_extent(cam, solid, bottom_Y, Z)
    s = cam.half_sensor
    return -s <= x0 and x1 <= s and -s <= y0 and y1 <= s


def visible_at_rest(cam: CameraModel, solid: ObjectSolid, Z: float) -> bool:
    """True when at least one full pixel row of the resting object is in frame."""
    _, _, _, y1 = sensor_extent(cam, solid, 0.0, Z)
    return y1 > -cam.half_sensor + cam.pixel_pitch


def _row_centers(cam: CameraModel, y_lo: float, y_hi: float):
    """Rows whose center sensor height lies in [y_lo, y_hi]."""
    H, p = cam.image_height, cam.pixel_pitch
    r_lo = max(0, int(math.floor(H / 2 - y_hi / p - 0.5)) - 1)
    r_hi = min(H - 1, int(math.ceil(H / 2 - y_lo / p - 0.5)) + 1)
    rows = np.arange(r_lo, r_hi + 1)
    return rows, (H / 2 - (rows + 0.5)) * p


def _render_sphere(cam, r, bottom_Y, Z, out):
    x0, x1, y0, y1 = sensor_extent(cam, ObjectSolid("sphere", (r,)), bottom_Y, Z)
    rows, yr = _row_centers(cam, y0, y1)
    W, p = cam.image_width, cam.pixel_pitch
    c_lo = max(0, int(math.floor(x0 / p + W / 2 - 0.5)) - 1)
    c_hi = min(W - 1, int(math.ceil(x1 / p + W / 2 - 0.5)) + 1)
    if rows.size == 0 or c_lo > c_hi:
        return
    cols = np.arange(c_lo, c_hi + 1)
    xs = col_to_sensor_x(cam, cols)
    f = cam.focal_length
    cy = bottom_Y + r - cam.camera_height
    # pixel ray d = (x, y, f); inside iff angle(d, c) <= asin(r/|c|)
    dx, dy = np.meshgrid(xs, yr)
    dot = dy * cy + f * Z
    c2 = cy * cy + Z * Z
    d2 = dx * dx + dy * dy + f * f
    inside = (dot > 0) & (dot * dot >= d2 * (c2 - r * r))
    out[rows[0] : rows[-1] + 1, c_lo : c_hi + 1] |= inside


def _convex_hull(points):
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _render_box(cam, solid, bottom_Y, Z, out):
    xs, ys = _box_corners(cam, solid, bottom_Y, Z)
    hull = np.array(_convex_hull(np.column_stack([xs, ys])))
    rows, yr = _row_centers(cam, ys.min(), ys.max())
    if rows.size == 0:
        return
    # scanline: x-interval of the convex polygon on each row-center line
    xl = np.full(yr.shape, np.inf)
    xr = np.full(yr.shape, -np.inf)
    for (ax, ay), (bx, by) in zip(hull, np.roll(hull, -1, axis=0)):
        lo, hi = min(ay, by), max(ay, by)
        hit = (yr >= lo) & (yr <= hi)
        if not hit.any():
            continue
        if ay == by:
            xa = np.full(hit.sum(), min(ax, bx))
            xb = np.full(hit.sum(), max(ax, bx))
        else:
            xa = xb = ax + (yr[hit] - ay) * (bx - ax) / (by - ay)
        xl[hit] = np.minimum(xl[hit], xa)
        xr[hit] = np.maximum(xr[hit], xb)
    W, p = cam.image_width, cam.pixel_pitch
    cx = col_to_sensor_x(cam, np.arange(W))
    inside = (cx[None, :] >= xl[:, None]) & (cx[None, :] <= xr[:, None])
    out[rows[0] : rows[-1] + 1, :] |= inside


def render_solid(cam: CameraModel, solid: ObjectSolid, bottom_Y: float, Z: float) -> np.ndarray:
    """Binary silhouette of ``solid`` with its bottom at ``bottom_Y``, centered at depth ``Z``."""
    out = np.zeros((cam.image_height, cam.image_width), dtype=bool)
    if solid.shape == "sphere":
        _render_sphere(cam, solid.size[0], bottom_Y, Z, out)
    else:
        _render_box(cam, solid, bottom_Y, Z, out)
    return out


def rasterize_masks(spec: SceneSpec, traj: TrajectorySample, object_id: str = "dropper") -> MaskSequence:
    frames = np.stack([render_solid(spec.camera, spec.dropper, y, spec.Z) for y in traj.bottom_Y])
    return MaskSequence(frames, object_id=object_id)


# --- sampling ----------------------------------------------------------------


def _sample_solid(rng: np.random.Generator) -> ObjectSolid:
    albedo = _ALBEDOS[int(rng.integers(len(_ALBEDOS)))]
    if rng.random() < 0.5:
        return ObjectSolid("sphere", (rng.uniform(0.04, 0.12),), albedo)
    return ObjectSolid("box", tuple(rng.uniform(0.03, 0.12, size=3)), albedo)


def _acceptable(cam: CameraModel, solid: ObjectSolid, Y0: float, Z: float) -> bool:
    return fits_in_frame(cam, solid, Y0, Z) and visible_at_rest(cam, solid, Z)


def impact_resolvable(spec: SceneSpec, g: float = GRAVITY) -> bool:
    """True when the impact detector, run on the scene's own masks, brackets the contact time.

    Fails when the last pre-contact frame sits within the detector threshold of
    the resting position, which makes that clip's ground truth self-inconsistent.
    """
    traj = simulate(spec, g)
    masks = rasterize_masks(spec, traj)
    try:
        impact = detect_impact(masks.frames)
    except MetricError:
        return False
    return impact.kind != "none" and window_error(impact.frame, spec.fps, traj.contact_time) == 0.0


def _sample_base(rng, depth, height, cam_height, restitution_max, seed, label_fn=None, mode=""):
    for _ in range(MAX_ATTEMPTS):
        Z = float(rng.uniform(*depth))
        Y0 = float(rng.uniform(*height))
        h = cam_height if np.isscalar(cam_height) else rng.uniform(*cam_height)
        solid = _sample_solid(rng)
        e = float(rng.uniform(0.0, restitution_max)) if restitution_max > 0 else 0.0
        cam = CameraModel(camera_height=float(h))
        if solid.half_depth >= Z or not _acceptable(cam, solid, Y0, Z):
            continue
        label = label_fn(Z, Y0) if label_fn else None
        spec = SceneSpec(solid, Y0, Z, restitution=e, camera=cam, rng_seed=int(seed), label=label)
        if impact_resolvable(spec):
            return spec
    raise SamplerError(f"{mode}: no acceptable scene after {MAX_ATTEMPTS} attempts")


def ood_label(Z: float, Y0: float) -> str:
    in_dist = PSFT_DEPTH[0] <= Z <= PSFT_DEPTH[1] and PSFT_HEIGHT[0] <= Y0 <= PSFT_HEIGHT[1]
    return "ID" if in_dist else "OOD"


def sample_scene(mode: str, rng_seed: int, restitution_max: float = 0.0) -> SceneSpec:
    """Draw one dropping scene. The same ``(mode, rng_seed)`` always gives the same scene.

    ``restitution_max`` > 0 draws the coefficient of restitution from U[0, max).
    """
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    rng = make_rng(rng_seed)
    if mode == "ood_grid":
        spec = _sample_base(
            rng, OOD_DEPTH, OOD_HEIGHT, OOD_CAMERA_HEIGHT, restitution_max, rng_seed, ood_label, mode
        )
    else:
        spec = _sample_base(
            rng, PSFT_DEPTH, PSFT_HEIGHT, PSFT_CAMERA_HEIGHT, restitution_max, rng_seed, mode=mode
        )
    if mode == "ambiguous":
        return ambiguate(spec, 1, rng_seed=derive_seed(rng_seed, 1))[0]
    return spec


def scale_along_ray(spec: SceneSpec, Z_new: float, rng_seed: Optional[int] = None) -> SceneSpec:
    """Scale the object about the camera center so it sits at depth ``Z_new``.

    The initial silhouette is unchanged; the bottom lands on the same camera ray.
    """
    seed = spec.rng_seed if rng_seed is None else rng_seed
    if Z_new == spec.Z:
        return dataclasses.replace(spec, rng_seed=seed)
    k = Z_new / spec.Z
    h = spec.camera.camera_height
    Y0 = h + k * (spec.Y0 - h)
    if not Y0 > 0:
        raise ValidationError(f"object would intersect the ground at depth {Z_new}")
    return dataclasses.replace(spec, dropper=spec.dropper.scaled(k), Y0=Y0, Z=Z_new, rng_seed=seed)


def ambiguate(
    spec: SceneSpec,
    n_variants: int,
    Z_min: float = AMBIGUOUS_DEPTH[0],
    Z_max: float = AMBIGUOUS_DEPTH[1],
    rng_seed: int = 0,
    require_resolvable: bool = True,
) -> list[SceneSpec]:
    """Depth-ambiguous copies of ``spec`` that share its first frame exactly.

    Depths that would sink the object into the ground, or (with
    ``require_resolvable``) make its impact undetectable, are redrawn.
    """
    if not 0 < Z_min < Z_max:
        raise ValidationError("need 0 < Z_min < Z_max")
    variants = []
    for v in range(n_variants):
        rng = make_rng(rng_seed, v)
        for _ in range(MAX_ATTEMPTS):
            Z_new = float(rng.uniform(Z_min, Z_max))
            try:
                variant = scale_along_ray(spec, Z_new, rng_seed=derive_seed(rng_seed, v))
            except ValidationError:
                continue
            if require_resolvable and not impact_resolvable(variant):
                continue
            variants.append(variant)
            break
        else:
            raise SamplerError(f"variant {v}: no acceptable depth after {MAX_ATTEMPTS} draws")
    return variants
