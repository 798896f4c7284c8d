"""File formats for mask sequences, dense float fields, and clip manifests.

Mask sequence (little-endian)::

    16 bytes  b"PISAMASKSEQv001\\0"
    u32 x 3   n_frames, height, width
    per frame: u32 run_count, then run_count u32 run lengths, alternating
               0-runs and 1-runs in row-major order, starting with 0-pixels

Field sequence (little-endian)::

    16 bytes  b"PISAFIELDSEQv01\\0"
    u32 x 4   n_frames, height, width, channels
    f32 payload, frame-major, then row-major, channel-interleaved

Manifest: UTF-8 text, one ``key = <JSON value>`` per line. Blank lines and
lines starting with ``#`` are ignored; unknown keys are kept in ``extras``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dropsim import ObjectSolid, SceneSpec
from .errors import FormatError, ValidationError
from .geometry import CameraModel
from .sequences import DenseFieldSequence, MaskSequence

MASK_MAGIC = b"PISAMASKSEQv001\0"
FIELD_MAGIC = b"PISAFIELDSEQv01\0"
SCHEMA_VERSION = 1

_U32 = struct.Struct("<I")


# --- masks -------------------------------------------------------------------


def encode_runs(frame: np.ndarray) -> np.ndarray:
    """Run lengths of a binary frame, row-major, first run counting 0-pixels."""
    flat = np.asarray(frame, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.uint32)
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], edges, [flat.size])))
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return runs.astype(np.uint32)


def decode_runs(runs, height: int, width: int) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64)
    values = np.arange(runs.size) % 2 == 1
    return np.repeat(values, runs).reshape(height, width)


def encode_mask_sequence(seq: MaskSequence) -> bytes:
    n, h, w = seq.frames.shape
    parts = [MASK_MAGIC, struct.pack("<3I", n, h, w)]
    for frame in seq.frames:
        runs = encode_runs(frame)
        parts.append(_U32.pack(runs.size))
        parts.append(runs.astype("<u4").tobytes())
    return b"".join(parts)


def decode_mask_sequence(data: bytes, object_id: str = "") -> MaskSequence:
    if len(data) < 16 or data[:16] != MASK_MAGIC:
        raise FormatError("bad mask-sequence magic", 0)
    if len(data) < 28:
        raise FormatError("truncated mask-sequence header", len(data))
    n, h, w = struct.unpack_from("<3I", data, 16)
    frames = np.zeros((n, h, w), dtype=bool)
    off = 28
    for i in range(n):
        if off + 4 > len(data):
            raise FormatError(f"truncated before frame {i} run count", off)
        (count,) = _U32.unpack_from(data, off)
        start = off
        off += 4
        if off + 4 * count > len(data):
            raise FormatError(f"truncated in frame {i} runs", off)
        runs = np.frombuffer(data, dtype="<u4", count=count, offset=off).astype(np.int64)
        off += 4 * count
        if runs.sum() != h * w:
            raise FormatError(
                f"frame {i}: run lengths sum to {int(runs.sum())}, expected {h * w}", start
            )
        frames[i] = decode_runs(runs, h, w)
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after last frame", off)
    return MaskSequence(frames, object_id=object_id)


def write_mask_sequence(seq: MaskSequence, path) -> None:
    Path(path).write_bytes(encode_mask_sequence(seq))


def read_mask_sequence(path, object_id: str = "") -> MaskSequence:
    return decode_mask_sequence(Path(path).read_bytes(), object_id=object_id)


# --- dense fields ------------------------------------------------------------


def _check_finite(arr: np.ndarray) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        flat = int(np.flatnonzero(bad.ravel())[0])
        idx = np.unravel_index(flat, arr.shape)
        raise ValidationError(
            f"non-finite value at element {flat} (frame, row, col, channel) = {tuple(int(i) for i in idx)}"
        )


def encode_field_sequence(seq: DenseFieldSequence) -> bytes:
    arr = np.ascontiguousarray(seq.frames, dtype="<f4")
    _check_finite(arr)
    return FIELD_MAGIC + struct.pack("<4I", *arr.shape) + arr.tobytes()


def decode_field_sequence(data: bytes) -> DenseFieldSequence:
    if len(data) < 16 or data[:16] != FIELD_MAGIC:
        raise FormatError("bad field-sequence magic", 0)
    if len(data) < 32:
        raise FormatError("truncated field-sequence header", len(data))
    n, h, w, c = struct.unpack_from("<4I", data, 16)
    expected = 4 * n * h * w * c
    if len(data) - 32 != expected:
        raise FormatError(
            f"payload is {len(data) - 32} bytes, header dims {n}x{h}x{w}x{c} need {expected}", 32
        )
    arr = np.frombuffer(data, dtype="<f4", offset=32).reshape(n, h, w, c).astype(np.float32)
    _check_finite(arr)
    return DenseFieldSequence(arr)


def write_field_sequence(seq: DenseFieldSequence, path) -> None:
    Path(path).write_bytes(encode_field_sequence(seq))


def read_field_sequence(path) -> DenseFieldSequence:
    return decode_field_sequence(Path(path).read_bytes())


# --- manifests ---------------------------------------------------------------

_CAMERA_KEYS = ("focal_length", "sensor_width", "image_width", "image_height", "camera_height")
_REQUIRED = ("schema_version", "fps", "n_frames") + tuple(f"camera.{k}" for k in _CAMERA_KEYS)
_SCENE_KEYS = ("shape", "size", "albedo", "Y0", "Z", "restitution", "rng_seed", "label")


@dataclass
class ClipManifest:
    fps: float
    n_frames: int
    camera: CameraModel = field(default_factory=CameraModel)
    gravity: float = 9.81
    scene: Optional[SceneSpec] = None
    object_ids: list = field(default_factory=lambda: ["dropper"])
    caption: str = ""
    schema_version: int = SCHEMA_VERSION
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {self.schema_version}")
        if not self.fps > 0:
            raise ValidationError(f"fps must be > 0, got {self.fps}")
        if self.n_frames < 2:
            raise ValidationError(f"n_frames must be >= 2, got {self.n_frames}")
        if not self.gravity > 0:
            raise ValidationError(f"gravity must be > 0, got {self.gravity}")

    @classmethod
    def from_scene(cls, spec: SceneSpec, gravity: float = 9.81, **kw) -> "ClipManifest":
        kw.setdefault("caption", f"{spec.dropper.describe()} falls.")
        return cls(
            fps=spec.fps, n_frames=spec.n_frames, camera=spec.camera, gravity=gravity, scene=spec, **kw
        )


def _dump(value) -> str:
    return json.dumps(value, ensure_ascii=False, allow_nan=False)


def dumps_manifest(m: ClipManifest) -> str:
    items = [
        ("schema_version", m.schema_version),
        ("fps", m.fps),
        ("n_frames", m.n_frames),
        ("gravity", m.gravity),
    ]
    items += [(f"camera.{k}", getattr(m.camera, k)) for k in _CAMERA_KEYS]
    items += [("object_ids", list(m.object_ids)), ("caption", m.caption)]
    if m.scene is not None:
        s = m.scene
        values = {
            "shape": s.dropper.shape,
            "size": list(s.dropper.size),
            "albedo": s.dropper.albedo,
            "Y0": s.Y0,
            "Z": s.Z,
            "restitution": s.restitution,
            "rng_seed": s.rng_seed,
            "label": s.label,
        }
        items += [(f"scene.{k}", values[k]) for k in _SCENE_KEYS if values[k] is not None]
    items += sorted(m.extras.items())
    return "".join(f"{k} = {_dump(v)}\n" for k, v in items)


def loads_manifest(text: str) -> ClipManifest:
    values = {}
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), 1):
        start = offset
        offset += len(line.encode("utf-8"))
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise FormatError(f"line {lineno}: expected 'key = value'", start)
        if key in values:
            raise FormatError(f"line {lineno}: duplicate key {key!r}", start)
        try:
            values[key] = json.loads(raw.strip())
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: bad value for {key!r}: {exc.msg}", start) from None
    for key in _REQUIRED:
        if key not in values:
            raise ValidationError(f"manifest missing required key {key!r}")
    if values["schema_version"] != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {values['schema_version']!r}")
    try:
        camera = CameraModel(**{k: values.pop(f"camera.{k}") for k in _CAMERA_KEYS})
        fps = values.pop("fps")
        n_frames = values.pop("n_frames")
        scene_vals = {k: values.pop(f"scene.{k}") for k in _SCENE_KEYS if f"scene.{k}" in values}
        scene = None
        if scene_vals:
            for k in ("shape", "size", "Y0", "Z"):
                if k not in scene_vals:
                    raise ValidationError(f"manifest scene echo missing 'scene.{k}'")
            scene = SceneSpec(
                dropper=ObjectSolid(scene_vals["shape"], scene_vals["size"], scene_vals.get("albedo", "gray")),
                Y0=scene_vals["Y0"],
                Z=scene_vals["Z"],
                fps=fps,
                n_frames=n_frames,
                restitution=scene_vals.get("restitution", 0.0),
                camera=camera,
                rng_seed=scene_vals.get("rng_seed", 0),
                label=scene_vals.get("label"),
            )
        return ClipManifest(
            schema_version=values.pop("schema_version"),
            fps=fps,
            n_frames=n_frames,
            camera=camera,
            gravity=values.pop("gravity", 9.81),
            scene=scene,
            object_ids=values.pop("object_ids", ["dropper"]),
            caption=values.pop("caption", ""),
            extras=values,
        )
    except TypeError as exc:
        raise ValidationError(f"manifest has a value of the wrong type: {exc}") from None


def write_manifest(m: ClipManifest, path) -> None:
    Path(path).write_bytes(dumps_manifest(m).encode("utf-8"))


def read_manifest(path) -> ClipManifest:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("manifest is not valid UTF-8", exc.start) from None
    return loads_manifest(text)

