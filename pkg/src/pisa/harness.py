"""Dataset generation, evaluation runs, and report files.

Dataset layout::

    <out>/index.csv                 clip_id,mode,label,group,seed
    <out>/clips/<clip_id>/manifest.txt
    <out>/clips/<clip_id>/masks.pmsk
    <out>/clips/<clip_id>/trajectory.csv

Predictions mirror it: ``<pred>/<clip_id>/masks.pmsk`` plus an optional
``manifest.txt`` whose ``fps`` gives the generated frame rate.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import dropsim, maskio
from .errors import FormatError, MetricError, PisaError, ValidationError
from .metrics import evaluate
from .rng import derive_seed
from .sequences import MaskSequence

log = logging.getLogger(__name__)

SPLITS = ("real", "sim_seen", "sim_unseen", "ood_id", "ood_ood", "ambiguous")
BASELINES = ("identity", "static")
INDEX_FIELDS = ("clip_id", "mode", "label", "group", "seed")
REPORT_FIELDS = ("clip_id", "label", "l2", "chamfer", "iou", "time_error", "status", "message")


def resolve(cli_value, env_name: str, manifest_value=None, default=None, cast=float):
    """Setting precedence: CLI flag, then ``PISA_<NAME>`` env var, then manifest, then default."""
    if cli_value is not None:
        return cast(cli_value)
    env = os.environ.get(f"PISA_{env_name}")
    if env not in (None, ""):
        try:
            return cast(env)
        except ValueError:
            raise ValidationError(f"PISA_{env_name}={env!r} is not a valid value") from None
    if manifest_value is not None:
        return cast(manifest_value)
    return default


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x + 0.0)
    return str(x)


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(row.get(f)) for f in fields])
    return buf.getvalue()


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# --- generation --------------------------------------------------------------


@dataclass(frozen=True)
class ClipJob:
    clip_id: str
    mode: str
    seed: int
    group: str = ""
    variant: Optional[int] = None
    n_variants: int = 0
    restitution_max: float = 0.0


def _write_clip(clip_dir: Path, spec: dropsim.SceneSpec, gravity: float) -> None:
    traj = dropsim.simulate(spec, gravity)
    masks = dropsim.rasterize_masks(spec, traj)
    extras = {"truth.contact_time": traj.contact_time}
    if masks.empty_frames:
        extras["truth.empty_frames"] = masks.empty_frames
    clip_dir.mkdir(parents=True, exist_ok=True)
    maskio.write_manifest(maskio.ClipManifest.from_scene(spec, gravity, extras=extras), clip_dir / "manifest.txt")
    maskio.write_mask_sequence(masks, clip_dir / "masks.pmsk")
    rows = [
        {"frame": i, "time_s": float(t), "bottom_Y_m": float(y)}
        for i, (t, y) in enumerate(zip(traj.times, traj.bottom_Y))
    ]
    (clip_dir / "trajectory.csv").write_text(_csv_text(("frame", "time_s", "bottom_Y_m"), rows))


def _run_job(args) -> dict:
    job, clips_dir, gravity = args
    if job.mode == "ambiguous":
        base = dropsim.sample_scene("psft", job.seed, job.restitution_max)
        spec = dropsim.ambiguate(base, job.n_variants, rng_seed=derive_seed(job.seed, 1))[job.variant]
    else:
        spec = dropsim.sample_scene(job.mode, job.seed, job.restitution_max)
    _write_clip(clips_dir / job.clip_id, spec, gravity)
    return {"clip_id": job.clip_id, "mode": job.mode, "label": spec.label or "", "group": job.group, "seed": job.seed}


def plan_jobs(mode: str, seed: int, count: int = 0, scenes: int = 0, variants: int = 5, restitution_max=0.0):
    if mode not in dropsim.MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    if mode == "ambiguous":
        jobs = []
        for s in range(scenes):
            scene_seed = derive_seed(seed, s)
            for v in range(variants):
                jobs.append(
                    ClipJob(f"amb_{s:05d}_v{v}", mode, scene_seed, f"scene_{s:05d}", v, variants, restitution_max)
                )
        return jobs
    prefix = {"psft": "psft", "ood_grid": "ood"}[mode]
    return [
        ClipJob(f"{prefix}_{i:06d}", mode, derive_seed(seed, i), restitution_max=restitution_max)
        for i in range(count)
    ]


def generate_dataset(
    mode: str,
    out_dir,
    seed: int = 0,
    count: int = 5000,
    scenes: int = 1000,
    variants: int = 5,
    gravity: float = dropsim.GRAVITY,
    restitution_max: float = 0.0,
    workers: int = 1,
    force: bool = False,
) -> list[dict]:
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ValidationError(f"{out} is not empty (use --force to overwrite)")
        if (out / "clips").is_dir():
            shutil.rmtree(out / "clips")
        (out / "index.csv").unlink(missing_ok=True)
    clips = out / "clips"
    clips.mkdir(parents=True, exist_ok=True)
    jobs = plan_jobs(mode, seed, count, scenes, variants, restitution_max)
    rows = _map(_run_job, [(j, clips, gravity) for j in jobs], workers)
    rows.sort(key=lambda r: r["clip_id"])
    (out / "index.csv").write_text(_csv_text(INDEX_FIELDS, rows))
    log.info("wrote %d clips to %s", len(rows), out)
    return rows


def read_index(dataset_dir) -> list[dict]:
    root = Path(dataset_dir)
    index = root / "index.csv"
    if index.exists():
        with index.open(newline="") as fh:
            return sorted(csv.DictReader(fh), key=lambda r: r["clip_id"])
    clips = root / "clips"
    if not clips.is_dir():
        raise ValidationError(f"{root} has neither index.csv nor clips/")
    return [{"clip_id": p.name, "label": ""} for p in sorted(clips.iterdir()) if p.is_dir()]


# --- evaluation --------------------------------------------------------------


@dataclass
class EvalRun:
    dataset_dir: Path
    predictions_dir: Optional[Path]
    report_path: Path
    split: Optional[str] = None
    seed: int = 0
    baseline: Optional[str] = None
    gen_fps: Optional[float] = None
    gravity: Optional[float] = None
    skip_errors: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.split is not None and self.split not in SPLITS:
            raise ValidationError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        if self.baseline is not None and self.baseline not in BASELINES:
            raise ValidationError(f"unknown baseline {self.baseline!r}")
        if self.baseline is None and self.predictions_dir is None:
            raise ValidationError("need a predictions directory or a built-in baseline")


def baseline_prediction(kind: str, gt: MaskSequence) -> MaskSequence:
    if kind == "identity":
        return MaskSequence(gt.frames.copy(), gt.object_id)
    if kind == "static":
        return MaskSequence(np.repeat(gt.frames[:1], gt.n_frames, axis=0), gt.object_id)
    raise ValidationError(f"unknown baseline {kind!r}")


def _eval_clip(args) -> dict:
    run, entry = args
    clip_id = entry["clip_id"]
    row = {"clip_id": clip_id, "label": entry.get("label", ""), "status": "ok", "message": ""}
    try:
        gt_dir = Path(run.dataset_dir) / "clips" / clip_id
        manifest = maskio.read_manifest(gt_dir / "manifest.txt")
        gt = maskio.read_mask_sequence(gt_dir / "masks.pmsk", object_id=clip_id)
        pred_manifest = None
        if run.baseline:
            gen = baseline_prediction(run.baseline, gt)
        else:
            pred_dir = Path(run.predictions_dir) / clip_id
            if not (pred_dir / "masks.pmsk").exists():
                raise ValidationError(f"no prediction masks at {pred_dir / 'masks.pmsk'}")
            gen = maskio.read_mask_sequence(pred_dir / "masks.pmsk", object_id=clip_id)
            if (pred_dir / "manifest.txt").exists():
                pred_manifest = maskio.read_manifest(pred_dir / "manifest.txt")
        gen_fps = resolve(run.gen_fps, "GEN_FPS", pred_manifest.fps if pred_manifest else None, manifest.fps)
        g = resolve(run.gravity, "GRAVITY", manifest.gravity)
        Y0 = manifest.scene.Y0 if manifest.scene is not None else None
        rep = evaluate(gen, gt, gen_fps, manifest.fps, Y0=Y0, g=g)
        row.update(l2=rep.l2, chamfer=rep.chamfer, iou=rep.iou, time_error=rep.time_error)
    except PisaError as exc:
        kind = "format" if isinstance(exc, FormatError) else "metric" if isinstance(exc, MetricError) else "validation"
        row.update(status=kind, message=str(exc), exit_code=exc.exit_code)
    except FileNotFoundError as exc:
        row.update(status="validation", message=f"missing file: {exc.filename}", exit_code=2)
    return row


def _select(entries, split):
    if split == "ood_id":
        return [e for e in entries if e.get("label") == "ID"]
    if split == "ood_ood":
        return [e for e in entries if e.get("label") == "OOD"]
    return entries


def aggregate(rows) -> dict:
    """Mean metrics per label group, plus an ``all`` group. Error rows are excluded."""
    ok = [r for r in rows if r["status"] == "ok"]
    groups = {"all": ok}
    for label in sorted({r["label"] for r in ok if r["label"]}):
        groups[label] = [r for r in ok if r["label"] == label]
    out = {}
    for name, members in groups.items():
        stats = {"n": len(members)}
        for key in ("l2", "chamfer", "iou", "time_error"):
            vals = [float(r[key]) for r in members if r.get(key) not in (None, "")]
            stats[key] = float(np.mean(vals)) if vals else None
        out[name] = stats
    return out


def summary_text(run_info: dict, groups: dict) -> str:
    lines = [f"{k} = {maskio._dump(v)}\n" for k, v in run_info.items()]
    for name, stats in groups.items():
        for key, val in stats.items():
            lines.append(f"group.{name}.{key} = {maskio._dump(val)}\n")
    return "".join(lines)


def summary_path(report_path) -> Path:
    p = Path(report_path)
    return p.with_name(p.stem + ".summary.txt")


def run_eval(run: EvalRun) -> tuple[list[dict], dict, int]:
    """Evaluate every clip; returns per-clip rows, group aggregates, and the exit code."""
    entries = _select(read_index(run.dataset_dir), run.split)
    rows = _map(_eval_clip, [(run, e) for e in entries], run.workers)
    rows.sort(key=lambda r: r["clip_id"])
    groups = aggregate(rows)
    errors = [r for r in rows if r["status"] != "ok"]
    info = {
        "run.split": run.split or "all",
        "run.baseline": run.baseline or "",
        "run.n_clips": len(rows),
        "run.n_errors": len(errors),
    }
    report = Path(run.report_path)
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(_csv_text(REPORT_FIELDS, rows))
    summary_path(report).write_text(summary_text(info, groups))
    code = 0
    if errors and not run.skip_errors:
        code = errors[0].get("exit_code", 4)
    for r in errors:
        log.error("clip %s: %s", r["clip_id"], r["message"])
    return rows, groups, code


def read_report(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(REPORT_FIELDS) - set(rows[0] if rows else REPORT_FIELDS)
    if missing:
        raise FormatError(f"{path}: report is missing columns {sorted(missing)}")
    return rows


def report_table(paths) -> str:
    """Markdown table of group means across one or more per-clip reports."""
    lines = ["| report | group | n | L2 | Chamfer | IoU | Time error |", "|---|---|---|---|---|---|---|"]

    def cell(v):
        return "-" if v is None else f"{v:.4f}"

    for path in paths:
        for name, s in aggregate(read_report(path)).items():
            lines.append(
                f"| {Path(path).stem} | {name} | {s['n']} | {cell(s['l2'])} | {cell(s['chamfer'])} "
                f"| {cell(s['iou'])} | {cell(s['time_error'])} |"
            )
    return "\n".join(lines) + "\n"
