"""``pisa`` command line.

Exit codes: 0 success, 2 validation, 3 format, 4 metric error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import distkit, harness, lift3d, maskio, rewards
from .errors import FormatError, PisaError, ValidationError
from .geometry import project_y
from .sequences import DenseFieldSequence

log = logging.getLogger("pisa")


def _seed(args) -> int:
    return harness.resolve(args.seed, "SEED", default=0, cast=int)


def _workers(args) -> int:
    return harness.resolve(args.workers, "WORKERS", default=harness.default_workers(), cast=int)


def cmd_gen(args) -> int:
    gravity = harness.resolve(args.gravity, "GRAVITY", default=9.81)
    rows = harness.generate_dataset(
        args.mode,
        args.out,
        seed=_seed(args),
        count=args.count,
        scenes=args.scenes,
        variants=args.variants,
        gravity=gravity,
        restitution_max=args.restitution_max,
        workers=_workers(args),
        force=args.force,
    )
    print(f"clips = {len(rows)}")
    return 0


def cmd_eval(args) -> int:
    run = harness.EvalRun(
        dataset_dir=Path(args.dataset),
        predictions_dir=Path(args.predictions) if args.predictions else None,
        report_path=Path(args.report),
        split=args.split,
        seed=_seed(args),
        baseline=args.baseline,
        gen_fps=args.gen_fps,
        gravity=args.gravity,
        skip_errors=args.skip_errors,
        workers=_workers(args),
    )
    _, groups, code = harness.run_eval(run)
    for name, stats in groups.items():
        vals = " ".join(f"{k}={'-' if v is None else round(v, 6)}" for k, v in stats.items())
        print(f"{name}: {vals}")
    return code


def read_times(path) -> np.ndarray:
    values = []
    offset = 0
    for lineno, line in enumerate(Path(path).read_bytes().decode("utf-8").splitlines(keepends=True), 1):
        text = line.strip()
        if text and not text.startswith("#"):
            try:
                values.append(float(text))
            except ValueError:
                raise FormatError(f"{path} line {lineno}: not a number: {text!r}", offset) from None
        offset += len(line.encode("utf-8"))
    return np.array(values)


def distribution_from_manifest(m: maskio.ClipManifest, z_min: float, z_max: float, g: float):
    if "object.y_bottom_mm" in m.extras:
        y = float(m.extras["object.y_bottom_mm"])
    elif m.scene is not None:
        y = project_y(m.camera, m.scene.Y0, m.scene.Z)
    else:
        raise ValidationError("manifest needs a scene echo or 'object.y_bottom_mm'")
    return distkit.DropTimeDistribution(
        beta=y / m.camera.focal_length, h_offset=m.camera.camera_height, Z_min=z_min, Z_max=z_max, g=g
    )


def cmd_dist(args) -> int:
    m = maskio.read_manifest(args.manifest)
    g = harness.resolve(args.gravity, "GRAVITY", m.gravity)
    d = distribution_from_manifest(m, args.z_min, args.z_max, g)
    observed = read_times(args.observed)
    D, p = distkit.misalignment_experiment(d, observed, m.fps, m.n_frames, args.n_mc, _seed(args))
    curves = distkit.cdf_curves(d, observed, m.fps, m.n_frames)
    cols = ("t", "F_model", "F_truth", "F_truth_quantized")
    rows = [dict(zip(cols, map(float, vals))) for vals in zip(*(curves[c] for c in cols))]
    Path(args.out).write_text(harness._csv_text(cols, rows))
    print(f"D = {D!r}\np = {p!r}\nmisaligned = {str(p < args.alpha).lower()}")
    return 0


def cmd_lift(args) -> int:
    m = maskio.read_manifest(args.manifest)
    masks = maskio.read_mask_sequence(args.masks)
    fps = harness.resolve(args.fps, "GEN_FPS", m.fps)
    g = harness.resolve(args.gravity, "GRAVITY", m.gravity)
    traj = lift3d.lift(m.camera, masks, fps, g, subframe=not args.coarse)
    depths = np.linspace(args.z_min, args.z_max, args.fan)
    fan = traj.reference_fan(depths, g=g)
    cols = ["t", "y_image_mm", "Y_world"] + [f"Y_ref_Z={Z:g}" for Z in fan]
    rows = []
    for i, t in enumerate(traj.times):
        row = {"t": float(t), "y_image_mm": float(traj.y_image[i]), "Y_world": float(traj.Y_world[i])}
        row.update({f"Y_ref_Z={Z:g}": float(Y[i]) for Z, Y in fan.items()})
        rows.append(row)
    Path(args.out).write_text(harness._csv_text(cols, rows))
    print(f"t_drop = {traj.t_drop!r}")
    print(f"implied_Z = {traj.implied_Z!r}")
    print(f"implied_Y0 = {traj.implied_Y0!r}")
    print(f"residual_rms = {lift3d.parabola_residual_rms(traj, g)!r}")
    return 0


def _read_any(path):
    with open(path, "rb") as fh:
        magic = fh.read(16)
    if magic == maskio.MASK_MAGIC:
        return maskio.read_mask_sequence(path)
    return maskio.read_field_sequence(path)


def cmd_reward(args) -> int:
    gen = maskio.read_field_sequence(args.gen)
    gt = _read_any(args.gt)
    fn = {"seg": rewards.seg_reward, "flow": rewards.flow_reward, "depth": rewards.depth_reward}[args.kind]
    result = fn(gen, gt)
    if args.gradient_out:
        maskio.write_field_sequence(DenseFieldSequence(result.gradient.reshape(gen.shape)), args.gradient_out)
    print(repr(result.value + 0.0))
    return 0


def cmd_report(args) -> int:
    table = harness.report_table(args.reports)
    if args.out:
        Path(args.out).write_text(table)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pisa", description="Freefall world-model evaluation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a simulated dataset")
    g.add_argument("--mode", choices=("psft", "ood_grid", "ambiguous"), required=True)
    g.add_argument("--count", type=int, default=5000, help="clips (psft, ood_grid)")
    g.add_argument("--scenes", type=int, default=1000, help="base scenes (ambiguous)")
    g.add_argument("--variants", type=int, default=5, help="depth variants per scene (ambiguous)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--gravity", type=float)
    g.add_argument("--restitution-max", type=float, default=0.0)
    g.add_argument("--workers", type=int)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("eval", help="score predictions against a dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--predictions")
    e.add_argument("--baseline", choices=harness.BASELINES)
    e.add_argument("--split", choices=harness.SPLITS)
    e.add_argument("--report", required=True, help="per-clip CSV path; summary is written beside it")
    e.add_argument("--gen-fps", type=float)
    e.add_argument("--gravity", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--skip-errors", action="store_true")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("dist", help="KS test of observed drop times against p(t|y)")
    d.add_argument("--manifest", required=True)
    d.add_argument("--observed", required=True, help="one drop time (seconds) per line")
    d.add_argument("--out", required=True)
    d.add_argument("--n-mc", type=int, default=1000)
    d.add_argument("--z-min", type=float, default=2.0)
    d.add_argument("--z-max", type=float, default=18.0)
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--gravity", type=float)
    d.add_argument("--seed", type=int)
    d.set_defaults(func=cmd_dist)

    lf = sub.add_parser("lift", help="lift a mask trajectory to 3-D")
    lf.add_argument("--manifest", required=True)
    lf.add_argument("--masks", required=True)
    lf.add_argument("--out", required=True)
    lf.add_argument("--fps", type=float)
    lf.add_argument("--gravity", type=float)
    lf.add_argument("--coarse", action="store_true", help="use the frame-quantized drop time")
    lf.add_argument("--z-min", type=float, default=2.0)
    lf.add_argument("--z-max", type=float, default=18.0)
    lf.add_argument("--fan", type=int, default=9, help="number of reference parabolas")
    lf.set_defaults(func=cmd_lift)

    r = sub.add_parser("reward", help="evaluate a reward on field files")
    r.add_argument("kind", choices=("seg", "flow", "depth"))
    r.add_argument("--gen", required=True)
    r.add_argument("--gt", required=True)
    r.add_argument("--gradient-out")
    r.set_defaults(func=cmd_reward)

    rp = sub.add_parser("report", help="tabulate one or more per-clip eval reports")
    rp.add_argument("reports", nargs="+")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PisaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
