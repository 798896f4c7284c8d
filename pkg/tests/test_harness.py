import csv
import hashlib
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pisa import cli, distkit, harness, maskio
from pisa.errors import ValidationError
from pisa.sequences import DenseFieldSequence, MaskSequence


def _tree_digest(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def ood_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ood") / "ds"
    assert cli.main(["gen", "--mode", "ood_grid", "--count", "24", "--out", str(out), "--seed", "7", "--workers", "1"]) == 0
    return out


def test_same_seed_gives_identical_trees(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, workers in ((a, "1"), (b, "2")):
        args = ["gen", "--mode", "psft", "--count", "6", "--out", str(out), "--seed", "3", "--workers", workers]
        assert cli.main(args) == 0
    assert _tree_digest(a) == _tree_digest(b)
    assert len(list((a / "clips").iterdir())) == 6


def test_clip_contents(ood_dataset):
    index = harness.read_index(ood_dataset)
    assert len(index) == 24
    clip = ood_dataset / "clips" / index[0]["clip_id"]
    m = maskio.read_manifest(clip / "manifest.txt")
    masks = maskio.read_mask_sequence(clip / "masks.pmsk")
    assert masks.n_frames == 32 and m.fps == 16
    assert m.caption.endswith(" falls.")
    assert m.scene.label in ("ID", "OOD")
    with (clip / "trajectory.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 32 and float(rows[0]["bottom_Y_m"]) == m.scene.Y0


def test_ambiguous_grouping(tmp_path):
    out = tmp_path / "amb"
    assert cli.main(["gen", "--mode", "ambiguous", "--scenes", "2", "--variants", "3", "--out", str(out), "--workers", "1"]) == 0
    index = harness.read_index(out)
    assert len(index) == 6
    groups = {}
    for e in index:
        groups.setdefault(e["group"], []).append(e["clip_id"])
    assert len(groups) == 2
    for ids in groups.values():
        first = [maskio.read_mask_sequence(out / "clips" / i / "masks.pmsk").frames[0] for i in ids]
        for f in first[1:]:
            np.testing.assert_array_equal(f, first[0])


def test_nonempty_out_requires_force(tmp_path, capsys):
    out = tmp_path / "ds"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    args = ["gen", "--mode", "psft", "--count", "2", "--out", str(out), "--workers", "1"]
    assert cli.main(args) == 2
    assert cli.main(args + ["--force"]) == 0
    assert (out / "keep.txt").exists()


def test_eval_identity_and_static(ood_dataset, tmp_path):
    ident = tmp_path / "identity.csv"
    static = tmp_path / "static.csv"
    assert cli.main(["eval", "--dataset", str(ood_dataset), "--baseline", "identity", "--report", str(ident), "--workers", "1"]) == 0
    assert cli.main(["eval", "--dataset", str(ood_dataset), "--baseline", "static", "--report", str(static), "--workers", "1"]) == 0
    good = harness.read_report(ident)
    bad = harness.read_report(static)
    for g, b in zip(good, bad):
        assert float(g["l2"]) == 0 and float(g["chamfer"]) == 0 and float(g["iou"]) == 1
        assert float(g["time_error"]) == 0
        assert float(b["iou"]) < 1 and float(b["l2"]) > 0
        assert float(b["time_error"]) == 2.0
    summary = harness.summary_path(ident).read_text()
    assert "group.ID.n" in summary and "group.OOD.n" in summary
    table = harness.report_table([ident, static])
    assert "| identity | all |" in table and "| static | OOD |" in table


def test_eval_reports_are_deterministic(ood_dataset, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    harness.run_eval(harness.EvalRun(ood_dataset, None, a, baseline="static", workers=1))
    harness.run_eval(harness.EvalRun(ood_dataset, None, b, baseline="static", workers=2))
    assert a.read_bytes() == b.read_bytes()


def test_ood_split_filters_labels(ood_dataset, tmp_path):
    rows, groups, code = harness.run_eval(
        harness.EvalRun(ood_dataset, None, tmp_path / "r.csv", split="ood_ood", baseline="identity")
    )
    assert code == 0 and rows and all(r["label"] == "OOD" for r in rows)
    assert set(groups) == {"all", "OOD"}


def test_predictions_dir_and_errors(ood_dataset, tmp_path):
    pred = tmp_path / "pred"
    index = harness.read_index(ood_dataset)
    for e in index[:-1]:
        (pred / e["clip_id"]).mkdir(parents=True)
        src = ood_dataset / "clips" / e["clip_id"] / "masks.pmsk"
        (pred / e["clip_id"] / "masks.pmsk").write_bytes(src.read_bytes())
    # the last clip has a damaged prediction
    bad = pred / index[-1]["clip_id"]
    bad.mkdir()
    (bad / "masks.pmsk").write_bytes(b"garbage")
    report = tmp_path / "r.csv"
    assert cli.main(["eval", "--dataset", str(ood_dataset), "--predictions", str(pred), "--report", str(report)]) == 3
    rows = harness.read_report(report)
    assert rows[-1]["status"] == "format" and index[-1]["clip_id"] == rows[-1]["clip_id"]
    assert all(float(r["iou"]) == 1 for r in rows[:-1])
    assert cli.main(["eval", "--dataset", str(ood_dataset), "--predictions", str(pred), "--report", str(report), "--skip-errors"]) == 0


def test_gen_fps_precedence(ood_dataset, tmp_path, monkeypatch):
    run = harness.EvalRun(ood_dataset, None, tmp_path / "r.csv", baseline="identity")
    monkeypatch.setenv("PISA_GEN_FPS", "8")
    rows, _, code = harness.run_eval(run)
    # 32 frames at 8 fps outlast the 2 s ground truth
    assert code == 4 and rows[0]["status"] == "metric"
    run.gen_fps = 16
    assert harness.run_eval(run)[2] == 0


def test_resolve_precedence(monkeypatch):
    monkeypatch.delenv("PISA_SEED", raising=False)
    assert harness.resolve(None, "SEED", 5, 1, int) == 5
    monkeypatch.setenv("PISA_SEED", "9")
    assert harness.resolve(None, "SEED", 5, 1, int) == 9
    assert harness.resolve(3, "SEED", 5, 1, int) == 3
    monkeypatch.setenv("PISA_SEED", "x")
    with pytest.raises(ValidationError):
        harness.resolve(None, "SEED", 5, 1, int)


def test_eval_run_validation(tmp_path):
    with pytest.raises(ValidationError):
        harness.EvalRun(tmp_path, None, tmp_path / "r.csv")
    with pytest.raises(ValidationError):
        harness.EvalRun(tmp_path, None, tmp_path / "r.csv", split="test", baseline="identity")


def _dist_manifest(tmp_path):
    m = maskio.ClipManifest(fps=16, n_frames=32, extras={"object.y_bottom_mm": 3.5})
    path = tmp_path / "m.txt"
    maskio.write_manifest(m, path)
    return path


def test_dist_null_and_constant(tmp_path, capsys):
    path = _dist_manifest(tmp_path)
    d = distkit.DropTimeDistribution(beta=0.1, h_offset=0.5)
    obs = tmp_path / "obs.txt"
    obs.write_text("\n".join(repr(float(t)) for t in d.sample(128, 42)) + "\n")
    out = tmp_path / "cdf.csv"
    assert cli.main(["dist", "--manifest", str(path), "--observed", str(obs), "--out", str(out), "--seed", "1"]) == 0
    text = capsys.readouterr().out
    assert "misaligned = false" in text
    header = out.read_text().splitlines()[0].split(",")
    assert header == ["t", "F_model", "F_truth", "F_truth_quantized"]
    obs.write_text("\n".join([repr(float(d.t_min))] * 128))
    assert cli.main(["dist", "--manifest", str(path), "--observed", str(obs), "--out", str(out)]) == 0
    assert "misaligned = true" in capsys.readouterr().out


def test_dist_errors(tmp_path):
    m = maskio.ClipManifest(fps=16, n_frames=32, extras={"object.y_bottom_mm": -3.0})
    path = tmp_path / "m.txt"
    maskio.write_manifest(m, path)
    obs = tmp_path / "obs.txt"
    obs.write_text("0.5\n" * 10)
    assert cli.main(["dist", "--manifest", str(path), "--observed", str(obs), "--out", str(tmp_path / "o.csv")]) == 2
    obs.write_text("0.5\nabc\n")
    path = _dist_manifest(tmp_path)
    assert cli.main(["dist", "--manifest", str(path), "--observed", str(obs), "--out", str(tmp_path / "o.csv")]) == 3


def test_lift_cli(ood_dataset, tmp_path, capsys):
    clip = ood_dataset / "clips" / harness.read_index(ood_dataset)[0]["clip_id"]
    out = tmp_path / "lift.csv"
    assert cli.main(["lift", "--manifest", str(clip / "manifest.txt"), "--masks", str(clip / "masks.pmsk"), "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "y_image_mm", "Y_world"] and len(header) == 12
    assert "implied_Z = " in capsys.readouterr().out


def test_lift_static_clip_exit_code(tmp_path):
    m = maskio.ClipManifest(fps=16, n_frames=32)
    maskio.write_manifest(m, tmp_path / "m.txt")
    f = np.zeros((32, 16, 16), bool)
    f[:, 4:6, 4:6] = True
    maskio.write_mask_sequence(MaskSequence(f), tmp_path / "s.pmsk")
    assert cli.main(["lift", "--manifest", str(tmp_path / "m.txt"), "--masks", str(tmp_path / "s.pmsk"), "--out", str(tmp_path / "o.csv")]) == 4


def _field(path, arr):
    maskio.write_field_sequence(DenseFieldSequence(np.asarray(arr, dtype=np.float32)), path)
    return str(path)


def test_reward_cli(tmp_path, capsys):
    m = np.zeros((2, 4, 4), bool)
    m[:, 1:3, 1:3] = True
    maskio.write_mask_sequence(MaskSequence(m), tmp_path / "gt.pmsk")
    logits = _field(tmp_path / "l.pfld", np.where(m, 100.0, -100.0)[..., None])
    assert cli.main(["reward", "seg", "--gen", logits, "--gt", str(tmp_path / "gt.pmsk")]) == 0
    assert capsys.readouterr().out.strip() == "1.0"

    flow = np.random.default_rng(0).normal(size=(2, 4, 4, 2))
    a = _field(tmp_path / "a.pfld", flow)
    assert cli.main(["reward", "flow", "--gen", a, "--gt", a, "--gradient-out", str(tmp_path / "g.pfld")]) == 0
    assert capsys.readouterr().out.strip() == "0.0"
    assert maskio.read_field_sequence(tmp_path / "g.pfld").shape == (2, 4, 4, 2)

    depth = np.full((2, 4, 4, 1), 1.5)
    gen = _field(tmp_path / "d1.pfld", depth + 0.25)
    gt = _field(tmp_path / "d0.pfld", depth)
    assert cli.main(["reward", "depth", "--gen", gen, "--gt", gt]) == 0
    assert capsys.readouterr().out.strip() == "-0.25"


def test_reward_cli_bad_file(tmp_path):
    (tmp_path / "x.pfld").write_bytes(b"nope")
    assert cli.main(["reward", "depth", "--gen", str(tmp_path / "x.pfld"), "--gt", str(tmp_path / "x.pfld")]) == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pisa", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "lift" in proc.stdout
