import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_centroid, brute_chamfer_frame
from pisa import dropsim, metrics
from pisa.errors import AlignmentError, MetricError, StaticClipError
from pisa.sequences import MaskSequence


def _single(points, w=10):
    f = np.zeros((1, w, w), bool)
    for r, c in points:
        f[0, r, c] = True
    return f


def _clip(seed=0, Y0=None, e=0.0):
    spec = dropsim.sample_scene("psft", seed)
    if Y0 is not None:
        spec = dropsim.SceneSpec(spec.dropper, Y0, spec.Z, restitution=e, camera=spec.camera)
    return spec, dropsim.rasterize_masks(spec, dropsim.simulate(spec))


def test_fps_mapping_examples():
    assert metrics.align_fps(16, 16, 32, 32) == list(range(32))
    assert metrics.align_fps(16, 120, 32, 240)[8] == 60
    assert metrics.align_fps(8, 120, 16, 240)[3] == 45


def test_fps_mapping_rejects_longer_generation():
    with pytest.raises(AlignmentError):
        metrics.align_fps(16, 16, 40, 32)


@given(st.sampled_from([8, 10, 12, 16, 24]), st.sampled_from([16, 24, 30, 60, 120]))
def test_fps_mapping_time_consistent(gen_fps, gt_fps):
    n_gen = int(2 * gen_fps)
    n_gt = int(2 * gt_fps)
    mapping = metrics.align_fps(gen_fps, gt_fps, n_gen, n_gt)
    assert all(b >= a for a, b in zip(mapping, mapping[1:]))
    for i, j in enumerate(mapping):
        assert abs(j / gt_fps - i / gen_fps) <= 0.5 / gt_fps + 1e-12


def test_l2_three_four_five():
    a = _single([(0, 0)])
    b = _single([(4, 3)])
    assert metrics.trajectory_l2(a, b) == pytest.approx(0.5, abs=1e-12)


def test_l2_empty_frame_penalty_and_all_empty():
    a = np.zeros((2, 10, 10), bool)
    a[0, 1, 1] = True
    b = np.ones((2, 10, 10), bool)
    assert metrics.trajectory_l2_frames(a, b)[1] == pytest.approx(math.sqrt(2))
    with pytest.raises(MetricError):
        metrics.trajectory_l2(np.zeros((2, 4, 4), bool), b[:, :4, :4])


def test_centroids_match_brute_force():
    rng = np.random.default_rng(0)
    f = rng.random((5, 12, 12)) < 0.3
    c = metrics.centroids(f)
    for i in range(5):
        np.testing.assert_allclose(c[i], brute_centroid(f[i]), atol=1e-12)


def test_chamfer_two_points():
    a = _single([(0, 0)])
    b = _single([(4, 3)])
    assert metrics.chamfer(a, b) == pytest.approx(1.0, abs=1e-12)


def test_chamfer_identity_and_empty():
    a = _single([(2, 2), (5, 7)])
    assert metrics.chamfer(a, a) == 0.0
    assert metrics.chamfer_frame(a[0], np.zeros((10, 10), bool)) == pytest.approx(2 * math.sqrt(2))


@given(arrays(np.bool_, (2, 9, 9)), arrays(np.bool_, (2, 9, 9)))
@settings(max_examples=60)
def test_chamfer_matches_brute_force(a, b):
    for p, q in zip(a, b):
        assert metrics.chamfer_frame(p, q) == pytest.approx(brute_chamfer_frame(p, q, 9), abs=1e-12)


@given(arrays(np.bool_, (1, 8, 8)), arrays(np.bool_, (1, 8, 8)))
def test_symmetry(a, b):
    if a.any() and b.any():
        assert metrics.chamfer(a, b) == pytest.approx(metrics.chamfer(b, a), abs=1e-15)
        assert metrics.trajectory_l2(a, b) == pytest.approx(metrics.trajectory_l2(b, a), abs=1e-15)
    assert metrics.iou(a, b) == metrics.iou(b, a)


def test_translation_by_k_columns():
    a = np.zeros((1, 20, 20), bool)
    a[0, 5:9, 3:7] = True
    b = np.roll(a, 4, axis=2)
    assert metrics.trajectory_l2(a, b) == pytest.approx(4 / 20, abs=1e-12)
    assert metrics.chamfer(a, b) == pytest.approx(brute_chamfer_frame(a[0], b[0], 20), abs=1e-12)


def test_iou_examples():
    gt = np.zeros((3, 6, 6), bool)
    gt[:, 1:5, 1:3] = True
    half = gt.copy()
    half[:, 1:3, 1:3] = False
    assert metrics.iou(gt, gt) == 1.0
    assert metrics.iou(half, gt) == pytest.approx(0.5)
    disjoint = np.zeros_like(gt)
    disjoint[:, 0, 5] = True
    assert metrics.iou(disjoint, gt) == 0.0
    assert metrics.iou(np.zeros_like(gt), np.zeros_like(gt)) == 1.0


def test_identity_clip_scores():
    spec, gt = _clip(4)
    r = metrics.evaluate(gt, gt, 16, 16, Y0=spec.Y0)
    assert r.l2 == 0 and r.chamfer == 0 and r.iou == 1 and r.time_error == 0


def test_time_error_examples():
    tc = math.sqrt(2 * 1.25 / 9.81)
    assert metrics.window_error(9, 16, tc) == 0.0
    assert metrics.window_error(10, 16, tc) == pytest.approx(abs(9 / 16 - 0.50482), abs=1e-5)
    assert metrics.window_error(10, 16, tc) == pytest.approx(0.0577, abs=5e-5)


def test_time_error_on_simulated_drop():
    spec, gt = _clip(2, Y0=1.25)
    assert metrics.detect_impact(gt.frames).frame in (8, 9)
    assert metrics.time_error(gt, 16, 1.25) == 0.0


def test_static_clip_sentinel():
    spec, gt = _clip(1)
    static = np.repeat(gt.frames[:1], 32, axis=0)
    with pytest.raises(StaticClipError):
        metrics.detect_impact(static)
    assert metrics.time_error(static, 16, spec.Y0) == 2.0


def test_first_reversal_is_impact():
    rows = [0, 2, 5, 9, 14, 12, 14, 14, 14, 14]
    f = np.zeros((len(rows), 20, 3), bool)
    for i, r in enumerate(rows):
        f[i, r, 1] = True
    assert metrics.detect_impact(f) == metrics.Impact(5, "reversal")


def test_settle_impact():
    rows = [0, 2, 5, 9, 14, 14, 14, 14]
    f = np.zeros((len(rows), 20, 3), bool)
    for i, r in enumerate(rows):
        f[i, r, 1] = True
    assert metrics.detect_impact(f) == metrics.Impact(4, "settle")


def test_still_falling_at_end():
    f = np.zeros((5, 40, 3), bool)
    for i in range(5):
        f[i, 2 * i * i, 1] = True
    assert metrics.detect_impact(f) == metrics.Impact(5, "none")


def test_aligned_evaluation_at_higher_gt_rate():
    spec = dropsim.sample_scene("psft", 8)
    gt_spec = dropsim.SceneSpec(spec.dropper, spec.Y0, spec.Z, fps=48, n_frames=96, camera=spec.camera)
    gt = dropsim.rasterize_masks(gt_spec, dropsim.simulate(gt_spec))
    gen = dropsim.rasterize_masks(spec, dropsim.simulate(spec))
    r = metrics.evaluate(gen, gt, 16, 48, Y0=spec.Y0)
    assert r.l2 == 0 and r.iou == 1
    assert isinstance(gen, MaskSequence)
