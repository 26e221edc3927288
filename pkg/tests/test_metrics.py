import json

import numpy as np
import pytest

from ebssa.errors import ParseError, ValidationError
from ebssa.events import EventStream, SensorGeometry
from ebssa.metrics import (
    EvalConfig,
    LabelSet,
    LabeledObject,
    evaluate,
    evaluate_many,
    interpolate_label,
    load_labels,
    save_labels,
    slice_true_mask,
    sweep_r,
)
from ebssa.synth import SynthConfig, generate_scene

from helpers import point_segment_dist2

GEOM = SensorGeometry(64, 48)


def _obj(keyframes, kind="straight"):
    kf = np.asarray(keyframes, dtype=np.float64)
    return LabeledObject(kind=kind, t_us=kf[:, 0].astype(np.int64), xs=kf[:, 1], ys=kf[:, 2])


def _stream(rows, geometry=GEOM):
    rows = sorted(rows)
    return EventStream(
        t_us=np.array([r[0] for r in rows], np.int64),
        x=np.array([r[1] for r in rows], np.int32),
        y=np.array([r[2] for r in rows], np.int32),
        p=np.ones(len(rows), np.int8),
        geometry=geometry,
    )


def test_interpolation_examples():
    obj = _obj([(0, 0.0, 0.0), (10, 100.0, 0.0)])
    assert interpolate_label(obj, 5e-6) == (50.0, 0.0)
    assert interpolate_label(obj, -1e-6) is None
    assert interpolate_label(obj, 11e-6) is None
    assert interpolate_label(obj, 10e-6) == (100.0, 0.0)


def test_keyframes_must_increase():
    with pytest.raises(ValidationError):
        _obj([(5, 0, 0), (5, 1, 1)])


def test_label_json_roundtrip(tmp_path):
    labels = LabelSet([_obj([(0, 1.5, 2.5), (10_000, 3.0, 4.0)], kind="curved")])
    p = tmp_path / "labels.json"
    save_labels(labels, p)
    loaded = load_labels(p)
    assert len(loaded) == 1
    assert loaded.objects[0].kind == "curved"
    assert np.array_equal(loaded.objects[0].t_us, labels.objects[0].t_us)
    assert np.allclose(loaded.objects[0].xs, labels.objects[0].xs)


def test_label_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_labels(p)
    p.write_text(json.dumps({"objects": [{"type": "weird", "keyframes": [[0, 1, 1]]}]}),
                 encoding="utf-8")
    with pytest.raises(ParseError):
        load_labels(p)


def test_empty_stream_stats():
    labels = LabelSet([_obj([(0, 10.0, 10.0), (1_000_000, 40.0, 30.0)])])
    stats = evaluate(EventStream.empty(GEOM), labels, GEOM, EvalConfig())
    assert stats.sensitivity == 0.0
    assert stats.specificity == 1.0
    assert stats.informedness == 0.0


def test_zero_duration_error():
    with pytest.raises(ValidationError):
        evaluate(EventStream.empty(GEOM), LabelSet([]), GEOM, EvalConfig())


def test_perfect_stream():
    # events exclusively inside True regions, one per slice, none elsewhere
    labels = LabelSet([_obj([(0, 20.0, 20.0), (1_000_000, 20.0, 20.0)])])
    rows = [(k * 10_000 + 5_000, 20, 20) for k in range(100)]
    stats = evaluate(_stream(rows), labels, GEOM, EvalConfig())
    assert stats.sensitivity == 1.0
    assert stats.specificity == 1.0
    assert stats.informedness == 1.0


def test_informedness_identity_exact():
    rng = np.random.default_rng(1)
    labels = LabelSet([_obj([(0, 20.0, 20.0), (2_000_000, 50.0, 40.0)])])
    rows = [(int(t), int(x), int(y)) for t, x, y in zip(
        rng.integers(0, 2_000_000, 500), rng.integers(0, 64, 500), rng.integers(0, 48, 500))]
    stats = evaluate(_stream(rows), labels, GEOM, EvalConfig())
    assert stats.informedness == stats.sensitivity + stats.specificity - 1.0


def test_mask_matches_point_in_capsule_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x0, y0 = rng.uniform(0, 64), rng.uniform(0, 48)
        x1, y1 = rng.uniform(0, 64), rng.uniform(0, 48)
        r = rng.uniform(1.0, 8.0)
        obj = _obj([(0, x0, y0), (10_000, x1, y1)])
        mask = slice_true_mask(LabelSet([obj]), 0, 10_000, GEOM, r)
        for _ in range(200):
            px, py = int(rng.integers(0, 64)), int(rng.integers(0, 48))
            want = point_segment_dist2(px, py, x0, y0, x1, y1) <= r * r
            assert mask[py, px] == want


def test_region_partition_volumes():
    # TP+FN equals the True volume; FP+TN equals the False volume
    labels = LabelSet([_obj([(0, 20.0, 20.0), (1_000_000, 40.0, 25.0)])])
    rng = np.random.default_rng(3)
    rows = [(int(t), int(x), int(y)) for t, x, y in zip(
        rng.integers(0, 1_000_000, 300), rng.integers(0, 64, 300), rng.integers(0, 48, 300))]
    cfg = EvalConfig(r=6.0)
    stats = evaluate(_stream(rows), labels, GEOM, cfg)
    slice_us = cfg.slice_us
    n_slices = 100
    true_vol = 0.0
    for k in range(n_slices):
        m = slice_true_mask(labels, k * slice_us, (k + 1) * slice_us, GEOM, cfg.r)
        true_vol += m.sum() * cfg.slice_s
    true_vol /= n_slices
    total_vol = GEOM.n_pixels * cfg.slice_s
    assert stats.tp + stats.fn == pytest.approx(true_vol, rel=1e-12)
    assert stats.fp + stats.tn == pytest.approx(total_vol - true_vol, rel=1e-12)


def test_pure_function_of_inputs():
    rec = generate_scene([], SynthConfig(seed=5, lambda1=1.0, lambda0=0.1, t_max=2.0))
    labels = LabelSet([_obj([(0, 100.0, 90.0), (2_000_000, 150.0, 100.0)])])
    a = evaluate(rec.events, labels, rec.events.geometry)
    b = evaluate(rec.events, labels, rec.events.geometry)
    assert (a.tp, a.tn, a.fp, a.fn, a.informedness) == (b.tp, b.tn, b.fp, b.fn, b.informedness)


def test_evaluate_many_matches_individual():
    rng = np.random.default_rng(6)
    labels = LabelSet([_obj([(0, 30.0, 20.0), (1_000_000, 30.0, 20.0)])])
    s1 = _stream([(int(t), int(x), int(y)) for t, x, y in zip(
        rng.integers(0, 1_000_000, 200), rng.integers(0, 64, 200), rng.integers(0, 48, 200))])
    s2 = _stream([(k * 10_000, 30, 20) for k in range(100)])
    both = evaluate_many({"a": s1, "b": s2}, labels, GEOM)
    assert both["a"].informedness == evaluate(s1, labels, GEOM).informedness
    assert both["b"].informedness == evaluate(s2, labels, GEOM).informedness


def test_sweep_r_rejects_degenerate_radius():
    labels = LabelSet([_obj([(0, 30.0, 20.0), (1_000_000, 30.0, 20.0)])])
    s = _stream([(0, 1, 1)])
    with pytest.raises(ValidationError):
        sweep_r({"raw": s}, labels, GEOM, r_values=[0])


def test_label_shuffle_null():
    # random labels over noise streams score at chance level; note the
    # Poisson discreteness of sparse per-slice counts biases the mean at
    # some densities, so the null runs where the counts are balanced
    rng = np.random.default_rng(7)
    geom = SensorGeometry(240, 180)
    vals = []
    for trial in range(50):
        rec = generate_scene([], SynthConfig(seed=200 + trial, lambda1=1.0, lambda0=0.5,
                                             geometry=geom, t_max=2.0))
        x0, y0 = rng.uniform(15, 225), rng.uniform(15, 165)
        x1, y1 = rng.uniform(15, 225), rng.uniform(15, 165)
        labels = LabelSet([_obj([(0, x0, y0), (2_000_000, x1, y1)])])
        vals.append(evaluate(rec.events, labels, geom, EvalConfig(r=10.0)).informedness)
    assert abs(float(np.mean(vals))) < 0.05
