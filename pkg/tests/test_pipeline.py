from __future__ import annotations

import pytest

from hoptrack import pipeline
from hoptrack.core_types import BBox, Detection, TrackerConfig, TrackStatus, iou
from hoptrack.io import format_results
from hoptrack.pipeline import ScheduleError, TrackerEngine, canonical_order, run_sequence
from hoptrack.synth import generate, get_scenario

from .conftest import solid_frame


def fixed(lam: int, **kw) -> TrackerConfig:
    return TrackerConfig(lambda_min=lam, lambda_max=lam, **kw)


def blank(n: int):
    return [solid_frame(200, 150, (90, 90, 90)) for _ in range(n)]


def det(f, x, y, conf=0.9, w=20, h=40):
    return Detection(f, BBox(x, y, w, h), conf)


@pytest.fixture(scope="module")
def s1_scene():
    return generate(get_scenario("two-steady"))


@pytest.fixture(scope="module")
def s3_scene():
    return generate(get_scenario("occlusion-cross"))


def test_schedule_alternates_fuse_and_update():
    engine = TrackerEngine(fixed(5))
    frames = blank(11)
    for f, frame in enumerate(frames):
        dets = [] if engine.is_detection_frame() else None
        assert (dets is not None) == (f % 5 == 0)
        engine.step(frame, dets)
    assert (engine.stats.fuse_frames, engine.stats.update_frames) == (3, 8)


def test_schedule_errors_name_the_frame():
    engine = TrackerEngine(fixed(5))
    with pytest.raises(ScheduleError, match="frame 0"):
        engine.step(blank(1)[0], None)
    engine.step(blank(1)[0], [])
    with pytest.raises(ScheduleError, match="hopping frame 1"):
        engine.step(blank(1)[0], [])


def test_lambda_change_applies_from_next_detection_frame():
    engine = TrackerEngine(fixed(5))
    seen = []
    for f, frame in enumerate(blank(16)):
        if f == 2:
            engine.set_lambda(3)
        if engine.is_detection_frame():
            seen.append(f)
            engine.step(frame, [])
        else:
            engine.step(frame)
    assert seen == [0, 5, 8, 13]


def test_lambda_one_fuses_every_frame(s1_scene):
    engine = TrackerEngine(fixed(1))
    run_sequence(s1_scene.frames, s1_scene.dets, engine=engine)
    assert engine.stats.fuse_frames == len(s1_scene.frames)
    assert engine.stats.update_frames == 0


def test_cold_start_ids():
    engine = TrackerEngine(fixed(5))
    out = engine.step(blank(1)[0], [det(0, 10, 10), det(0, 80, 10), det(0, 150, 60)])
    assert out.track_ids == [1, 2, 3]


def test_below_threshold_is_never_tracked():
    engine = TrackerEngine(fixed(5))
    frames = blank(11)
    outs = run_sequence(frames, {0: [det(0, 10, 10, conf=0.39)], 5: [det(5, 10, 10, conf=0.39)]}, engine=engine)
    assert all(not o.rows for o in outs)
    assert engine.tracks == [] and engine.accepted_confidences == []


def test_stationary_object_keeps_its_id():
    dets = {0: [det(0, 50, 50)], 5: [det(5, 50, 50)], 10: [det(10, 50, 50)]}
    outs = run_sequence(blank(11), dets, fixed(5))
    assert {tid for o in outs for tid in o.track_ids} == {1}
    assert outs[10].track_ids == [1]


def test_constant_velocity_object_is_emitted_on_hopping_frames(s1_scene):
    outs = run_sequence(s1_scene.frames, s1_scene.dets, fixed(10))
    for o in outs[20:]:
        if o.frame_id % 10 == 0:
            continue
        gt = dict(s1_scene.gt[o.frame_id])
        assert len(o.rows) == 2
        for tid, box, _ in o.rows:
            assert iou(box, gt[tid]) >= 0.9


def test_occluded_object_is_suppressed_and_lost(s3_scene):
    engine = TrackerEngine(fixed(10))
    hidden = set(s3_scene.hidden_frames(1))
    statuses = {}

    def watch(f, out):
        t = next((t for t in engine.tracks if t.id == 1), None)
        statuses[f] = (t.status if t else None, 1 in out.track_ids)

    run_sequence(s3_scene.frames, s3_scene.dets, engine=engine, on_frame=watch)
    assert hidden
    for f in hidden:
        assert statuses[f] == (TrackStatus.LOST, False)


def test_fresh_track_uses_appearance_for_two_hopping_frames(monkeypatch, s1_scene):
    calls = []
    real = pipeline.appearance_update

    def spy(prev, cur, bbox, cfg, *args, **kw):
        calls.append(len(calls))
        return real(prev, cur, bbox, cfg, *args, **kw)

    monkeypatch.setattr(pipeline, "appearance_update", spy)
    engine = TrackerEngine(fixed(10))
    frames = s1_scene.frames[:10]
    per_frame = []
    for f, frame in enumerate(frames):
        before = len(calls)
        engine.step(frame, s1_scene.dets.get(f, []) if f == 0 else None)
        per_frame.append(len(calls) - before)
    # two tracks, appearance path on hopping frames 1 and 2 only
    assert per_frame[:4] == [0, 2, 2, 0]
    assert sum(per_frame) == 4
    assert all(not t.is_new for t in engine.tracks)


def test_no_frames_no_output():
    assert run_sequence([], {}, TrackerConfig()) == []


def test_rerun_is_identical(s1_scene):
    a = format_results(run_sequence(s1_scene.frames, s1_scene.dets, fixed(10)))
    b = format_results(run_sequence(s1_scene.frames, s1_scene.dets, fixed(10)))
    assert a == b and a


def test_detection_order_does_not_matter(s1_scene):
    shuffled = {f: list(reversed(d)) for f, d in s1_scene.dets.items()}
    a = format_results(run_sequence(s1_scene.frames, s1_scene.dets, fixed(10)))
    b = format_results(run_sequence(s1_scene.frames, shuffled, fixed(10)))
    assert a == b


def test_canonical_order_is_geometric():
    dets = [det(0, 30, 0), det(0, 10, 0, conf=0.5), det(0, 10, 0, conf=0.8)]
    out = canonical_order(dets)
    assert [(d.bbox.x, d.confidence) for d in out] == [(10, 0.8), (10, 0.5), (30, 0.9)]


def test_lost_track_is_removed_after_timeout():
    cfg = fixed(5, lost_timeout=10)
    dets = {0: [det(0, 50, 50)]}
    engine = TrackerEngine(cfg)
    run_sequence(blank(21), dets, engine=engine)
    assert engine.tracks == []
    assert [t.id for t in engine.removed] == [1]


def test_detection_source_errors_carry_frame():
    def broken(f):
        raise ValueError("bad row")

    with pytest.raises(ValueError, match="frame 0: bad row"):
        run_sequence(blank(2), broken, fixed(5))


def test_latencies_are_recorded_per_frame():
    lat = []
    run_sequence(blank(7), {}, fixed(5), latencies_ms=lat)
    assert len(lat) == 7 and all(v >= 0 for v in lat)
