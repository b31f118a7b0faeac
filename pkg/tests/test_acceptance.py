"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import random
import sys
import time
from pathlib import Path

import numpy as np

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
    __package__ = "tests"

from hoptrack.assignment import solve_assignment, total_cost  # noqa: E402
from hoptrack.cli import build_config, cmd_synth, cmd_track  # noqa: E402
from hoptrack.core_types import BBox, TrackerConfig, iou  # noqa: E402
from hoptrack.io import parse_result_file  # noqa: E402
from hoptrack.kalman import kf_init, kf_predict, kf_to_bbox, kf_update  # noqa: E402
from hoptrack.metrics import EvalAccumulator, evaluate, match_frame, mota, outputs_to_pred  # noqa: E402
from hoptrack.patch_match import MatchCounters, wasserstein_1d  # noqa: E402
from hoptrack.pipeline import TrackerEngine, run_sequence  # noqa: E402
from hoptrack.synth import NOISELESS, ObjectSpec, ScenarioSpec, generate, get_scenario  # noqa: E402

from .oracles import brute_force_assignment, transport_w1  # noqa: E402

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] AC{number:<2} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def scene_config(spec: ScenarioSpec, **extra) -> TrackerConfig:
    return TrackerConfig().with_overrides(**{**spec.tracker_overrides, **extra})


def track_ids_by_gt(scene, outputs) -> dict[int, set[int]]:
    """For every GT object, the set of predicted ids it was matched to."""
    out: dict[int, set[int]] = {}
    last: dict[int, int] = {}
    pred = outputs_to_pred(outputs)
    for f in sorted(set(scene.gt) | set(pred)):
        tally = match_frame(scene.gt.get(f, []), pred.get(f, []), last)
        for g, p in tally.matches:
            last[g] = p
            out.setdefault(g, set()).add(p)
    return out


# --- criteria ------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    exact = 0
    for _ in range(500):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        # dyadic costs keep every partial sum exact in binary floating point
        cost = rng.integers(0, 64, size=(n, m)) / 8.0
        got = total_cost(cost, solve_assignment(cost))
        exact += got == brute_force_assignment(cost)
    elapsed = time.perf_counter() - start
    ok = exact == 500 and elapsed < 10.0
    return record(1, "assignment vs permutation oracle", ok, f"{exact}/500 exact in {elapsed:.2f} s (limit 10 s)")


def criterion_2():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        bins = int(rng.integers(1, 9))
        p = rng.random(bins) ** 2
        q = rng.random(bins) ** 2
        p /= p.sum()
        q /= q.sum()
        worst = max(worst, abs(wasserstein_1d(p, q) - transport_w1(p, q)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    return record(2, "Wasserstein vs transport LP", ok, f"max |diff| {worst:.2e} (limit 1e-9) in {elapsed:.2f} s")


def criterion_3():
    start = time.perf_counter()
    spec = get_scenario("two-steady")
    scene = generate(spec)
    outputs = run_sequence(scene.frames, scene.dets, scene_config(spec))
    acc = evaluate(scene.gt, outputs_to_pred(outputs))
    worst = 1.0
    for o in outputs:
        gt_boxes = [b for _, b in scene.gt.get(o.frame_id, [])]
        for _, box, _ in o.rows:
            worst = min(worst, max((iou(box, g) for g in gt_boxes), default=0.0))
    elapsed = time.perf_counter() - start
    score = mota(acc)
    ok = score >= 0.95 and acc.idsw == 0 and worst >= 0.7 and elapsed < 30.0
    return record(
        3,
        "S1 perfect tracking",
        ok,
        f"MOTA {score:.4f} (>= 0.95), IDSW {acc.idsw}, min box IoU {worst:.3f} (>= 0.7), {elapsed:.2f} s",
    )


def criterion_4():
    spec = get_scenario("fast-mover")
    scene = generate(spec)
    res = {}
    for use in (True, False):
        outputs = run_sequence(scene.frames, scene.dets, scene_config(spec, use_trajectory=use))
        res[use] = evaluate(scene.gt, outputs_to_pred(outputs))
    gap = mota(res[True]) - mota(res[False])
    ok = gap >= 0.10 and res[True].idsw < res[False].idsw
    return record(
        4,
        "S2 trajectory ablation",
        ok,
        f"MOTA {mota(res[True]):.4f} vs {mota(res[False]):.4f} (gap {gap:.4f} >= 0.10), "
        f"IDSW {res[True].idsw} < {res[False].idsw}",
    )


def criterion_5():
    spec = get_scenario("occlusion-cross")
    scene = generate(spec)
    cfg = scene_config(spec)
    outputs = run_sequence(scene.frames, scene.dets, cfg)
    hidden = scene.hidden_frames(1)
    first_id = dict(match_frame(scene.gt[0], outputs_to_pred(outputs)[0]).matches)[1]
    rows_hidden = sum(first_id in outputs[f].track_ids for f in hidden)
    reappear = next(f for f in range(hidden[-1] + 1, spec.length) if 1 in dict(scene.gt.get(f, [])))
    lam = cfg.lambda_max
    fuse_after = next(f for f in range(reappear, spec.length) if f % lam == 0)
    gt_box = dict(scene.gt[fuse_after])[1]
    back = [tid for tid, box, _ in outputs[fuse_after].rows if iou(box, gt_box) >= 0.5]
    acc = evaluate(scene.gt, outputs_to_pred(outputs))
    ok = rows_hidden == 0 and back == [first_id] and acc.idsw == 0
    return record(
        5,
        "S3 occlusion suppression",
        ok,
        f"{rows_hidden} rows over {len(hidden)} hidden frames {hidden[0]}-{hidden[-1]}; "
        f"frame {fuse_after} ids {back} (original {first_id}); IDSW {acc.idsw}",
    )


def criterion_6():
    spec = get_scenario("crowd-growth")
    scene = generate(spec)
    cfg = scene_config(spec)
    engine = TrackerEngine(cfg)
    run_sequence(scene.frames, scene.dets, engine=engine)
    lams = [lam for _, lam in engine.stats.lambda_timeline]
    counts = [c for _, c in engine.stats.cluster_timeline]
    non_increasing = all(b <= a for a, b in zip(lams, lams[1:]))
    # the period starting at detection frame i was decided from the clusters seen at frame i-1
    decided = list(zip(counts, lams[1:]))
    at_zero = {lam for c, lam in decided if c == 0}
    at_sat = {lam for c, lam in decided if c >= 4}
    ramp = sorted(set(counts))
    ok = (
        non_increasing
        and lams[0] == cfg.lambda_max
        and at_zero == {cfg.lambda_max}
        and at_sat == {cfg.lambda_min}
        and ramp == [0, 1, 2, 3, 4]
    )
    steps = []
    for (f, lam), (_, prev) in zip(engine.stats.lambda_timeline, [(None, None)] + engine.stats.lambda_timeline):
        if lam != prev:
            steps.append(f"{f}:{lam}")
    return record(
        6,
        "S4 sampling monotonicity",
        ok,
        f"lambda changes {' '.join(steps)}; clusters {ramp[0]}->{ramp[-1]}; "
        f"lambda at 0 clusters {sorted(at_zero)}, at saturation {sorted(at_sat)}",
    )


def criterion_7(tmp_path: Path):
    spec = get_scenario("confidence-flicker")
    out = Path(tmp_path) / "s5"
    cmd_synth("confidence-flicker", out)
    files = {}
    accepted = {}
    for tau in (0.4, 0.0):
        cfg = build_config(out / "tracker.cfg", [f"tau={tau}"])
        path = out / f"res_tau{tau}.txt"
        cmd_track(out / "img", out / "det.txt", path, cfg, timing=False)
        files[tau] = path
        scene = generate(spec)
        engine = TrackerEngine(cfg)
        run_sequence(scene.frames, scene.dets, engine=engine)
        accepted[tau] = min(c for _, c in engine.accepted_confidences)
    scene = generate(spec)
    high = set(files[0.4].read_text().splitlines())
    low = set(files[0.0].read_text().splitlines())
    only_low = low - high
    res_low = parse_result_file(files[0.0])
    res_high = parse_result_file(files[0.4])

    def covers(res, obj):
        hits = 0
        for f, rows in scene.gt.items():
            gt_box = dict(rows).get(obj)
            if gt_box is not None and any(iou(b, gt_box) >= 0.5 for _, b in res.get(f, [])):
                hits += 1
        return hits

    dim_frames = sum(3 in dict(rows) for rows in scene.gt.values())
    dim_high = covers(res_high, 3)
    dim_low = covers(res_low, 3)
    ok = accepted[0.4] >= 0.4 and dim_high == 0 and dim_low == dim_frames and len(only_low) > 0
    return record(
        7,
        "S5 confidence filtering",
        ok,
        f"tau 0.4: min accepted conf {accepted[0.4]:.2f}, dim object in {dim_high}/{dim_frames} frames; "
        f"tau 0.0: dim object in {dim_low}/{dim_frames} frames, {len(only_low)} extra result rows",
    )


A = BBox(0, 0, 10, 10)
B = BBox(40, 0, 10, 10)
C = BBox(80, 0, 10, 10)
# (gt frames, pred frames, hand-counted (FP, FN, IDSW, GT))
SCRIPTED = [
    ("perfect", [[(1, A)]] * 3, [[(5, A)]] * 3, (0, 0, 0, 3)),
    ("all missed", [[(1, A), (2, B)]] * 2, [[]] * 2, (0, 4, 0, 4)),
    ("ghost only", [[]] * 2, [[(9, C)]] * 2, (2, 0, 0, 0)),
    ("switch", [[(1, A)]] * 3, [[(7, A)], [(9, A)], [(9, A)]], (0, 0, 1, 3)),
    ("swap two", [[(1, A), (2, B)]] * 2, [[(1, A), (2, B)], [(2, A), (1, B)]], (0, 0, 2, 4)),
    (
        "miss then return",
        [[(1, A)]] * 4,
        [[(3, A)], [], [(3, A.translate(2, 0))], [(4, A)]],
        (0, 1, 1, 4),
    ),
    (
        "offset box is FP and FN",
        [[(1, A)]] * 2,
        [[(1, A)], [(1, A.translate(7, 0))]],
        (1, 1, 0, 2),
    ),
    (
        "kept match beats better newcomer",
        [[(1, A)], [(1, A)], [(1, A)], [(1, A)], [(1, A)]],
        [[(1, A)], [(1, A.translate(3, 0)), (2, A)], [(2, A)], [(2, A)], [(1, A), (2, A.translate(1, 0))]],
        (2, 0, 1, 5),
    ),
]


def criterion_8():
    formula = mota(EvalAccumulator(fp=5, fn=10, idsw=2, gt_count=100))
    bad = []
    for name, gt_frames, pred_frames, expected in SCRIPTED:
        gt = {f: rows for f, rows in enumerate(gt_frames) if rows}
        pred = {f: rows for f, rows in enumerate(pred_frames) if rows}
        acc = evaluate(gt, pred)
        got = (acc.fp, acc.fn, acc.idsw, acc.gt_count)
        if got != expected:
            bad.append(f"{name}: {got} != {expected}")
    ok = formula == 0.83 and not bad
    detail = f"mota(5,10,2,100) = {formula!r}; {len(SCRIPTED) - len(bad)}/{len(SCRIPTED)} scripted cases agree"
    return record(8, "metric formula and counters", ok, detail + ("; " + "; ".join(bad) if bad else ""))


def criterion_9():
    worst_err = 0.0
    for vx, vy in [(0, 0), (2, -1), (10, 3), (-7, 7)]:
        truth = BBox(300, 200, 40, 80)
        s = kf_init(truth)
        for _ in range(5):
            truth = truth.translate(vx, vy)
            s = kf_update(kf_predict(s), truth)
        pred = kf_to_bbox(kf_predict(s))
        target = truth.translate(vx, vy)
        worst_err = max(worst_err, float(np.hypot(pred.x - target.x, pred.y - target.y)))

    rng = random.Random(99)
    s = kf_init(BBox(100, 100, 30, 60))
    min_eig = np.inf
    for _ in range(1000):
        s = kf_predict(s, rng.randint(1, 30))
        box = BBox(rng.uniform(0, 1000), rng.uniform(0, 1000), rng.uniform(2, 200), rng.uniform(2, 300))
        s = kf_update(s, box)
        cov = s.covariance
        assert np.allclose(cov, cov.T)
        scale = max(1.0, float(np.abs(cov).max()))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(cov).min()) / scale)
    ok = worst_err < 0.5 and min_eig >= -1e-12
    return record(
        9,
        "Kalman convergence and PSD",
        ok,
        f"one-step error {worst_err:.4f} px (< 0.5); min relative eigenvalue over 1000 cycles {min_eig:.2e}",
    )


def _static_scene(n_objects: int) -> ScenarioSpec:
    objects = [
        ObjectSpec(size=(30, 60), start=(20 + 70 * (k % 8), 20 + 100 * (k // 8)), velocity=(0.5, 0.0), texture_seed=k)
        for k in range(n_objects)
    ]
    return ScenarioSpec("grid", (640, 240), 30, objects, detector=NOISELESS, seed=1,
                        tracker_overrides={"lambda_min": 10, "lambda_max": 10})


def criterion_10():
    cfg = TrackerConfig()
    cells = cfg.n_cells
    totals = {}
    per_candidate_ok = True
    for n in (4, 8):
        spec = _static_scene(n)
        scene = generate(spec)
        engine = TrackerEngine(scene_config(spec))
        run_sequence(scene.frames, scene.dets, engine=engine)
        c: MatchCounters = engine.counters
        per_candidate_ok &= c.dynamic_cell_comparisons == cells**2 * c.dynamic_candidates
        totals[n] = c.dynamic_cell_comparisons

    spec = get_scenario("fast-mover")
    scene = generate(spec)
    engine = TrackerEngine(scene_config(spec))
    run_sequence(scene.frames, scene.dets, engine=engine)
    c = engine.counters
    static_ok = c.static_candidates > 0 and c.static_cell_comparisons == cells * c.static_candidates
    per_candidate_ok &= c.dynamic_cell_comparisons == cells**2 * c.dynamic_candidates
    ok = static_ok and per_candidate_ok and totals[8] == 2 * totals[4] and totals[4] > 0
    return record(
        10,
        "complexity counters",
        ok,
        f"static {c.static_cell_comparisons}/{c.static_candidates} candidates = {cells}/candidate; "
        f"dynamic {cells**2}/candidate; 4 tracks {totals[4]}, 8 tracks {totals[8]} comparisons",
    )


def criterion_11(tmp_path: Path):
    out = Path(tmp_path) / "s2"
    cmd_synth("fast-mover", out)
    cfg = build_config(out / "tracker.cfg")
    a, b = out / "a.txt", out / "b.txt"
    cmd_track(out / "img", out / "det.txt", a, cfg, timing=False)
    cmd_track(out / "img", out / "det.txt", b, cfg, timing=False)
    same_bytes = a.read_bytes() == b.read_bytes()

    mappings_equal = True
    for name in ("fast-mover", "crowd-growth"):
        spec = get_scenario(name)
        scene = generate(spec)
        base = track_ids_by_gt(scene, run_sequence(scene.frames, scene.dets, scene_config(spec)))
        rng = random.Random(5)
        for _ in range(2):
            shuffled = {f: rng.sample(d, len(d)) for f, d in scene.dets.items()}
            again = track_ids_by_gt(scene, run_sequence(scene.frames, shuffled, scene_config(spec)))
            mappings_equal &= again == base
    ok = same_bytes and mappings_equal
    return record(
        11,
        "determinism",
        ok,
        f"rerun byte-identical: {same_bytes}; id-object mapping unchanged under shuffled detections: {mappings_equal}",
    )


# --- pytest wrappers -------------------------------------------------------------


def test_ac01_assignment_oracle():
    assert criterion_1()


def test_ac02_wasserstein_oracle():
    assert criterion_2()


def test_ac03_perfect_tracking():
    assert criterion_3()


def test_ac04_trajectory_ablation():
    assert criterion_4()


def test_ac05_occlusion_suppression():
    assert criterion_5()


def test_ac06_sampling_monotonicity():
    assert criterion_6()


def test_ac07_confidence_filtering(tmp_path):
    assert criterion_7(tmp_path)


def test_ac08_metric_fidelity():
    assert criterion_8()


def test_ac09_kalman():
    assert criterion_9()


def test_ac10_complexity_counters():
    assert criterion_10()


def test_ac11_determinism(tmp_path):
    assert criterion_11(tmp_path)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        outcomes = [
            criterion_1(),
            criterion_2(),
            criterion_3(),
            criterion_4(),
            criterion_5(),
            criterion_6(),
            criterion_7(Path(tmp)),
            criterion_8(),
            criterion_9(),
            criterion_10(),
            criterion_11(Path(tmp)),
        ]
    sys.exit(0 if all(outcomes) else 1)
