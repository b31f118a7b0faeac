"""Tracker engine: association on detection frames, prediction and suppression in between.

Detection frames run the fuse procedure: confidence filtering, two IoU
association rounds, trajectory-gated static patch matching for tracks that are
still unmatched, track creation and retirement.  Every other ("hopping") frame
runs the update procedure: fresh tracks move with the appearance tracker,
mature tracks with their Kalman filter, and every predicted box is checked by
dynamic patch matching; tracks that fail are withheld from the output.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .appearance import appearance_update, refine_kalman
from .assignment import iou_match
from .core_types import BBox, Detection, Track, TrackerConfig, TrackStatus, iou
from .kalman import kf_init, kf_predict, kf_to_bbox, kf_update
from .patch_match import (
    EmptyCropError,
    MatchCounters,
    build_template,
    discretize_histograms,
    dynamic_match,
    extract_features,
    features_from_means,
    normalize_features,
    static_match,
)
from .sampling import SamplingDecision, adjust_rate, cluster_detections
from .trajectory import build_trajectory, candidates_on_trajectory

log = logging.getLogger(__name__)


class ScheduleError(RuntimeError):
    pass


@dataclass
class FrameOutput:
    frame_id: int
    rows: list[tuple[int, BBox, float]] = field(default_factory=list)

    @property
    def track_ids(self) -> list[int]:
        return [r[0] for r in self.rows]


@dataclass
class EngineStats:
    fuse_frames: int = 0
    update_frames: int = 0
    # (detection frame, period in force from that frame)
    lambda_timeline: list[tuple[int, int]] = field(default_factory=list)
    # (detection frame, cluster count seen there)
    cluster_timeline: list[tuple[int, int]] = field(default_factory=list)
    iou_stage1: int = 0
    iou_stage2: int = 0
    trajectory_matches: int = 0
    new_tracks: int = 0
    suppressed: int = 0
    rescued: int = 0
    appearance_failures: int = 0


def canonical_order(dets: list[Detection]) -> list[Detection]:
    """Sort detections by geometry so that input order never matters."""
    return sorted(dets, key=lambda d: (d.bbox.as_tuple(), -d.confidence))


class TrackerEngine:
    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Track] = []
        self.removed: list[Track] = []
        self.next_id = 1
        self.frame_index = 0
        self.sampling = SamplingDecision(lam=self.cfg.initial_lambda, timestamp_frame=0)
        self.pending: SamplingDecision | None = None
        self.next_detection_frame = 0
        self.prev_frame = None
        self.counters = MatchCounters()
        self.stats = EngineStats()
        # confidences of detections that were associated or spawned tracks, per fuse frame
        self.accepted_confidences: list[tuple[int, float]] = []

    # --- schedule ------------------------------------------------------------

    def is_detection_frame(self, frame_index: int | None = None) -> bool:
        f = self.frame_index if frame_index is None else frame_index
        return f == self.next_detection_frame

    def set_lambda(self, lam: int) -> None:
        """Schedule a period change; it applies from the next detection frame on."""
        self.pending = SamplingDecision(lam=int(lam), timestamp_frame=self.frame_index)

    @property
    def active_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is TrackStatus.ACTIVE]

    @property
    def lost_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is TrackStatus.LOST]

    def step(self, frame, dets: list[Detection] | None = None) -> FrameOutput:
        if self.is_detection_frame():
            if dets is None:
                raise ScheduleError(f"frame {self.frame_index} is a detection frame but no detections were given")
            out = self.hop_fuse(frame, dets)
        else:
            if dets is not None:
                raise ScheduleError(
                    f"detections supplied on hopping frame {self.frame_index} "
                    f"(next detection frame is {self.next_detection_frame})"
                )
            out = self.hop_update(frame)
        self.prev_frame = frame
        self.frame_index += 1
        return out

    # --- detection frames ----------------------------------------------------

    def _begin_period(self, f: int) -> None:
        if self.pending is not None:
            self.sampling = self.pending
            self.pending = None
        lam = self.sampling.lam
        self.next_detection_frame = f + lam
        self.stats.lambda_timeline.append((f, lam))

    def hop_fuse(self, frame, dets: list[Detection]) -> FrameOutput:
        cfg = self.cfg
        f = self.frame_index
        self.stats.fuse_frames += 1
        self._begin_period(f)
        width, height = frame.width, frame.height

        # pool = active + lost
        pool = sorted(
            (t for t in self.tracks if t.status in (TrackStatus.ACTIVE, TrackStatus.LOST)),
            key=lambda t: t.id,
        )

        candidates = []
        for d in dets:
            if d.confidence < cfg.tau:
                continue
            box = d.bbox.clip(width, height)
            if box.w <= 0 or box.h <= 0:
                continue
            candidates.append(Detection(d.frame_id, box, d.confidence))
        candidates = canonical_order(candidates)

        for t in pool:
            steps = f - t.kf_frame
            if steps >= 1:
                t.kalman = kf_predict(t.kalman, steps)
                t.kf_frame = f
        predicted = [kf_to_bbox(t.kalman) for t in pool]

        matches: dict[int, int] = {}  # pool index -> candidate index
        res = iou_match(predicted, [d.bbox for d in candidates], cfg.phi1)
        for ti, di in res.pairs:
            matches[ti] = di
        self.stats.iou_stage1 += len(res.pairs)

        rest_t = res.unmatched_tracks
        rest_d = res.unmatched_detections
        res2 = iou_match([predicted[i] for i in rest_t], [candidates[j].bbox for j in rest_d], cfg.phi2)
        for a, b in res2.pairs:
            matches[rest_t[a]] = rest_d[b]
        self.stats.iou_stage2 += len(res2.pairs)
        unmatched_t = [rest_t[a] for a in res2.unmatched_tracks]
        unmatched_d = [rest_d[b] for b in res2.unmatched_detections]

        rematched: set[int] = set()
        if cfg.use_trajectory and unmatched_t and unmatched_d:
            hist_cache: dict[int, np.ndarray] = {}
            for ti in list(unmatched_t):
                t = pool[ti]
                if t.template is None or not unmatched_d:
                    continue
                traj = build_trajectory(t, cfg, max(f - t.anchor_frame, 1))
                order = candidates_on_trajectory(traj, [candidates[j] for j in unmatched_d])
                for k in order:
                    dj = unmatched_d[k]
                    if dj not in hist_cache:
                        hist_cache[dj] = discretize_histograms(frame, candidates[dj].bbox, cfg)
                    if static_match(
                        t.template.grid_histograms, hist_cache[dj], cfg.psi1, cfg.psi2_cells, self.counters
                    ):
                        matches[ti] = dj
                        rematched.add(ti)
                        unmatched_t.remove(ti)
                        unmatched_d.remove(dj)
                        self.stats.trajectory_matches += 1
                        break

        out = FrameOutput(f)
        for ti in sorted(matches):
            t = pool[ti]
            d = candidates[matches[ti]]
            recovered = t.status is TrackStatus.LOST
            if ti in rematched:
                # the motion model missed this object: restart it from the observed displacement
                t.kalman = kf_init(d.bbox, self._observed_velocity(t, d, f))
            else:
                t.kalman = kf_update(t.kalman, d.bbox)
            t.set_status(TrackStatus.ACTIVE)
            self._confirm(t, frame, d, f)
            if recovered or ti in rematched:
                t.is_new = cfg.appearance_updates > 0
                t.appearance_updates_remaining = cfg.appearance_updates

        for dj in sorted(unmatched_d):
            d = candidates[dj]
            t = Track(
                id=self.next_id,
                kalman=kf_init(d.bbox),
                status=TrackStatus.ACTIVE,
                last_bbox=d.bbox,
                is_new=cfg.appearance_updates > 0,
                appearance_updates_remaining=cfg.appearance_updates,
                kf_frame=f,
            )
            self.next_id += 1
            self._confirm(t, frame, d, f)
            self.tracks.append(t)
            self.stats.new_tracks += 1

        for ti in unmatched_t:
            t = pool[ti]
            t.lost_in_hop = False
            t.set_status(TrackStatus.LOST)
            t.frames_lost = f - t.last_active_frame
            if t.frames_lost > cfg.lost_timeout:
                t.set_status(TrackStatus.REMOVED)
        self._sweep_removed()

        for t in sorted(self.active_tracks, key=lambda t: t.id):
            out.rows.append((t.id, t.last_bbox, t.score))

        self._schedule_rate_adjust(frame, f)
        return out

    @staticmethod
    def _observed_velocity(t: Track, d: Detection, f: int) -> tuple[float, float]:
        if t.anchor is None or f <= t.anchor_frame:
            return t.kalman.velocity
        cx, cy = d.bbox.centroid()
        elapsed = f - t.anchor_frame
        return (cx - t.anchor[0]) / elapsed, (cy - t.anchor[1]) / elapsed

    def _confirm(self, t: Track, frame, d: Detection, f: int) -> None:
        t.last_bbox = d.bbox
        t.score = d.confidence
        t.frames_lost = 0
        t.lost_in_hop = False
        t.anchor = d.bbox.centroid()
        t.anchor_frame = f
        t.last_active_frame = f
        t.kf_frame = f
        self.accepted_confidences.append((f, d.confidence))
        try:
            t.template = build_template(frame, d.bbox, self.cfg, f)
        except EmptyCropError:
            pass

    def _sweep_removed(self) -> None:
        keep = []
        for t in self.tracks:
            (self.removed if t.status is TrackStatus.REMOVED else keep).append(t)
        self.tracks = keep

    def _schedule_rate_adjust(self, frame, f: int) -> None:
        # takes effect at the next detection frame, like an asynchronous worker
        boxes = [Detection(f, t.last_bbox, min(max(t.score, 0.0), 1.0)) for t in self.active_tracks]
        eps1 = self.cfg.eps1_px(frame.width, frame.height)
        clusters = cluster_detections(canonical_order(boxes), self.cfg, eps1=eps1)
        self.stats.cluster_timeline.append((f, len(clusters)))
        self.pending = adjust_rate(clusters, self.cfg, self.sampling, frame=f)

    # --- hopping frames ------------------------------------------------------

    def hop_update(self, frame) -> FrameOutput:
        cfg = self.cfg
        f = self.frame_index
        self.stats.update_frames += 1
        out = FrameOutput(f)
        candidates = sorted(
            (
                t
                for t in self.tracks
                if t.status is TrackStatus.ACTIVE or (t.status is TrackStatus.LOST and t.lost_in_hop)
            ),
            key=lambda t: t.id,
        )
        for t in candidates:
            predicted = None
            if t.is_new and t.status is TrackStatus.ACTIVE and self.prev_frame is not None:
                predicted = appearance_update(self.prev_frame, frame, t.last_bbox, cfg)
                if predicted is not None:
                    refine_kalman(t, predicted)
                else:
                    self.stats.appearance_failures += 1
            if predicted is None:
                t.kalman = kf_predict(t.kalman, max(f - t.kf_frame, 1))
                predicted = kf_to_bbox(t.kalman)
            t.kf_frame = f

            passed_iou = iou(predicted, t.last_bbox) >= cfg.phi3
            confirmed = self._dynamic_check(t, frame, predicted)
            if confirmed:
                if not passed_iou:
                    self.stats.rescued += 1
                t.set_status(TrackStatus.ACTIVE)
                t.lost_in_hop = False
                t.frames_lost = 0
                t.last_active_frame = f
                t.last_bbox = predicted
                out.rows.append((t.id, predicted, t.score))
            else:
                self.stats.suppressed += 1
                t.set_status(TrackStatus.LOST)
                t.lost_in_hop = True
                t.frames_lost = f - t.last_active_frame
        for t in self.tracks:
            if t.status is TrackStatus.LOST and not t.lost_in_hop:
                t.frames_lost = f - t.last_active_frame
        return out

    def _dynamic_check(self, t: Track, frame, predicted: BBox) -> bool:
        if t.template is None:
            return True
        vx, vy = t.kalman.velocity
        try:
            current = extract_features(frame, predicted, vx, vy, self.cfg)
        except EmptyCropError:
            return False
        reference = features_from_means(t.template.grid_means, vx, vy)
        diag = predicted.diagonal
        return dynamic_match(
            normalize_features(reference, diag),
            normalize_features(current, diag),
            self.cfg.psi3,
            self.cfg.psi4_cells,
            self.counters,
        )


DetSource = Mapping[int, list[Detection]] | Callable[[int], list[Detection]]


def _detections_for(source: DetSource, f: int) -> list[Detection]:
    if callable(source):
        return list(source(f))
    return list(source.get(f, []))


def run_sequence(
    frames: Iterable,
    det_source: DetSource,
    cfg: TrackerConfig | None = None,
    engine: TrackerEngine | None = None,
    on_frame: Callable[[int, FrameOutput], None] | None = None,
    latencies_ms: list[float] | None = None,
) -> list[FrameOutput]:
    """Stream every frame through one engine and collect the per-frame outputs.

    When ``latencies_ms`` is given, the wall time of each engine step (from a
    monotonic clock) is appended to it.
    """
    engine = engine or TrackerEngine(cfg)
    outputs = []
    for f, frame in enumerate(frames):
        try:
            dets = _detections_for(det_source, f) if engine.is_detection_frame(f) else None
        except (OSError, ValueError) as exc:
            raise type(exc)(f"frame {f}: {exc}") from exc
        start = time.perf_counter()
        out = engine.step(frame, dets)
        if latencies_ms is not None:
            latencies_ms.append((time.perf_counter() - start) * 1000.0)
        outputs.append(out)
        if on_frame is not None:
            on_frame(f, out)
    return outputs
