"""HopTrack-style multi-object tracking with sparse detection frames."""

from __future__ import annotations

from .assignment import MatchResult, iou_match, solve_assignment
from .core_types import BBox, Detection, Track, TrackerConfig, TrackStatus, iou
from .io import FrameBuffer, load_config, parse_det_file, parse_gt_file, write_results
from .kalman import KalmanState, kf_init, kf_predict, kf_to_bbox, kf_update
from .metrics import EvalAccumulator, evaluate, idf1, mota
from .patch_match import dynamic_match, static_match, wasserstein_1d
from .pipeline import FrameOutput, TrackerEngine, run_sequence
from .sampling import Cluster, SamplingDecision, adjust_rate, cluster_detections
from .synth import ScenarioSpec, generate, scripted_scenarios

__all__ = [
    "BBox",
    "Cluster",
    "Detection",
    "EvalAccumulator",
    "FrameBuffer",
    "FrameOutput",
    "KalmanState",
    "MatchResult",
    "SamplingDecision",
    "ScenarioSpec",
    "Track",
    "TrackStatus",
    "TrackerConfig",
    "TrackerEngine",
    "adjust_rate",
    "cluster_detections",
    "dynamic_match",
    "evaluate",
    "generate",
    "idf1",
    "iou",
    "iou_match",
    "kf_init",
    "kf_predict",
    "kf_to_bbox",
    "kf_update",
    "load_config",
    "mota",
    "parse_det_file",
    "parse_gt_file",
    "run_sequence",
    "scripted_scenarios",
    "solve_assignment",
    "static_match",
    "wasserstein_1d",
    "write_results",
]
