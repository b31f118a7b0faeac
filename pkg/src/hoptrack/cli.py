"""Command-line entry point: ``hoptrack {track,eval,synth,ablate}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core_types import TrackerConfig
from .io import (
    FormatError,
    LoadReport,
    StreamDetSource,
    apply_overrides,
    frame_paths,
    iter_frames,
    load_config,
    parse_det_file,
    parse_gt_file,
    parse_overrides,
    parse_result_file,
    write_results,
)
from .metrics import evaluate, format_csv, format_table, metric_row, outputs_to_pred
from .pipeline import ScheduleError, TrackerEngine, run_sequence
from .synth import SpecError, generate, get_scenario, load_spec, write_scene


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass
class RunReport:
    frames: int
    fuse_count: int
    update_count: int
    lambda_timeline: list[tuple[int, int]] = field(default_factory=list)
    # None when timing is disabled, never an empty stand-in
    latencies_ms: list[float] | None = None
    metrics: dict[str, float] | None = None
    result_file: str | None = None
    notes: list[str] = field(default_factory=list)

    def latency_summary(self) -> dict[str, float] | None:
        if self.latencies_ms is None or not self.latencies_ms:
            return None
        lat = np.asarray(self.latencies_ms)
        total_s = float(lat.sum()) / 1000.0
        return {
            "mean_ms": float(lat.mean()),
            "p50_ms": float(np.percentile(lat, 50)),
            "p95_ms": float(np.percentile(lat, 95)),
            "max_ms": float(lat.max()),
            "fps": len(lat) / total_s if total_s > 0 else float("inf"),
        }

    def to_dict(self) -> dict:
        data = asdict(self)
        data["latency"] = self.latency_summary()
        return data

    def format(self) -> str:
        lines = [
            f"frames: {self.frames} (fuse {self.fuse_count}, update {self.update_count})",
            "lambda: " + " ".join(f"{f}:{lam}" for f, lam in self.lambda_timeline),
        ]
        lat = self.latency_summary()
        if lat is not None:
            lines.append(
                f"latency: mean {lat['mean_ms']:.2f} ms, p95 {lat['p95_ms']:.2f} ms, "
                f"association-only {lat['fps']:.1f} fps"
            )
        lines.extend(f"note: {n}" for n in self.notes)
        if self.metrics is not None:
            lines.append(format_table({"result": self.metrics}))
        if self.result_file:
            lines.append(f"results: {self.result_file}")
        return "\n".join(lines)


def build_config(
    config_path=None,
    overrides: list[str] | None = None,
    lambda_fixed: int | None = None,
    no_trajectory: bool = False,
) -> TrackerConfig:
    """Defaults, then the config file, then ``--set`` pairs, then dedicated flags."""
    cfg = load_config(config_path) if config_path else TrackerConfig()
    values = parse_overrides(overrides or [])
    if lambda_fixed is not None:
        values["lambda_min"] = lambda_fixed
        values["lambda_max"] = lambda_fixed
    if no_trajectory:
        values["use_trajectory"] = False
    return apply_overrides(cfg, values, "command line")


def cmd_track(
    frames_dir,
    det_file,
    out_file,
    cfg: TrackerConfig | None = None,
    *,
    timing: bool = True,
    gt_file=None,
    stdin=None,
) -> RunReport:
    """Track one sequence and write its result file.

    ``det_file`` may be ``"-"`` to read detection rows from ``stdin`` as the
    tracker asks for them.
    """
    cfg = cfg or TrackerConfig()
    paths = frame_paths(frames_dir)
    n_frames = len(paths)
    notes = []
    if str(det_file) == "-":
        det_source = StreamDetSource(stdin if stdin is not None else sys.stdin)
    else:
        load = LoadReport()
        det_source = parse_det_file(det_file, load)
        notes.extend(load.notes)
        beyond = [f for f in det_source if f >= n_frames]
        if beyond:
            raise ScheduleError(
                f"detections reference frame {min(beyond) + 1} but {frames_dir} holds {n_frames} frames"
            )
    engine = TrackerEngine(cfg)
    latencies: list[float] | None = [] if timing else None
    outputs = run_sequence(iter_frames(frames_dir), det_source, engine=engine, latencies_ms=latencies)
    write_results(outputs, out_file)
    report = RunReport(
        frames=len(outputs),
        fuse_count=engine.stats.fuse_frames,
        update_count=engine.stats.update_frames,
        lambda_timeline=list(engine.stats.lambda_timeline),
        latencies_ms=latencies,
        result_file=str(out_file),
        notes=notes,
    )
    if gt_file is not None:
        report.metrics = metric_row(evaluate(parse_gt_file(gt_file), outputs_to_pred(outputs)))
    return report


def cmd_eval(gt_file, result_file, csv_file=None, name: str | None = None) -> str:
    row = metric_row(evaluate(parse_gt_file(gt_file), parse_result_file(result_file)))
    rows = {name or Path(result_file).stem: row}
    if csv_file is not None:
        Path(csv_file).write_text(format_csv(rows), encoding="utf-8")
    return format_table(rows)


def resolve_scenario(name_or_path: str):
    path = Path(name_or_path)
    if path.suffix == ".json" or path.is_file():
        if not path.is_file():
            raise FileNotFoundError(f"scenario spec not found: {path}")
        return load_spec(path)
    return get_scenario(name_or_path)


def cmd_synth(name_or_path: str, out_dir) -> dict[str, Path]:
    return write_scene(generate(resolve_scenario(name_or_path)), out_dir)


def cmd_ablate(name_or_path: str, overrides: list[str] | None = None, csv_file=None) -> str:
    spec = resolve_scenario(name_or_path)
    scene = generate(spec)
    base = apply_overrides(TrackerConfig(), dict(spec.tracker_overrides), spec.name)
    base = apply_overrides(base, parse_overrides(overrides or []), "command line")
    rows = {}
    for label, use_traj in (("with trajectory", True), ("w/o trajectory", False)):
        cfg = base.with_overrides(use_trajectory=use_traj)
        outputs = run_sequence(scene.frames, scene.dets, cfg)
        rows[label] = metric_row(evaluate(scene.gt, outputs_to_pred(outputs)))
    with_t, without = rows["with trajectory"], rows["w/o trajectory"]
    rows["delta"] = {k: with_t[k] - without[k] for k in with_t}
    if csv_file is not None:
        Path(csv_file).write_text(format_csv(rows), encoding="utf-8")
    return f"scenario: {spec.name}\n" + format_table(rows)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise CliError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hoptrack", description="Detector-agnostic multi-object tracker.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("track", help="track one sequence")
    p.add_argument("frames", help="directory of numbered PPM frames")
    p.add_argument("detections", help="MOTChallenge det file, or - for stdin")
    p.add_argument("-o", "--output", required=True, help="result file to write")
    p.add_argument("--config", help="key=value tracker config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--lambda-fixed", type=int, metavar="N", help="fixed detection period, no dynamic sampling")
    p.add_argument("--no-trajectory", action="store_true", help="disable trajectory-based association")
    p.add_argument("--gt", help="ground truth for an inline metric table")
    p.add_argument("--report-json", help="write the run report as JSON")
    p.add_argument("--no-timing", action="store_true", help="skip latency measurement")

    p = sub.add_parser("eval", help="CLEAR metrics of a result file")
    p.add_argument("gt")
    p.add_argument("result")
    p.add_argument("--csv", help="also write the table as CSV")

    p = sub.add_parser("synth", help="write a synthetic scene")
    p.add_argument("scenario", help="scripted scenario name (S1..S5 or full name) or a JSON spec")
    p.add_argument("out_dir")

    p = sub.add_parser("ablate", help="scenario metrics with and without trajectory matching")
    p.add_argument("scenario")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--csv")
    return parser


def _run(args) -> str:
    if args.command == "track":
        cfg = build_config(args.config, args.overrides, args.lambda_fixed, args.no_trajectory)
        report = cmd_track(
            args.frames, args.detections, args.output, cfg, timing=not args.no_timing, gt_file=args.gt
        )
        if args.report_json:
            Path(args.report_json).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        return report.format()
    if args.command == "eval":
        return cmd_eval(args.gt, args.result, args.csv)
    if args.command == "synth":
        paths = cmd_synth(args.scenario, args.out_dir)
        return "\n".join(f"{k}: {v}" for k, v in paths.items())
    return cmd_ablate(args.scenario, args.overrides, args.csv)


_ERROR_KINDS = (
    (CliError, None),
    (ScheduleError, "schedule"),
    (FormatError, "format"),
    (SpecError, "spec"),
    (FileNotFoundError, "missing"),
    (KeyError, "unknown"),
    (ValueError, "value"),
    (OSError, "io"),
)


def _error_line(exc: BaseException) -> str:
    for cls, kind in _ERROR_KINDS:
        if isinstance(exc, cls):
            kind = kind or exc.kind
            message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
            return f"error: {kind}: " + " ".join(str(message).split())
    raise exc


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        print(_run(args))
    except (CliError, ScheduleError, FormatError, SpecError, KeyError, ValueError, OSError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
