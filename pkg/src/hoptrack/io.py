"""Frames, MOTChallenge CSV files and key=value configs.

Engine frame indices are 0-based; files are 1-based.  The conversion happens
here and nowhere else.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .core_types import BBox, Detection, TrackerConfig

log = logging.getLogger(__name__)


class FormatError(ValueError):
    """Malformed input file; the message carries file and line context."""


class MalformedHeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class UnsupportedMaxvalError(FormatError):
    pass


@dataclass
class FrameBuffer:
    """One decoded RGB frame, ``pixels`` shaped (height, width, 3) uint8."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} != ({self.height}, {self.width}, 3)"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> FrameBuffer:
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        return cls(pixels.shape[1], pixels.shape[0], pixels)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


# --- PPM ---------------------------------------------------------------------

_HEADER_TOKENS = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_ppm(data: bytes, source: str = "<bytes>") -> FrameBuffer:
    pos = 0
    tokens = []
    for _ in range(4):
        m = _HEADER_TOKENS.match(data, pos)
        if m is None:
            raise MalformedHeaderError(f"{source}: malformed header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P6":
        raise MalformedHeaderError(f"{source}: malformed header, expected P6 magic, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedHeaderError(f"{source}: malformed header, non-integer size fields") from None
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{source}: malformed header, size {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"{source}: unsupported maxval {maxval} (only 255)")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedHeaderError(f"{source}: malformed header, missing separator before payload")
    payload = data[pos + 1:]
    need = width * height * 3
    if len(payload) < need:
        raise TruncatedPayloadError(f"{source}: truncated payload, {len(payload)} of {need} bytes")
    pixels = np.frombuffer(payload[:need], dtype=np.uint8).reshape(height, width, 3).copy()
    return FrameBuffer(width, height, pixels)


def encode_ppm(frame: FrameBuffer) -> bytes:
    return b"P6\n%d %d\n255\n" % (frame.width, frame.height) + frame.pixels.tobytes()


def load_frame(path) -> FrameBuffer:
    path = Path(path)
    return decode_ppm(path.read_bytes(), str(path))


def write_frame(frame: FrameBuffer, path) -> None:
    Path(path).write_bytes(encode_ppm(frame))


def frame_paths(frames_dir) -> list[Path]:
    """Numbered ``*.ppm`` files of a directory in frame order."""
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"frames directory not found: {frames_dir}")
    paths = [p for p in frames_dir.iterdir() if p.suffix == ".ppm" and p.stem.isdigit()]
    paths.sort(key=lambda p: int(p.stem))
    for expect, p in enumerate(paths, start=1):
        if int(p.stem) != expect:
            raise FileNotFoundError(f"missing frame {expect} in {frames_dir}")
    return paths


def iter_frames(frames_dir) -> Iterator[FrameBuffer]:
    for p in frame_paths(frames_dir):
        yield load_frame(p)


def frame_filename(index: int) -> str:
    """File name for the 0-based engine frame ``index``."""
    return f"{index + 1:06d}.ppm"


# --- MOTChallenge CSV --------------------------------------------------------


@dataclass
class LoadReport:
    rows: int = 0
    normalized_confidence: bool = False
    max_confidence: float = 0.0
    notes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class MotRow:
    frame: int  # 1-based as in the file
    id: int
    bbox: BBox
    conf: float
    line: int


def parse_mot_lines(lines: Iterable[str], source: str = "<stream>", first_line: int = 1) -> list[MotRow]:
    rows = []
    for lineno, raw in enumerate(lines, start=first_line):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = [p.strip() for p in text.split(",")]
        if len(parts) < 7:
            raise FormatError(f"{source}:{lineno}: expected at least 7 fields, got {len(parts)}")
        try:
            frame = int(float(parts[0]))
            ident = int(float(parts[1]))
            x, y, w, h, conf = (float(v) for v in parts[2:7])
            for v in parts[7:]:
                float(v)
        except ValueError:
            raise FormatError(f"{source}:{lineno}: non-numeric field in {text!r}") from None
        if not all(math.isfinite(v) for v in (x, y, w, h, conf)):
            raise FormatError(f"{source}:{lineno}: non-finite field in {text!r}")
        if frame < 1:
            raise FormatError(f"{source}:{lineno}: frame must be >= 1, got {frame}")
        if w <= 0 or h <= 0:
            raise FormatError(f"{source}:{lineno}: box width/height must be > 0")
        rows.append(MotRow(frame, ident, BBox(x, y, w, h), conf, lineno))
    return rows


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def detections_from_rows(
    rows: list[MotRow], report: LoadReport | None = None
) -> dict[int, list[Detection]]:
    report = report if report is not None else LoadReport()
    report.rows = len(rows)
    max_conf = max((r.conf for r in rows), default=0.0)
    report.max_confidence = max_conf
    scale = 1.0
    if max_conf > 1.0:
        scale = 1.0 / max_conf
        report.normalized_confidence = True
        report.notes.append(f"confidences divided by max score {max_conf:g}")
        log.info("detection confidences normalized by %g", max_conf)
    out: dict[int, list[Detection]] = {}
    for r in rows:
        conf = min(max(r.conf * scale, 0.0), 1.0)
        out.setdefault(r.frame - 1, []).append(Detection(r.frame - 1, r.bbox, conf))
    return out


def parse_det_file(path, report: LoadReport | None = None) -> dict[int, list[Detection]]:
    """Detections keyed by 0-based frame, file order preserved within a frame."""
    rows = parse_mot_lines(_read_lines(path), str(path))
    return detections_from_rows(rows, report)


def read_det_stream(stream: TextIO, report: LoadReport | None = None) -> dict[int, list[Detection]]:
    """Same row format as det files, read from a line-delimited pipe."""
    return detections_from_rows(parse_mot_lines(stream, "<stdin>"), report)


class StreamDetSource:
    """Lazy detection source over a line-delimited pipe (det-file row format).

    Rows must arrive in non-decreasing frame order.  Asking for frame ``f``
    consumes lines until a row of a later frame shows up, so a live detector
    can feed the tracker one frame at a time.  Confidences must already lie
    in [0, 1] because the stream maximum is unknown up front.
    """

    def __init__(self, stream: TextIO, source: str = "<stdin>"):
        self._lines = iter(stream)
        self._source = source
        self._lineno = 0
        self._pending: MotRow | None = None
        self._last_frame = 0

    def _next_row(self) -> MotRow | None:
        for raw in self._lines:
            self._lineno += 1
            rows = parse_mot_lines([raw], self._source, self._lineno)
            if not rows:
                continue
            row = rows[0]
            if row.frame < self._last_frame:
                raise FormatError(f"{self._source}:{self._lineno}: frame {row.frame} after frame {self._last_frame}")
            if not 0.0 <= row.conf <= 1.0:
                raise FormatError(f"{self._source}:{self._lineno}: confidence {row.conf} outside [0, 1]")
            self._last_frame = row.frame
            return row
        return None

    def __call__(self, frame_index: int) -> list[Detection]:
        wanted = frame_index + 1
        out = []
        while True:
            row = self._pending if self._pending is not None else self._next_row()
            self._pending = None
            if row is None:
                return out
            if row.frame > wanted:
                self._pending = row
                return out
            if row.frame == wanted:
                out.append(Detection(frame_index, row.bbox, row.conf))


def parse_gt_file(path) -> dict[int, list[tuple[int, BBox]]]:
    """Ground-truth boxes keyed by 0-based frame.

    Rows whose 7th column is 0 are "not considered" in MOTChallenge GT and
    are skipped.
    """
    out: dict[int, list[tuple[int, BBox]]] = {}
    for r in parse_mot_lines(_read_lines(path), str(path)):
        if r.conf == 0:
            continue
        out.setdefault(r.frame - 1, []).append((r.id, r.bbox))
    return out


def parse_result_file(path) -> dict[int, list[tuple[int, BBox]]]:
    out: dict[int, list[tuple[int, BBox]]] = {}
    for r in parse_mot_lines(_read_lines(path), str(path)):
        out.setdefault(r.frame - 1, []).append((r.id, r.bbox))
    return out


def format_results(outputs) -> str:
    lines = []
    for out in outputs:
        for track_id, box, score in sorted(out.rows, key=lambda r: r[0]):
            lines.append(
                f"{out.frame_id + 1},{track_id},{box.x:.2f},{box.y:.2f},{box.w:.2f},{box.h:.2f},"
                f"{score:.4f},-1,-1,-1"
            )
    return "".join(line + "\n" for line in lines)


def write_results(outputs, path) -> None:
    Path(path).write_text(format_results(outputs), encoding="utf-8")


def format_gt(gt: dict[int, list[tuple[int, BBox]]]) -> str:
    lines = []
    for frame in sorted(gt):
        for ident, box in sorted(gt[frame], key=lambda r: r[0]):
            lines.append(
                f"{frame + 1},{ident},{box.x:.2f},{box.y:.2f},{box.w:.2f},{box.h:.2f},1,-1,-1,-1"
            )
    return "".join(line + "\n" for line in lines)


def format_dets(dets: dict[int, list[Detection]]) -> str:
    lines = []
    for frame in sorted(dets):
        for d in dets[frame]:
            b = d.bbox
            lines.append(
                f"{frame + 1},-1,{b.x:.2f},{b.y:.2f},{b.w:.2f},{b.h:.2f},{d.confidence:.4f},-1,-1,-1"
            )
    return "".join(line + "\n" for line in lines)


# --- config ------------------------------------------------------------------


def _coerce(key: str, type_name: str, raw: str, source: str):
    raw = raw.strip()
    optional = "None" in type_name
    if optional and raw.lower() in ("none", ""):
        return None
    try:
        if type_name.startswith("bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name.startswith("int"):
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        return float(raw)
    except ValueError:
        raise FormatError(f"{source}: invalid value {raw!r} for key '{key}'") from None


def parse_config_text(text: str, source: str = "<config>", base: TrackerConfig | None = None) -> TrackerConfig:
    types = {f.name: str(f.type) for f in fields(TrackerConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in types:
            raise FormatError(f"{source}:{lineno}: unknown config key '{key}'")
        values[key] = _coerce(key, types[key], value, f"{source}:{lineno}")
    return apply_overrides(base or TrackerConfig(), values, source)


def apply_overrides(cfg: TrackerConfig, values: dict, source: str = "<overrides>") -> TrackerConfig:
    try:
        return cfg.with_overrides(**values)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None


def parse_overrides(pairs: Iterable[str], source: str = "--set") -> dict:
    types = {f.name: str(f.type) for f in fields(TrackerConfig)}
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise FormatError(f"{source}: expected key=value, got {pair!r}")
        key, value = (p.strip() for p in pair.split("=", 1))
        if key not in types:
            raise FormatError(f"{source}: unknown config key '{key}'")
        values[key] = _coerce(key, types[key], value, source)
    return values


def load_config(path) -> TrackerConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def format_config(cfg: TrackerConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"
