"""Synthetic scenes: rendered frames, ground truth and corrupted detections.

Objects are textured rectangles (a checkerboard in an object-specific pair of
shades of one hue, plus fixed per-object pixel noise so block matching has a
unique optimum).  Static occluders are drawn over everything.  An object whose
visible fraction drops below ``min_visible`` gets neither a ground-truth row
nor a detection on that frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core_types import BBox, Detection
from .io import FrameBuffer, format_dets, format_gt, frame_filename, write_frame

# saturated hues, (bright shade, dark shade)
PALETTE: list[tuple[tuple[int, int, int], tuple[int, int, int]]] = [
    ((220, 40, 40), (140, 20, 20)),
    ((40, 60, 220), (20, 30, 140)),
    ((230, 200, 30), (150, 130, 10)),
    ((200, 40, 200), (120, 20, 120)),
    ((240, 130, 20), (160, 80, 10)),
    ((130, 40, 220), (80, 20, 140)),
    ((220, 40, 120), (140, 20, 70)),
    ((40, 200, 40), (20, 120, 20)),
]
BACKGROUND_LEVEL = 100
OCCLUDER_COLOR = (30, 150, 150)


@dataclass
class ObjectSpec:
    size: tuple[int, int]
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    texture_seed: int = 0
    # (frame, (vx, vy)) pairs; the new velocity applies from that frame's step on
    velocity_changes: list[tuple[int, tuple[float, float]]] = field(default_factory=list)
    appear: int = 0
    vanish: int | None = None
    confidence: float | None = None
    # (period, low confidence): low on odd periods
    flicker: tuple[int, float] | None = None


@dataclass
class OccluderSpec:
    box: tuple[int, int, int, int]
    color: tuple[int, int, int] = OCCLUDER_COLOR


@dataclass
class DetectorModel:
    confidence_base: float = 0.9
    confidence_jitter: float = 0.05
    dropout: float = 0.0
    center_std: float = 1.0
    size_noise: float = 0.05


@dataclass
class ScenarioSpec:
    name: str
    frame_size: tuple[int, int]
    length: int
    objects: list[ObjectSpec]
    detector: DetectorModel = field(default_factory=DetectorModel)
    occluders: list[OccluderSpec] = field(default_factory=list)
    seed: int = 0
    min_visible: float = 0.5
    # suggested tracker settings for this scene (key=value config semantics)
    tracker_overrides: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioSpec:
        data = dict(data)
        data["frame_size"] = tuple(data["frame_size"])
        data["objects"] = [_object_from_dict(o) for o in data.get("objects", [])]
        data["detector"] = DetectorModel(**data.get("detector", {}))
        data["occluders"] = [
            OccluderSpec(tuple(o["box"]), tuple(o.get("color", OCCLUDER_COLOR)))
            for o in data.get("occluders", [])
        ]
        return cls(**data)


def _object_from_dict(o: dict) -> ObjectSpec:
    o = dict(o)
    o["size"] = tuple(o["size"])
    o["start"] = tuple(o["start"])
    o["velocity"] = tuple(o.get("velocity", (0.0, 0.0)))
    o["velocity_changes"] = [(int(f), tuple(v)) for f, v in o.get("velocity_changes", [])]
    if o.get("flicker") is not None:
        o["flicker"] = (int(o["flicker"][0]), float(o["flicker"][1]))
    return ObjectSpec(**o)


def load_spec(path) -> ScenarioSpec:
    return ScenarioSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class SpecError(ValueError):
    pass


@dataclass
class Scene:
    spec: ScenarioSpec
    frames: list[FrameBuffer]
    gt: dict[int, list[tuple[int, BBox]]]
    dets: dict[int, list[Detection]]
    # frame -> {object id: visible fraction}
    visibility: dict[int, dict[int, float]]

    def hidden_frames(self, object_id: int) -> list[int]:
        """Frames on which the object exists but is completely covered."""
        return [f for f, vis in sorted(self.visibility.items()) if vis.get(object_id) == 0.0]


def trajectory_of(obj: ObjectSpec, length: int) -> list[tuple[int, int]]:
    """Integer top-left positions for frames ``0 .. length-1``."""
    changes = dict(obj.velocity_changes)
    x, y = obj.start
    v = obj.velocity
    out = []
    for f in range(length):
        if f in changes:
            v = changes[f]
        out.append((int(math.floor(x + 0.5)), int(math.floor(y + 0.5))))
        x, y = x + v[0], y + v[1]
    return out


def is_present(obj: ObjectSpec, f: int) -> bool:
    return f >= obj.appear and (obj.vanish is None or f < obj.vanish)


def validate(spec: ScenarioSpec) -> None:
    width, height = spec.frame_size
    if width <= 0 or height <= 0:
        raise SpecError(f"frame size must be positive, got {spec.frame_size}")
    if spec.length < 0:
        raise SpecError(f"length must be >= 0, got {spec.length}")
    d = spec.detector
    if not 0.0 <= d.dropout <= 1.0:
        raise SpecError(f"dropout must lie in [0, 1], got {d.dropout}")
    if d.center_std < 0 or d.size_noise < 0 or d.confidence_jitter < 0:
        raise SpecError("detector noise parameters must be >= 0")
    for k, obj in enumerate(spec.objects):
        w, h = obj.size
        if w <= 0 or h <= 0:
            raise SpecError(f"object {k + 1}: size must be positive, got {obj.size}")
        for f, (x, y) in enumerate(trajectory_of(obj, spec.length)):
            if not is_present(obj, f):
                continue
            if x < 0 or y < 0 or x + w > width or y + h > height:
                raise SpecError(
                    f"object {k + 1} leaves the {width}x{height} frame at frame {f} (box {x},{y},{w},{h})"
                )
    for occ in spec.occluders:
        x, y, w, h = occ.box
        if w <= 0 or h <= 0:
            raise SpecError(f"occluder {occ.box} has non-positive size")


def object_colors(seed: int) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    return PALETTE[seed % len(PALETTE)]


def render_texture(obj: ObjectSpec) -> np.ndarray:
    """(h, w, 3) uint8 texture, fixed in object coordinates."""
    w, h = obj.size
    bright, dark = (np.array(c, dtype=np.int16) for c in object_colors(obj.texture_seed))
    square = max(3, min(w, h) // 8)
    yy, xx = np.mgrid[0:h, 0:w]
    checker = ((yy // square + xx // square) % 2).astype(bool)
    tex = np.where(checker[..., None], dark, bright)
    rng = np.random.default_rng(10_000 + obj.texture_seed)
    noise = rng.integers(-10, 11, size=(h, w, 1), dtype=np.int16)
    return np.clip(tex + noise, 0, 255).astype(np.uint8)


def _background(spec: ScenarioSpec) -> np.ndarray:
    width, height = spec.frame_size
    rng = np.random.default_rng(spec.seed + 7)
    noise = rng.integers(-12, 13, size=(height, width, 1), dtype=np.int16)
    return np.clip(BACKGROUND_LEVEL + noise, 0, 255).astype(np.uint8).repeat(3, axis=2)


def _visible_fraction(box: tuple[int, int, int, int], occluders: list[OccluderSpec]) -> float:
    x, y, w, h = box
    mask = np.ones((h, w), dtype=bool)
    for occ in occluders:
        ox, oy, ow, oh = occ.box
        x1, y1 = max(ox - x, 0), max(oy - y, 0)
        x2, y2 = min(ox + ow - x, w), min(oy + oh - y, h)
        if x2 > x1 and y2 > y1:
            mask[y1:y2, x1:x2] = False
    return float(mask.mean())


def generate(spec: ScenarioSpec) -> Scene:
    validate(spec)
    width, height = spec.frame_size
    background = _background(spec)
    textures = [render_texture(o) for o in spec.objects]
    paths = [trajectory_of(o, spec.length) for o in spec.objects]
    rng = np.random.default_rng(spec.seed)
    det_model = spec.detector

    frames: list[FrameBuffer] = []
    gt: dict[int, list[tuple[int, BBox]]] = {}
    dets: dict[int, list[Detection]] = {}
    visibility: dict[int, dict[int, float]] = {}
    for f in range(spec.length):
        canvas = background.copy()
        frame_gt = []
        frame_dets = []
        frame_vis = {}
        for k, obj in enumerate(spec.objects):
            # fixed draw count per object and frame keeps the stream stable
            u_drop, u_conf, n_x, n_y, u_w, u_h = (
                rng.random(),
                rng.random(),
                rng.standard_normal(),
                rng.standard_normal(),
                rng.random(),
                rng.random(),
            )
            if not is_present(obj, f):
                continue
            x, y = paths[k][f]
            w, h = obj.size
            canvas[y:y + h, x:x + w] = textures[k]
            vis = _visible_fraction((x, y, w, h), spec.occluders)
            frame_vis[k + 1] = vis
            if vis < spec.min_visible:
                continue
            box = BBox(float(x), float(y), float(w), float(h))
            frame_gt.append((k + 1, box))
            if u_drop < det_model.dropout:
                continue
            base = obj.confidence if obj.confidence is not None else det_model.confidence_base
            if obj.flicker is not None and (f // obj.flicker[0]) % 2 == 1:
                base = obj.flicker[1]
            conf = min(max(base - det_model.confidence_jitter * u_conf, 0.0), 1.0)
            cx = x + w / 2 + det_model.center_std * n_x
            cy = y + h / 2 + det_model.center_std * n_y
            dw = w * (1 + det_model.size_noise * (2 * u_w - 1))
            dh = h * (1 + det_model.size_noise * (2 * u_h - 1))
            det_box = BBox.from_centroid(cx, cy, dw, dh).clip(width, height)
            if det_box.w > 0 and det_box.h > 0:
                frame_dets.append(Detection(f, det_box, conf))
        for occ in spec.occluders:
            ox, oy, ow, oh = occ.box
            canvas[max(oy, 0):oy + oh, max(ox, 0):ox + ow] = occ.color
        frames.append(FrameBuffer(width, height, canvas))
        if frame_gt:
            gt[f] = frame_gt
        if frame_dets:
            dets[f] = frame_dets
        visibility[f] = frame_vis
    return Scene(spec, frames, gt, dets, visibility)


def write_scene(scene: Scene, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    img_dir = out_dir / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    for f, frame in enumerate(scene.frames):
        write_frame(frame, img_dir / frame_filename(f))
    gt_path = out_dir / "gt.txt"
    det_path = out_dir / "det.txt"
    spec_path = out_dir / "scenario.json"
    gt_path.write_text(format_gt(scene.gt), encoding="utf-8")
    det_path.write_text(format_dets(scene.dets), encoding="utf-8")
    spec_path.write_text(json.dumps(scene.spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    # suggested tracker settings, readable by ``hoptrack track --config``
    cfg_path = out_dir / "tracker.cfg"
    cfg_lines = [f"{k}={v}" for k, v in sorted(scene.spec.tracker_overrides.items())]
    cfg_path.write_text("".join(line + "\n" for line in cfg_lines), encoding="utf-8")
    return {"frames": img_dir, "gt": gt_path, "det": det_path, "spec": spec_path, "config": cfg_path}


NOISELESS = DetectorModel(confidence_base=0.9, confidence_jitter=0.0, dropout=0.0, center_std=0.0, size_noise=0.0)


def _two_steady() -> ScenarioSpec:
    return ScenarioSpec(
        name="two-steady",
        frame_size=(640, 360),
        length=100,
        objects=[
            ObjectSpec(size=(32, 64), start=(60, 100), velocity=(2.0, 0.5), texture_seed=0),
            ObjectSpec(size=(32, 64), start=(500, 150), velocity=(-1.5, 0.8), texture_seed=1),
        ],
        detector=NOISELESS,
        seed=1,
        tracker_overrides={"lambda_min": 10, "lambda_max": 10},
    )


def _fast_mover() -> ScenarioSpec:
    fast = ObjectSpec(
        size=(28, 56),
        start=(20, 150),
        velocity=(4.0, 0.0),
        texture_seed=0,
        # speeds up by at most 1.35x per detection period so the trajectory window keeps up
        velocity_changes=[(20, (5.2, 0.0)), (30, (6.8, 0.0)), (40, (8.8, 0.0)), (50, (11.5, 0.0)), (60, (15.0, 0.0))],
    )
    steady = ObjectSpec(size=(28, 56), start=(600, 40), velocity=(-1.0, 0.5), texture_seed=1)
    return ScenarioSpec(
        name="fast-mover",
        frame_size=(1280, 320),
        length=100,
        objects=[fast, steady],
        detector=DetectorModel(confidence_base=0.9, confidence_jitter=0.05, center_std=1.0, size_noise=0.03),
        seed=2,
        tracker_overrides={"lambda_min": 10, "lambda_max": 10},
    )


def _occlusion_cross() -> ScenarioSpec:
    walker = ObjectSpec(size=(30, 60), start=(40, 150), velocity=(3.0, 0.0), texture_seed=0)
    other = ObjectSpec(size=(30, 60), start=(480, 40), velocity=(-1.0, 0.5), texture_seed=1)
    return ScenarioSpec(
        name="occlusion-cross",
        frame_size=(640, 360),
        length=100,
        objects=[walker, other],
        occluders=[OccluderSpec((200, 140, 90, 80))],
        detector=NOISELESS,
        seed=3,
        tracker_overrides={"lambda_min": 10, "lambda_max": 10},
    )


def _crowd_growth() -> ScenarioSpec:
    objects = [
        ObjectSpec(size=(30, 60), start=(20, 20), texture_seed=0),
        ObjectSpec(size=(30, 60), start=(580, 20), texture_seed=1),
        ObjectSpec(size=(30, 60), start=(300, 400), texture_seed=2),
    ]
    anchors = [(60, 120), (380, 120), (60, 300), (380, 300)]
    seed = 3
    for g, (ax, ay) in enumerate(anchors):
        for m in range(4):
            objects.append(
                ObjectSpec(size=(30, 60), start=(ax + 8 * m, ay), texture_seed=seed, appear=30 + 60 * g)
            )
            seed += 1
    return ScenarioSpec(
        name="crowd-growth",
        frame_size=(640, 480),
        length=330,
        objects=objects,
        detector=NOISELESS,
        seed=4,
    )


def _confidence_flicker() -> ScenarioSpec:
    return ScenarioSpec(
        name="confidence-flicker",
        frame_size=(640, 360),
        length=100,
        objects=[
            ObjectSpec(size=(32, 64), start=(60, 60), velocity=(1.5, 0.5), texture_seed=0),
            ObjectSpec(size=(32, 64), start=(520, 60), velocity=(-1.5, 0.5), texture_seed=1, flicker=(10, 0.3)),
            ObjectSpec(size=(32, 64), start=(300, 250), velocity=(0.5, 0.0), texture_seed=2, confidence=0.35),
        ],
        detector=NOISELESS,
        seed=5,
        tracker_overrides={"lambda_min": 10, "lambda_max": 10},
    )


_SCENARIOS = {
    "two-steady": _two_steady,
    "fast-mover": _fast_mover,
    "occlusion-cross": _occlusion_cross,
    "crowd-growth": _crowd_growth,
    "confidence-flicker": _confidence_flicker,
}
ALIASES = {"S1": "two-steady", "S2": "fast-mover", "S3": "occlusion-cross", "S4": "crowd-growth", "S5": "confidence-flicker"}


def scripted_scenarios() -> dict[str, ScenarioSpec]:
    return {name: build() for name, build in _SCENARIOS.items()}


def get_scenario(name: str) -> ScenarioSpec:
    key = ALIASES.get(name, name)
    if key not in _SCENARIOS:
        known = ", ".join(sorted(_SCENARIOS))
        raise KeyError(f"unknown scenario '{name}' (known: {known})")
    return _SCENARIOS[key]()
