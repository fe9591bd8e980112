"""Deterministic synthetic videos with dense ground truth.

Scenes place moving discs or rectangles over a seeded static background
texture. Scheduled ambiguity ranges blend an object's color toward a
designated confusable class so that a color-driven model mislabels or
doubts those frames while the ground truth keeps the true class — the
failure mode the adaptation pass is meant to repair. A motion-blur option
smears the object along its displacement instead.

Also provides `pretrain_reference_model`, which fits the linear reference
classifier to a scene's class colors on randomized layouts so synthetic
experiments start from a sensible "pretrained" model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SceneSpecError
from .labels import ClassCatalog
from .model import ModelParameters, TrainConfig, sgd_fine_tune

Color = tuple[float, float, float]


@dataclass(frozen=True)
class AmbiguityRange:
    """Frames [start, end] (1-based, inclusive) where the object's color is
    blended toward class `toward` with factor `blend`."""

    start: int
    end: int
    blend: float
    toward: int


@dataclass
class ObjectSpec:
    class_id: int
    shape: str = "disc"  # "disc" or "rectangle"
    size: tuple[float, float] = (10.0, 10.0)  # (radius, radius) for discs
    center: tuple[float, float] = (32.0, 32.0)  # position at frame 1
    velocity: tuple[float, float] = (0.0, 0.0)  # px per frame
    wobble_amplitude: tuple[float, float] = (0.0, 0.0)
    wobble_period: float = 0.0  # frames; 0 disables the sinusoidal term
    wobble_phase: float = 0.0
    motion_blur: int = 0  # box-blur samples along the displacement
    ambiguities: list[AmbiguityRange] = field(default_factory=list)

    def position(self, frame: int) -> tuple[float, float]:
        t = frame - 1
        cx = self.center[0] + self.velocity[0] * t
        cy = self.center[1] + self.velocity[1] * t
        if self.wobble_period > 0:
            angle = 2.0 * math.pi * t / self.wobble_period + self.wobble_phase
            cx += self.wobble_amplitude[0] * math.sin(angle)
            cy += self.wobble_amplitude[1] * math.sin(angle)
        return cx, cy


@dataclass
class SceneSpec:
    class_names: tuple[str, ...]
    class_colors: dict[int, Color]
    width: int = 96
    height: int = 96
    frame_count: int = 60
    background_color: Color = (0.45, 0.5, 0.4)
    texture_seed: int = 7
    texture_amplitude: float = 0.05
    noise_sigma: float = 0.01
    objects: list[ObjectSpec] = field(default_factory=list)

    @property
    def catalog(self) -> ClassCatalog:
        return ClassCatalog(tuple(self.class_names))

    def validate(self) -> None:
        catalog = self.catalog  # raises on a bad name list
        if self.frame_count < 1:
            raise SceneSpecError("frame_count must be >= 1")
        if self.width < 8 or self.height < 8:
            raise SceneSpecError("scene must be at least 8x8 pixels")
        if not 0.0 <= self.texture_amplitude <= 0.5:
            raise SceneSpecError("texture_amplitude must lie in [0, 0.5]")
        if self.noise_sigma < 0:
            raise SceneSpecError("noise_sigma must be >= 0")
        for class_id in range(1, catalog.num_classes):
            if class_id not in self.class_colors:
                raise SceneSpecError("class %d has no color assigned" % class_id)
        for obj in self.objects:
            if obj.class_id < 1 or obj.class_id >= catalog.num_classes:
                raise SceneSpecError("object class %d not in catalog" % obj.class_id)
            if obj.shape not in ("disc", "rectangle"):
                raise SceneSpecError("unknown shape %r" % obj.shape)
            if obj.motion_blur < 0:
                raise SceneSpecError("motion_blur must be >= 0")
            for amb in obj.ambiguities:
                if not 0.0 <= amb.blend <= 1.0:
                    raise SceneSpecError("ambiguity blend must lie in [0, 1]")
                if amb.toward not in self.class_colors:
                    raise SceneSpecError(
                        "ambiguity points to class %d with no color" % amb.toward
                    )
                if amb.start < 1 or amb.end < amb.start:
                    raise SceneSpecError("ambiguity range %r is empty" % ((amb.start, amb.end),))
            hx, hy = obj.size
            for f in range(1, self.frame_count + 1):
                cx, cy = obj.position(f)
                if (
                    cx - hx < 0
                    or cx + hx > self.width - 1
                    or cy - hy < 0
                    or cy + hy > self.height - 1
                ):
                    raise SceneSpecError(
                        "object of class %d leaves the frame at frame %d"
                        % (obj.class_id, f)
                    )


def _object_mask(
    obj: ObjectSpec, cx: float, cy: float, width: int, height: int
) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    hx, hy = obj.size
    if obj.shape == "disc":
        return ((xx - cx) / hx) ** 2 + ((yy - cy) / hy) ** 2 <= 1.0
    return (np.abs(xx - cx) <= hx) & (np.abs(yy - cy) <= hy)


def _object_color(obj: ObjectSpec, frame: int, colors: dict[int, Color]) -> np.ndarray:
    base = np.asarray(colors[obj.class_id], dtype=np.float64)
    for amb in obj.ambiguities:
        if amb.start <= frame <= amb.end:
            toward = np.asarray(colors[amb.toward], dtype=np.float64)
            return (1.0 - amb.blend) * base + amb.blend * toward
    return base


def background_texture(spec: SceneSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.texture_seed)
    base = np.asarray(spec.background_color, dtype=np.float64)
    noise = spec.texture_amplitude * (2.0 * rng.random((spec.height, spec.width, 1)) - 1.0)
    return np.clip(base + noise, 0.0, 1.0)


def render_frame(
    spec: SceneSpec, frame: int, texture: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Render one frame and its ground-truth label map."""
    img = texture.copy()
    gt = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for obj in spec.objects:
        cx, cy = obj.position(frame)
        crisp = _object_mask(obj, cx, cy, spec.width, spec.height)
        color = _object_color(obj, frame, spec.class_colors)
        if obj.motion_blur > 1:
            prev = obj.position(frame - 1) if frame > 1 else (
                cx - obj.velocity[0],
                cy - obj.velocity[1],
            )
            dx, dy = cx - prev[0], cy - prev[1]
            alpha = np.zeros((spec.height, spec.width), dtype=np.float64)
            for k in range(obj.motion_blur):
                t = k / obj.motion_blur
                alpha += _object_mask(
                    obj, cx - t * dx, cy - t * dy, spec.width, spec.height
                )
            alpha /= obj.motion_blur
        else:
            alpha = crisp.astype(np.float64)
        img = img * (1.0 - alpha[:, :, None]) + color[None, None, :] * alpha[:, :, None]
        gt[crisp] = obj.class_id
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    return np.clip(img, 0.0, 1.0), gt


def generate_video(
    spec: SceneSpec, seed: int
) -> tuple[list[np.ndarray], dict[int, np.ndarray]]:
    """Render all frames plus dense ground truth, deterministically.

    The background texture depends only on the spec's texture seed; the
    per-frame sensor noise is drawn from `seed`. Ambiguity blending alters
    appearance only — ground truth always carries the true class.
    """
    spec.validate()
    texture = background_texture(spec)
    rng = np.random.default_rng(seed)
    frames: list[np.ndarray] = []
    gts: dict[int, np.ndarray] = {}
    for f in range(1, spec.frame_count + 1):
        img, gt = render_frame(spec, f, texture, rng)
        frames.append(img)
        gts[f] = gt
    return frames, gts


# ---------------------------------------------------------------------------
# JSON serialization of scene specs
# ---------------------------------------------------------------------------


def scene_to_dict(spec: SceneSpec) -> dict:
    return {
        "class_names": list(spec.class_names),
        "class_colors": {str(k): list(v) for k, v in spec.class_colors.items()},
        "width": spec.width,
        "height": spec.height,
        "frame_count": spec.frame_count,
        "background_color": list(spec.background_color),
        "texture_seed": spec.texture_seed,
        "texture_amplitude": spec.texture_amplitude,
        "noise_sigma": spec.noise_sigma,
        "objects": [
            {
                "class_id": o.class_id,
                "shape": o.shape,
                "size": list(o.size),
                "center": list(o.center),
                "velocity": list(o.velocity),
                "wobble_amplitude": list(o.wobble_amplitude),
                "wobble_period": o.wobble_period,
                "wobble_phase": o.wobble_phase,
                "motion_blur": o.motion_blur,
                "ambiguities": [
                    {
                        "start": a.start,
                        "end": a.end,
                        "blend": a.blend,
                        "toward": a.toward,
                    }
                    for a in o.ambiguities
                ],
            }
            for o in spec.objects
        ],
    }


def scene_from_dict(data: dict) -> SceneSpec:
    try:
        objects = [
            ObjectSpec(
                class_id=o["class_id"],
                shape=o.get("shape", "disc"),
                size=tuple(o.get("size", (10.0, 10.0))),
                center=tuple(o.get("center", (32.0, 32.0))),
                velocity=tuple(o.get("velocity", (0.0, 0.0))),
                wobble_amplitude=tuple(o.get("wobble_amplitude", (0.0, 0.0))),
                wobble_period=o.get("wobble_period", 0.0),
                wobble_phase=o.get("wobble_phase", 0.0),
                motion_blur=o.get("motion_blur", 0),
                ambiguities=[
                    AmbiguityRange(a["start"], a["end"], a["blend"], a["toward"])
                    for a in o.get("ambiguities", [])
                ],
            )
            for o in data.get("objects", [])
        ]
        return SceneSpec(
            class_names=tuple(data["class_names"]),
            class_colors={int(k): tuple(v) for k, v in data["class_colors"].items()},
            width=data.get("width", 96),
            height=data.get("height", 96),
            frame_count=data.get("frame_count", 60),
            background_color=tuple(data.get("background_color", (0.45, 0.5, 0.4))),
            texture_seed=data.get("texture_seed", 7),
            texture_amplitude=data.get("texture_amplitude", 0.05),
            noise_sigma=data.get("noise_sigma", 0.01),
            objects=objects,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneSpecError("malformed scene spec: %s" % exc) from exc


def load_scene(path) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def save_scene(path, spec: SceneSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(spec), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Scene presets and reference-model pretraining
# ---------------------------------------------------------------------------


def default_scene(
    frame_count: int = 60,
    width: int = 96,
    height: int = 96,
    ambiguous: tuple[int, int] | None = (21, 40),
    blend: float = 0.6,
    noise_sigma: float = 0.01,
) -> SceneSpec:
    """An orange `fox` disc drifting over a muted olive background; during
    the ambiguous range its color blends toward the `jay` class (magenta).

    The two object colors sit close together and far from the background,
    so blended frames waver between the object classes instead of fading
    into confident background.
    """
    travel = max(frame_count - 1, 1)
    start_x = width * 0.25
    vx = (width * 0.5) / travel
    obj = ObjectSpec(
        class_id=1,
        shape="disc",
        size=(width * 0.12, width * 0.12),
        center=(start_x, height * 0.5),
        velocity=(vx, 0.0),
        wobble_amplitude=(0.0, height * 0.06),
        wobble_period=max(frame_count / 2.5, 1.0),
        ambiguities=(
            [AmbiguityRange(ambiguous[0], ambiguous[1], blend, 2)] if ambiguous else []
        ),
    )
    return SceneSpec(
        class_names=("background", "fox", "jay"),
        class_colors={1: (0.9, 0.45, 0.1), 2: (0.75, 0.05, 0.65)},
        width=width,
        height=height,
        frame_count=frame_count,
        noise_sigma=noise_sigma,
        objects=[obj],
    )


PRETRAIN_CONFIG = TrainConfig(
    learning_rate=0.25,
    momentum=0.9,
    weight_decay=1e-4,
    iterations=None,
    pixel_subsample=2048,
)


def pretrain_reference_model(
    spec: SceneSpec,
    seed: int = 0,
    samples_per_class: int = 8,
    epochs: int = 4,
    config: TrainConfig = PRETRAIN_CONFIG,
) -> ModelParameters:
    """Fit the linear classifier to the scene's class colors.

    Training layouts place one object of each class at seeded random
    positions over fresh background textures, always at base colors (no
    ambiguity), so the model learns the color prototypes without binding to
    any particular location. The result is the frozen "pretrained" model
    that synthetic experiments adapt from.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    catalog = spec.catalog
    size = 64
    dataset = []
    for _ in range(samples_per_class * len(catalog.object_classes())):
        sample = SceneSpec(
            class_names=spec.class_names,
            class_colors=spec.class_colors,
            width=size,
            height=size,
            frame_count=1,
            background_color=spec.background_color,
            texture_seed=int(rng.integers(0, 2**31)),
            texture_amplitude=spec.texture_amplitude,
            noise_sigma=spec.noise_sigma,
            objects=[],
        )
        for class_id in catalog.object_classes():
            radius = float(rng.uniform(6, 12))
            cx = float(rng.uniform(radius, size - 1 - radius))
            cy = float(rng.uniform(radius, size - 1 - radius))
            sample.objects.append(
                ObjectSpec(
                    class_id=class_id,
                    shape="disc" if rng.random() < 0.5 else "rectangle",
                    size=(radius, radius),
                    center=(cx, cy),
                )
            )
        texture = background_texture(sample)
        img, gt = render_frame(sample, 1, texture, rng)
        dataset.append((img, gt))

    train = TrainConfig(
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        iterations=epochs * len(dataset),
        pixel_subsample=config.pixel_subsample,
        seed=seed,
    )
    tuned = sgd_fine_tune(ModelParameters.zeros(catalog.num_classes), dataset, train)
    # Ship the artifact with a fresh (zero) momentum buffer: downstream
    # fine-tuning starts a new optimization run, it does not resume this one.
    return ModelParameters(tuned.weights)
