"""Dataset I/O, morphological refinement, and per-class IoU evaluation.

File conventions: frames are RGB PNG or PPM named frame_%06d.png (1-based);
label maps are single-channel 8-bit PNG with 0 = background, 1..K-1 =
catalog classes, 255 = ignore; catalogs are plain text, one class name per
line, first line `background`. Ground truth may annotate any subset of
frames — whichever label files exist in the ground-truth directory.
"""

from __future__ import annotations

import io
import json
import os
import re
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, ContractViolation, EvaluationError
from .labels import IGNORE_LABEL, ClassCatalog

FRAME_PATTERN = re.compile(r"frame_(\d{6})\.(png|ppm)$")


def frame_filename(index: int, ext: str = "png") -> str:
    return "frame_%06d.%s" % (index, ext)


def atomic_write_bytes(path, blob: bytes) -> None:
    """Write via a temp file + rename so readers never see partial content."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ConfigurationError("cannot read frame %s: %s" % (path, exc)) from exc
    return arr / 255.0


def save_image(path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format=_format_for(path))
    atomic_write_bytes(path, buf.getvalue())


def load_label_map(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                img = img.convert("L")
            return np.asarray(img, dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise ConfigurationError("cannot read label map %s: %s" % (path, exc)) from exc


def save_label_map(path, labels: np.ndarray) -> None:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(
        buf, format=_format_for(path)
    )
    atomic_write_bytes(path, buf.getvalue())


def _format_for(path) -> str:
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".ppm":
        return "PPM"
    return "PNG"


def load_catalog(path) -> ClassCatalog:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            names = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise ConfigurationError("cannot read catalog %s: %s" % (path, exc)) from exc
    if not names or names[0] != "background":
        raise ConfigurationError(
            "catalog %s must start with a `background` line" % path
        )
    return ClassCatalog(tuple(names))


def save_catalog(path, catalog: ClassCatalog) -> None:
    atomic_write_bytes(path, ("\n".join(catalog.names) + "\n").encode("utf-8"))


def list_frame_files(directory) -> dict[int, str]:
    """Map 1-based frame index -> path for frame_%06d files in a directory."""
    try:
        entries = sorted(os.listdir(directory))
    except OSError as exc:
        raise ConfigurationError("cannot list %s: %s" % (directory, exc)) from exc
    out: dict[int, str] = {}
    for name in entries:
        m = FRAME_PATTERN.match(name)
        if m:
            out[int(m.group(1))] = os.path.join(directory, name)
    return out


def load_video_frames(directory) -> tuple[list[int], list[np.ndarray]]:
    """Load all frames from a directory; indices must start at 1, contiguous."""
    files = list_frame_files(directory)
    if not files:
        raise ConfigurationError("no frame_%%06d.png/ppm files in %s" % directory)
    indices = sorted(files)
    if indices[0] != 1 or indices[-1] != len(indices):
        raise ConfigurationError(
            "frames in %s must be numbered 1..N contiguously, found %d..%d (%d files)"
            % (directory, indices[0], indices[-1], len(indices))
        )
    return indices, [load_image(files[i]) for i in indices]


def load_ground_truth(directory) -> dict[int, np.ndarray]:
    files = list_frame_files(directory)
    if not files:
        raise ConfigurationError("no label files found in %s" % directory)
    return {idx: load_label_map(path) for idx, path in sorted(files.items())}


def save_label_sequence(directory, labels: list[np.ndarray]) -> None:
    os.makedirs(directory, exist_ok=True)
    for i, lbl in enumerate(labels, start=1):
        save_label_map(os.path.join(directory, frame_filename(i)), lbl)


def write_json(path, payload: dict) -> None:
    atomic_write_bytes(path, (json.dumps(payload, indent=2) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# Morphological refinement and IoU
# ---------------------------------------------------------------------------


def _binary_closing(mask: np.ndarray, radius: int) -> np.ndarray:
    # Pad by the radius so the result equals the unbounded-plane closing
    # restricted to the image; that keeps closing extensive and idempotent.
    se = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    padded = np.pad(mask, radius, mode="constant", constant_values=False)
    closed = ndimage.binary_erosion(
        ndimage.binary_dilation(padded, structure=se), structure=se
    )
    return closed[radius:-radius, radius:-radius]


def refine_morphological(labels: np.ndarray, radius: int = 1) -> np.ndarray:
    """Per-class binary closing with a (2*radius+1) square element.

    Classes are processed in ascending index order and later classes
    overwrite earlier ones at contested pixels. Radius 0 is the identity.
    """
    if radius < 0:
        raise ContractViolation("radius must be >= 0")
    labels = np.asarray(labels, dtype=np.uint8)
    if radius == 0:
        return labels.copy()
    out = labels.copy()
    for class_id in np.unique(labels):
        if class_id == 0 or class_id == IGNORE_LABEL:
            continue
        out[_binary_closing(labels == class_id, radius)] = class_id
    return out


def class_iou(pred: np.ndarray, gt: np.ndarray, class_id: int) -> float:
    """Intersection-over-union of one class; gt IGNORE pixels are excluded."""
    inter, union = _class_counts(pred, gt, class_id)
    if union == 0:
        return 1.0
    return inter / union


def _class_counts(pred: np.ndarray, gt: np.ndarray, class_id: int) -> tuple[int, int]:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractViolation(
            "prediction %r does not match ground truth %r" % (pred.shape, gt.shape)
        )
    scored = gt != IGNORE_LABEL
    p = scored & (pred == class_id)
    g = scored & (gt == class_id)
    return int((p & g).sum()), int((p | g).sum())


@dataclass
class IoUReport:
    per_class: dict[str, float]
    mean: float

    def to_dict(self) -> dict:
        return {"per_class": self.per_class, "mean": self.mean}


def evaluate_video(
    preds: dict[int, np.ndarray],
    gt: dict[int, np.ndarray],
    catalog: ClassCatalog,
) -> IoUReport:
    """Pooled per-class IoU over the annotated frames.

    Intersections and unions are summed across frames before dividing, and
    the mean covers the object classes that actually appear in the ground
    truth. A missing prediction for an annotated frame is an error.
    """
    if not gt:
        raise EvaluationError("ground truth annotates no frames")
    present: set[int] = set()
    for frame, gt_map in gt.items():
        if frame not in preds:
            raise EvaluationError("no prediction for annotated frame %d" % frame)
        values = np.unique(gt_map)
        present.update(
            int(v) for v in values if v != 0 and v != IGNORE_LABEL
        )
    if not present:
        raise EvaluationError("ground truth contains no object-class pixels")
    out_of_range = [c for c in present if c >= catalog.num_classes]
    if out_of_range:
        raise EvaluationError(
            "ground truth uses class ids %r outside the %d-class catalog"
            % (sorted(out_of_range), catalog.num_classes)
        )

    per_class: dict[str, float] = {}
    total = 0.0
    for class_id in sorted(present):
        inter = 0
        union = 0
        for frame, gt_map in gt.items():
            i, u = _class_counts(preds[frame], gt_map, class_id)
            inter += i
            union += u
        iou = 1.0 if union == 0 else inter / union
        per_class[catalog.names[class_id]] = iou
        total += iou
    return IoUReport(per_class=per_class, mean=total / len(per_class))
