"""Confidence-based selection of pseudo-label candidate maps.

From one frame's probability volume and its argmax label map this module
extracts 8-connected object regions, scores them by mean class probability,
and builds two candidate pseudo-label maps: a strict map keeping only
regions above the object threshold, and a permissive map keeping every
region whose class passes the weak-label filter. Confidently-background
pixels are written into both maps last, overriding object labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, ContractViolation
from .labels import IGNORE_LABEL

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SelectionThresholds:
    """Confidence cutoffs: t_o for object regions, t_b for background pixels.

    Both comparisons are strict, so a threshold of 1.0 disables the rule.
    """

    t_o: float = 0.75
    t_b: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.t_o <= 1.0 and 0.0 < self.t_b <= 1.0):
            raise ConfigurationError(
                "thresholds must lie in (0, 1], got t_o=%r t_b=%r" % (self.t_o, self.t_b)
            )


@dataclass(frozen=True)
class WeakLabelSet:
    """Video-level set of object classes known to appear.

    With `unsupervised=True` every class passes the membership test.
    """

    classes: frozenset[int] = frozenset()
    unsupervised: bool = False

    def __post_init__(self):
        if any(c < 1 for c in self.classes):
            raise ConfigurationError("weak labels must be object classes (>= 1)")

    def allows(self, class_id: int) -> bool:
        return self.unsupervised or class_id in self.classes


@dataclass
class Region:
    """One 8-connected component of a single object class."""

    class_id: int
    pixels: np.ndarray  # flat indices, row-major
    confidence: float | None = None


@dataclass
class CandidateMaps:
    global_map: np.ndarray
    local_map: np.ndarray
    global_confidence: float
    local_confidence: float
    regions: list[Region] = field(default_factory=list)


def connected_components(labels: np.ndarray) -> list[Region]:
    """8-connected components per object class, in (class, raster) order."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ContractViolation("label map must be 2-D, got %r" % (labels.shape,))
    regions: list[Region] = []
    present = np.unique(labels)
    for class_id in present:
        if class_id == 0 or class_id == IGNORE_LABEL:
            continue
        mask = labels == class_id
        comp, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
        for comp_id in range(1, count + 1):
            pixels = np.flatnonzero(comp.ravel() == comp_id)
            regions.append(Region(int(class_id), pixels))
    return regions


def region_confidence(prob: np.ndarray, region: Region) -> float:
    """Mean probability, over the region's pixels, of the region's class."""
    flat = np.asarray(prob).reshape(-1, prob.shape[2])
    return float(flat[region.pixels, region.class_id].mean())


def map_confidence(prob: np.ndarray, labels: np.ndarray) -> float:
    """Mean assigned-class probability over object pixels; 0 if there are none."""
    prob = np.asarray(prob)
    labels = np.asarray(labels)
    if prob.shape[:2] != labels.shape:
        raise ContractViolation(
            "probability volume %r does not match labels %r"
            % (prob.shape[:2], labels.shape)
        )
    flat_t = labels.ravel()
    obj = np.flatnonzero((flat_t != 0) & (flat_t != IGNORE_LABEL))
    if obj.size == 0:
        return 0.0
    flat_p = prob.reshape(-1, prob.shape[2])
    return float(flat_p[obj, flat_t[obj].astype(np.intp)].mean())


def build_candidate_maps(
    prob: np.ndarray,
    labels: np.ndarray,
    weak: WeakLabelSet,
    thresholds: SelectionThresholds,
) -> CandidateMaps:
    """Construct the strict and permissive candidate maps for one frame.

    Both maps start all-IGNORE. Regions whose class fails the weak-label
    filter are skipped. Passing regions are written into the permissive map
    unconditionally and into the strict map only when their confidence
    exceeds t_o. Finally every pixel whose background probability exceeds
    t_b is set to background in both maps, overriding object labels.
    """
    prob = np.asarray(prob)
    labels = np.asarray(labels)
    if prob.shape[:2] != labels.shape:
        raise ContractViolation("probability volume does not match label map")
    global_map = np.full(labels.shape, IGNORE_LABEL, dtype=np.uint8)
    local_map = np.full(labels.shape, IGNORE_LABEL, dtype=np.uint8)

    kept: list[Region] = []
    for region in connected_components(labels):
        if not weak.allows(region.class_id):
            continue
        region.confidence = region_confidence(prob, region)
        local_map.ravel()[region.pixels] = region.class_id
        if region.confidence > thresholds.t_o:
            global_map.ravel()[region.pixels] = region.class_id
        kept.append(region)

    confident_bg = prob[:, :, 0] > thresholds.t_b
    global_map[confident_bg] = 0
    local_map[confident_bg] = 0

    return CandidateMaps(
        global_map=global_map,
        local_map=local_map,
        global_confidence=map_confidence(prob, global_map),
        local_confidence=map_confidence(prob, local_map),
        regions=kept,
    )
