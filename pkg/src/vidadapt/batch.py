"""Whole-video adaptation: scan, collect pseudo-labels, fine-tune once.

Phase 1 predicts every frame with the incoming model and assembles the
self-adapting dataset: every frame whose strict candidate map has positive
confidence contributes a `global` entry, and each fixed-length window
contributes the `local` map of its best-confidence frame unless that frame
already has a global entry. Phase 2 fine-tunes once, in insertion order.
Phase 3 re-predicts every frame with the adapted model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .model import TrainConfig, argmax_labels
from .selection import SelectionThresholds, WeakLabelSet, build_candidate_maps

GLOBAL = "global"
LOCAL = "local"


@dataclass
class DatasetEntry:
    frame: int  # 1-based
    labels: np.ndarray
    kind: str
    confidence: float


class SelfAdaptingDataset:
    """Ordered pseudo-label entries plus the set of frames added as global."""

    def __init__(self):
        self.entries: list[DatasetEntry] = []
        self._global_frames: set[int] = set()

    def __len__(self) -> int:
        return len(self.entries)

    def has_global(self, frame: int) -> bool:
        return frame in self._global_frames

    def add_global(self, frame: int, labels: np.ndarray, confidence: float) -> None:
        if self.has_global(frame):
            raise ContractViolation("frame %d already has a global entry" % frame)
        self.entries.append(DatasetEntry(frame, labels, GLOBAL, confidence))
        self._global_frames.add(frame)

    def add_local(self, frame: int, labels: np.ndarray, confidence: float) -> None:
        if self.has_global(frame):
            raise ContractViolation(
                "frame %d already has a global entry; local entry not allowed" % frame
            )
        self.entries.append(DatasetEntry(frame, labels, LOCAL, confidence))

    def report(self) -> dict:
        return {
            "entries": [
                {"frame": e.frame, "kind": e.kind, "confidence": e.confidence}
                for e in self.entries
            ]
        }


@dataclass
class WindowState:
    """Best permissive-map confidence seen in the current window."""

    window_length: int = 30
    best_confidence: float = 0.0
    best_frame: int | None = None
    best_local_map: np.ndarray | None = None

    def offer(self, frame: int, local_map: np.ndarray, confidence: float) -> None:
        if confidence > self.best_confidence:
            self.best_confidence = confidence
            self.best_frame = frame
            self.best_local_map = local_map

    def reset(self) -> None:
        self.best_confidence = 0.0


def flush_window(state: WindowState, dataset: SelfAdaptingDataset) -> bool:
    """Add the window's best local map unless its frame is already global.

    Returns True when an entry was added. Always resets the window's best
    confidence.
    """
    added = False
    if state.best_confidence > 0.0 and not dataset.has_global(state.best_frame):
        dataset.add_local(state.best_frame, state.best_local_map, state.best_confidence)
        added = True
    state.reset()
    return added


@dataclass
class BatchResult:
    segmenter: object
    labels: list[np.ndarray]
    baseline_labels: list[np.ndarray]
    dataset: SelfAdaptingDataset
    report: dict = field(default_factory=dict)


def run_batch(
    frames: list[np.ndarray],
    segmenter,
    weak: WeakLabelSet,
    thresholds: SelectionThresholds,
    train_config: TrainConfig,
    window_length: int = 30,
    flush_tail: bool = False,
) -> BatchResult:
    """Run the whole-video adaptation pass.

    Frames are 1-based for the window arithmetic; a trailing partial window
    is only flushed when `flush_tail` is set. An empty dataset leaves the
    model untouched and returns the baseline label maps as the output.
    """
    if not frames:
        raise ContractViolation("video must contain at least one frame")
    dataset = SelfAdaptingDataset()
    state = WindowState(window_length=window_length)
    baseline: list[np.ndarray] = []

    volumes = segmenter.predict_sequence(frames)
    for f, vol in enumerate(volumes, start=1):
        labels = argmax_labels(vol)
        baseline.append(labels)
        cand = build_candidate_maps(vol, labels, weak, thresholds)
        if cand.global_confidence > 0.0:
            dataset.add_global(f, cand.global_map, cand.global_confidence)
        state.offer(f, cand.local_map, cand.local_confidence)
        if f % window_length == 0:
            flush_window(state, dataset)
    if flush_tail and len(frames) % window_length != 0:
        flush_window(state, dataset)

    if dataset.entries:
        pairs = [(frames[e.frame - 1], e.labels) for e in dataset.entries]
        adapted = segmenter.fine_tuned(pairs, train_config)
        final = [argmax_labels(v) for v in adapted.predict_sequence(frames)]
    else:
        adapted = segmenter
        final = [lbl.copy() for lbl in baseline]

    report = dataset.report()
    report["window_length"] = window_length
    report["flush_tail"] = flush_tail
    report["adapted"] = bool(dataset.entries)
    return BatchResult(
        segmenter=adapted,
        labels=final,
        baseline_labels=baseline,
        dataset=dataset,
        report=report,
    )
