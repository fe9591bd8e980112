"""Streaming adaptation with bounded long-term and short-term memories.

Each frame is predicted with the current model, so outputs are causal.
Strict candidate maps enter a bounded priority memory keyed by confidence;
at every short-period boundary the window's best permissive map enters a
bounded FIFO unless its frame currently sits in the priority memory. At
every update-period boundary the model is fine-tuned on the union of both
memories and replaced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .model import TrainConfig, argmax_labels
from .selection import SelectionThresholds, WeakLabelSet, build_candidate_maps


@dataclass
class MemoryEntry:
    frame: int
    labels: np.ndarray
    confidence: float
    order: int  # insertion counter, for deterministic tie handling


class OnlineMemory:
    """Bounded priority memory (long_term) plus bounded FIFO (short_term).

    long_term always holds the highest-confidence entries inserted so far;
    on a confidence tie the earlier insertion is kept. Capacities are
    enforced after insertion, so sizes never exceed the bounds.
    """

    def __init__(self, long_capacity: int = 10, short_capacity: int = 5):
        if long_capacity < 1 or short_capacity < 1:
            raise ContractViolation("memory capacities must be >= 1")
        self.long_capacity = long_capacity
        self.short_capacity = short_capacity
        self.long_term: list[MemoryEntry] = []
        self.short_term: list[MemoryEntry] = []
        self._counter = 0

    def _next_order(self) -> int:
        self._counter += 1
        return self._counter

    def in_long_term(self, frame: int) -> bool:
        return any(e.frame == frame for e in self.long_term)

    def insert_global(self, frame: int, labels: np.ndarray, confidence: float) -> None:
        if confidence <= 0.0:
            raise ContractViolation("global entries require positive confidence")
        self.long_term.append(
            MemoryEntry(frame, labels, confidence, self._next_order())
        )
        if len(self.long_term) > self.long_capacity:
            # Evict the minimum confidence; among ties the newest insertion.
            victim = min(self.long_term, key=lambda e: (e.confidence, -e.order))
            self.long_term.remove(victim)

    def insert_local(self, frame: int, labels: np.ndarray, confidence: float) -> bool:
        """FIFO insert; skipped when the frame currently sits in long_term."""
        if self.in_long_term(frame):
            return False
        self.short_term.append(
            MemoryEntry(frame, labels, confidence, self._next_order())
        )
        if len(self.short_term) > self.short_capacity:
            self.short_term.pop(0)
        return True

    def training_entries(self) -> list[MemoryEntry]:
        """Union for fine-tuning: long_term then short_term, insertion order."""
        return sorted(self.long_term, key=lambda e: e.order) + list(self.short_term)

    def snapshot(self) -> dict:
        return {
            "long_term": [
                {"frame": e.frame, "confidence": e.confidence}
                for e in sorted(self.long_term, key=lambda e: e.order)
            ],
            "short_term": [
                {"frame": e.frame, "confidence": e.confidence} for e in self.short_term
            ],
        }


@dataclass
class OnlineResult:
    segmenter: object
    labels: list[np.ndarray]
    memory: OnlineMemory
    report: dict = field(default_factory=dict)


def run_online(
    frames: list[np.ndarray],
    segmenter,
    weak: WeakLabelSet,
    thresholds: SelectionThresholds,
    train_config: TrainConfig,
    long_capacity: int = 10,
    short_capacity: int = 5,
    update_period: int = 30,
    local_period: int | None = None,
) -> OnlineResult:
    """Run the streaming adaptation pass and return as-you-go label maps.

    `local_period` defaults to `short_capacity`, which doubles as the
    window length for picking locally-best frames; it is overridable so the
    batch/online structural-equivalence tests can align the two variants.
    """
    if not frames:
        raise ContractViolation("video must contain at least one frame")
    if local_period is None:
        local_period = short_capacity
    memory = OnlineMemory(long_capacity, short_capacity)
    outputs: list[np.ndarray] = []
    boundaries: list[dict] = []
    updates: list[dict] = []
    best_confidence = 0.0
    best_frame: int | None = None
    best_local_map: np.ndarray | None = None

    current = segmenter
    for f, image in enumerate(frames, start=1):
        vol = current.predict(image)
        labels = argmax_labels(vol)
        outputs.append(labels)
        cand = build_candidate_maps(vol, labels, weak, thresholds)
        if cand.global_confidence > 0.0:
            memory.insert_global(f, cand.global_map, cand.global_confidence)
        if cand.local_confidence > best_confidence:
            best_confidence = cand.local_confidence
            best_frame = f
            best_local_map = cand.local_map
        if f % local_period == 0:
            if best_confidence > 0.0:
                memory.insert_local(best_frame, best_local_map, best_confidence)
            best_confidence = 0.0
            boundaries.append({"frame": f, **memory.snapshot()})
        if f % update_period == 0:
            entries = memory.training_entries()
            if entries:
                pairs = [(frames[e.frame - 1], e.labels) for e in entries]
                current = current.fine_tuned(pairs, train_config)
            updates.append(
                {
                    "frame": f,
                    "trained_on": [
                        {"frame": e.frame, "confidence": e.confidence} for e in entries
                    ],
                    **memory.snapshot(),
                }
            )

    report = {
        "boundaries": boundaries,
        "updates": updates,
        "long_capacity": long_capacity,
        "short_capacity": short_capacity,
        "update_period": update_period,
        "local_period": local_period,
    }
    return OnlineResult(segmenter=current, labels=outputs, memory=memory, report=report)
