"""Flow-consistent fusion of the batch and online label sequences.

For every frame the fused output picks one of the two candidate label maps.
Consecutive picks are scored by the same-class object overlap between the
flow-warped earlier map and the later map, plus a small bonus when both
picks come from the batch sequence; the maximizing assignment over the
whole video is found exactly by a two-state dynamic program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .flow import estimate_flow, warp_labels
from .labels import IGNORE_LABEL

BATCH = 0
ONLINE = 1
CHOICE_NAMES = ("batch", "online")


@dataclass(frozen=True)
class CombineConfig:
    """Fusion settings: transition bonus and where flows come from.

    `flow_source` is either "builtin" (block-matching estimator) or a
    directory containing flow_%06d.flo files, one per consecutive pair,
    numbered by the earlier frame (1-based).
    """

    epsilon: float = 0.02
    flow_source: str = "builtin"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")


@dataclass
class SelectionSequence:
    choices: list[int]  # BATCH or ONLINE per frame
    objective: float

    def names(self) -> list[str]:
        return [CHOICE_NAMES[c] for c in self.choices]


def object_overlap(warped: np.ndarray, nxt: np.ndarray) -> float:
    """Same-class object-pixel IoU between a warped map and the next map.

    Pixels where either map is IGNORE are excluded. An empty union (no
    object pixels on either side) counts as perfect consistency, 1.0.
    """
    warped = np.asarray(warped)
    nxt = np.asarray(nxt)
    if warped.shape != nxt.shape:
        raise ContractViolation("label maps must share a shape")
    considered = (warped != IGNORE_LABEL) & (nxt != IGNORE_LABEL)
    w_obj = considered & (warped != 0)
    n_obj = considered & (nxt != 0)
    union = w_obj | n_obj
    if not union.any():
        return 1.0
    agree = w_obj & n_obj & (warped == nxt)
    return float(agree.sum() / union.sum())


def consistency_score(choice_f: int, choice_next: int, o: float, config: CombineConfig) -> float:
    """Transition score: the overlap, plus epsilon for batch-to-batch."""
    if choice_f == BATCH and choice_next == BATCH:
        return o + config.epsilon
    return o


def overlap_tables(
    batch_seq: list[np.ndarray],
    online_seq: list[np.ndarray],
    flows: list[np.ndarray],
) -> np.ndarray:
    """(N-1, 2, 2) overlaps: table[f, a, b] warps choice `a` of frame f onto
    frame f+1 and compares with choice `b`."""
    n = len(batch_seq)
    if len(online_seq) != n:
        raise ContractViolation("batch and online sequences must have equal length")
    if len(flows) != n - 1:
        raise ContractViolation("need one flow field per consecutive frame pair")
    tables = np.zeros((n - 1, 2, 2), dtype=np.float64)
    for f in range(n - 1):
        warped = (
            warp_labels(batch_seq[f], flows[f]),
            warp_labels(online_seq[f], flows[f]),
        )
        nxt = (batch_seq[f + 1], online_seq[f + 1])
        for a in (BATCH, ONLINE):
            for b in (BATCH, ONLINE):
                tables[f, a, b] = object_overlap(warped[a], nxt[b])
    return tables


def select_from_tables(tables: np.ndarray, epsilon: float) -> SelectionSequence:
    """Exact maximizer of summed transition scores via a two-state DP.

    Ties prefer the batch choice at every step. A single frame (empty
    tables) selects batch with objective 0.
    """
    tables = np.asarray(tables, dtype=np.float64)
    n = len(tables) + 1
    if n == 1:
        return SelectionSequence([BATCH], 0.0)
    config = CombineConfig(epsilon=epsilon)
    score = [0.0, 0.0]
    back: list[tuple[int, int]] = []
    for f in range(n - 1):
        nxt_score = [0.0, 0.0]
        nxt_back = [BATCH, BATCH]
        for b in (BATCH, ONLINE):
            best = None
            best_prev = BATCH
            for a in (BATCH, ONLINE):
                cand = score[a] + consistency_score(a, b, tables[f, a, b], config)
                if best is None or cand > best:
                    best = cand
                    best_prev = a
            nxt_score[b] = best
            nxt_back[b] = best_prev
        back.append(tuple(nxt_back))
        score = nxt_score

    last = BATCH if score[BATCH] >= score[ONLINE] else ONLINE
    choices = [last]
    for f in range(n - 2, -1, -1):
        choices.append(back[f][choices[-1]])
    choices.reverse()
    return SelectionSequence(choices, float(max(score)))


def sequence_objective(choices: list[int], tables: np.ndarray, epsilon: float) -> float:
    """Recompute the summed transition score of an assignment."""
    config = CombineConfig(epsilon=epsilon)
    total = 0.0
    for f in range(len(tables)):
        total += consistency_score(
            choices[f], choices[f + 1], float(tables[f, choices[f], choices[f + 1]]), config
        )
    return total


def select_models(
    batch_seq: list[np.ndarray],
    online_seq: list[np.ndarray],
    frames: list[np.ndarray] | None,
    config: CombineConfig,
    flows: list[np.ndarray] | None = None,
) -> tuple[SelectionSequence, list[np.ndarray]]:
    """Fuse the two sequences; returns the selection and the fused maps.

    Flows may be passed precomputed; otherwise they are estimated from
    `frames` with the built-in estimator.
    """
    if not batch_seq or len(batch_seq) != len(online_seq):
        raise ContractViolation("need equal-length nonempty label sequences")
    if flows is None:
        if frames is None:
            raise ContractViolation("either frames or precomputed flows are required")
        flows = [
            estimate_flow(frames[f], frames[f + 1]) for f in range(len(frames) - 1)
        ]
    tables = overlap_tables(batch_seq, online_seq, flows)
    selection = select_from_tables(tables, config.epsilon)
    fused = [
        (batch_seq[f] if c == BATCH else online_seq[f]).copy()
        for f, c in enumerate(selection.choices)
    ]
    return selection, fused
