import numpy as np
import pytest

from vidadapt.batch import SelfAdaptingDataset, WindowState, flush_window, run_batch
from vidadapt.errors import ContractViolation
from vidadapt.model import TrainConfig
from vidadapt.selection import SelectionThresholds, WeakLabelSet

from .oracles import ScriptedSegmenter, replay_batch, scripted_video

THR = SelectionThresholds()
WEAK = WeakLabelSet(frozenset({1, 2}))


def blob_volume(p_obj, class_id=1, bg=0.9, shape=(6, 6), k=3):
    """One 2x2 blob of `class_id` at fixed position with probability p_obj."""
    vol = np.empty(shape + (k,))
    vol[:, :] = [(1.0 - bg) / (k - 1)] * k
    vol[:, :, 0] = bg
    rest = (1.0 - p_obj) / (k - 1)
    vol[1:3, 1:3] = rest
    vol[1:3, 1:3, class_id] = p_obj
    return vol


def bg_only_volume(bg=0.95, shape=(6, 6), k=3):
    vol = np.empty(shape + (k,))
    vol[:, :] = [(1.0 - bg) / (k - 1)] * k
    vol[:, :, 0] = bg
    return vol


def dummy_frames(n, shape=(6, 6)):
    return [np.zeros(shape + (3,)) for _ in range(n)]


def entries_of(result):
    return [(e.frame, e.kind) for e in result.dataset.entries]


def run_scripted(volumes, window_length, weak=WEAK, flush_tail=False):
    seg = ScriptedSegmenter(volumes)
    return run_batch(
        dummy_frames(len(volumes), volumes[0].shape[:2]),
        seg,
        weak,
        THR,
        TrainConfig(),
        window_length=window_length,
        flush_tail=flush_tail,
    )


def test_every_frame_globally_confident_yields_only_global_entries():
    volumes = [blob_volume(0.9) for _ in range(8)]
    result = run_scripted(volumes, window_length=4)
    assert entries_of(result) == [(f, "global") for f in range(1, 9)]


def test_empty_content_keeps_baseline_and_model():
    volumes = [bg_only_volume() for _ in range(6)]
    seg = ScriptedSegmenter(volumes)
    result = run_batch(
        dummy_frames(6), seg, WEAK, THR, TrainConfig(), window_length=3
    )
    assert len(result.dataset) == 0
    assert result.segmenter is seg
    assert seg.fine_tune_calls == []
    for out, base in zip(result.labels, result.baseline_labels):
        np.testing.assert_array_equal(out, base)


def test_one_global_per_window_coinciding_with_local_best():
    # 9 frames, window 3; frames 2, 5, 8 globally confident, others empty.
    volumes = []
    for f in range(1, 10):
        volumes.append(blob_volume(0.9) if f % 3 == 2 else bg_only_volume())
    result = run_scripted(volumes, window_length=3)
    assert entries_of(result) == [(2, "global"), (5, "global"), (8, "global")]


def test_ninety_frames_one_global_per_thirty_frame_window():
    volumes = []
    for f in range(1, 91):
        volumes.append(blob_volume(0.9) if f in (15, 45, 75) else bg_only_volume())
    result = run_scripted(volumes, window_length=30)
    assert entries_of(result) == [(15, "global"), (45, "global"), (75, "global")]


def test_window_best_below_threshold_becomes_local_entry():
    # Window of 3 frames, best local confidence 0.6 at frame 2.
    volumes = [blob_volume(0.5), blob_volume(0.6), bg_only_volume()]
    result = run_scripted(volumes, window_length=3)
    assert entries_of(result) == [(2, "local")]
    assert result.dataset.entries[0].confidence == pytest.approx(0.6)


def test_local_tie_keeps_earliest_frame():
    volumes = [blob_volume(0.6), blob_volume(0.6), bg_only_volume()]
    result = run_scripted(volumes, window_length=3)
    assert entries_of(result) == [(1, "local")]


def test_trailing_partial_window_not_flushed_by_default():
    volumes = [bg_only_volume(), blob_volume(0.5)]  # no window boundary hit
    result = run_scripted(volumes, window_length=3)
    assert entries_of(result) == []
    flushed = run_scripted(volumes, window_length=3, flush_tail=True)
    assert entries_of(flushed) == [(2, "local")]


def test_flush_window_unit_behaviors():
    dataset = SelfAdaptingDataset()
    state = WindowState(window_length=3)

    # No candidate: nothing added, reset anyway.
    assert flush_window(state, dataset) is False

    # Best frame already contributed a global entry: no local entry.
    dataset.add_global(4, np.zeros((2, 2), np.uint8), 0.9)
    state.offer(4, np.zeros((2, 2), np.uint8), 0.8)
    assert flush_window(state, dataset) is False
    assert state.best_confidence == 0.0

    # Regular local addition.
    state.offer(5, np.ones((2, 2), np.uint8), 0.6)
    assert flush_window(state, dataset) is True
    assert [(e.frame, e.kind) for e in dataset.entries] == [(4, "global"), (5, "local")]


def test_duplicate_entries_rejected():
    dataset = SelfAdaptingDataset()
    dataset.add_global(1, np.zeros((2, 2), np.uint8), 0.9)
    with pytest.raises(ContractViolation):
        dataset.add_global(1, np.zeros((2, 2), np.uint8), 0.8)
    with pytest.raises(ContractViolation):
        dataset.add_local(1, np.zeros((2, 2), np.uint8), 0.8)


def test_empty_video_rejected():
    with pytest.raises(ContractViolation):
        run_batch([], ScriptedSegmenter([]), WEAK, THR, TrainConfig())


def test_selection_matches_reference_replay_on_random_scripts():
    rng = np.random.default_rng(31)
    for trial in range(15):
        n = int(rng.integers(5, 40))
        window = int(rng.integers(2, 8))
        volumes = scripted_video(rng, n)
        flush_tail = bool(rng.integers(0, 2))
        result = run_scripted(volumes, window_length=window, flush_tail=flush_tail)
        expected = replay_batch(
            volumes, {1, 2}, False, THR.t_o, THR.t_b, window, flush_tail
        )
        got = [
            (e.frame, e.kind, e.confidence) for e in result.dataset.entries
        ]
        assert got == expected


def test_dataset_report_lists_choices():
    volumes = [blob_volume(0.9), blob_volume(0.5), bg_only_volume()]
    result = run_scripted(volumes, window_length=3)
    report = result.report
    assert report["window_length"] == 3
    assert report["adapted"] is True
    assert report["entries"][0] == {
        "frame": 1,
        "kind": "global",
        "confidence": pytest.approx(0.9),
    }


def test_training_uses_insertion_order_and_original_predictions():
    # Window 1 ends with its best frame already global (no local entry);
    # window 2 contributes a local entry. One fine-tune call total.
    volumes = [
        blob_volume(0.9),
        blob_volume(0.5),
        bg_only_volume(),
        blob_volume(0.6),
        bg_only_volume(),
        bg_only_volume(),
    ]
    seg = ScriptedSegmenter(volumes)
    result = run_batch(dummy_frames(6), seg, WEAK, THR, TrainConfig(), window_length=3)
    assert entries_of(result) == [(1, "global"), (4, "local")]
    assert len(seg.fine_tune_calls) == 1
    assert len(seg.fine_tune_calls[0]) == 2
