"""Frame-wise error rate, run-length segments, and the segment-level edit
distance with its max-count normalization."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Segment(NamedTuple):
    activity: int
    start: int
    length: int


def error_rate(pred, truth) -> float:
    """Fraction of frames whose predicted activity differs from the truth."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"label sequences must match: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty label sequence")
    return float(np.mean(pred != truth))


def to_segments(labels) -> list[Segment]:
    """Maximal runs of one activity, in order of appearance."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels must be a non-empty 1-d sequence")
    boundaries = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [labels.size]])
    return [Segment(int(labels[s]), int(s), int(e - s)) for s, e in zip(starts, ends)]


def _activity_string(seq) -> list:
    return [s.activity if isinstance(s, Segment) else s for s in seq]


def edit_distance(a, b) -> int:
    """Levenshtein distance between two activity strings (insertions,
    deletions and substitutions all cost 1). Accepts plain activity-id
    sequences or Segment lists, using only the activity of each segment."""
    a = _activity_string(a)
    b = _activity_string(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(
                prev[j] + 1,  # delete
                cur[j - 1] + 1,  # insert
                prev[j - 1] + (ca != cb),  # substitute
            )
        prev = cur
    return int(prev[len(b)])


def normalized_edit_distance(distances, truth_segment_counts) -> float:
    """Mean edit distance scaled by the largest ground-truth segment count in
    the evaluated set, as a percentage.

    The normalizer is shared across the set (not per trial) so short trials
    cannot dominate the score.
    """
    distances = np.asarray(distances, dtype=np.float64)
    counts = np.asarray(truth_segment_counts, dtype=np.float64)
    if distances.size == 0 or distances.shape != counts.shape:
        raise ValueError("need one ground-truth segment count per distance")
    if np.any(counts < 1):
        raise ValueError("segment counts must be at least 1")
    return float(distances.mean() / counts.max() * 100.0)
