from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SegmentList:
    """Half-open segments ``[start, end)`` that partition ``[0, length)``."""

    length: int
    boundaries: np.ndarray

    @property
    def segments(self) -> list[tuple[int, int]]:
        edges = [0, *self.boundaries.tolist(), self.length]
        return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]

    @property
    def indicators(self) -> np.ndarray:
        b = np.zeros(self.length, dtype=np.int64)
        b[self.boundaries] = 1
        return b

    def __len__(self) -> int:
        return len(self.boundaries) + 1


def boundaries_from_probs(p: np.ndarray, threshold: float = 0.6, delta: int = 3) -> np.ndarray:
    """Threshold, then collapse runs of indicators whose gaps are at most ``delta``
    onto their highest-probability index. Index 0 never opens a new segment."""
    p = np.asarray(p, dtype=np.float64)
    hits = np.flatnonzero(p >= threshold)
    out: list[int] = []
    group: list[int] = []
    for i in hits:
        if group and i - group[-1] > delta:
            out.append(max(group, key=lambda j: (p[j], -j)))
            group = []
        group.append(int(i))
    if group:
        out.append(max(group, key=lambda j: (p[j], -j)))
    return np.array([b for b in out if b > 0], dtype=np.int64)


def segment_probs(p: np.ndarray, threshold: float = 0.6, delta: int = 3) -> SegmentList:
    return SegmentList(len(p), boundaries_from_probs(p, threshold, delta))


def segment(model, state_input: np.ndarray, extras: np.ndarray, threshold: float | None = None,
            delta: int = 3) -> tuple[SegmentList, np.ndarray]:
    """Score a tokenized trajectory and split it; returns ``(segments, p)``."""
    from .model import boundary_probs

    p = boundary_probs(model, state_input, extras)
    gamma = model.cfg.threshold if threshold is None else threshold
    return segment_probs(p, gamma, delta), p


@dataclass
class Accuracy:
    precision: float
    recall: float
    f1: float


def cpd_accuracy(predicted, reference, tolerance: int = 2) -> Accuracy:
    """Greedy one-to-one matching: each prediction, in order, takes the nearest
    unmatched reference within ``tolerance`` steps."""
    pred = np.sort(np.asarray(predicted, dtype=np.int64))
    ref = np.sort(np.asarray(reference, dtype=np.int64))
    if len(pred) == 0 and len(ref) == 0:
        return Accuracy(1.0, 1.0, 1.0)
    used = np.zeros(len(ref), dtype=bool)
    hits = 0
    for b in pred:
        dist = np.where(used, np.iinfo(np.int64).max, np.abs(ref - b))
        if len(dist) and dist.min() <= tolerance:
            used[int(np.argmin(dist))] = True
            hits += 1
    precision = hits / len(pred) if len(pred) else 1.0
    recall = hits / len(ref) if len(ref) else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Accuracy(precision, recall, f1)
