"""Piecewise-stationary Gaussian sequences with known change points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import dilate
from .model import CPDConfig, CPDModel
from .segment import Accuracy, cpd_accuracy, segment
from .train import CPDTrainState, cpd_train_step, episode_windows


@dataclass
class SyntheticSequence:
    x: np.ndarray  # (T, dim)
    boundaries: np.ndarray  # first index of each regime after the first
    means: np.ndarray | None = None  # (regimes, dim)

    @property
    def labels(self) -> np.ndarray:
        y = np.zeros(len(self.x))
        y[self.boundaries] = 1.0
        return y


def mean_shift_sequence(rng: np.random.Generator, length: int = 200, dim: int = 4,
                        regimes: tuple[int, int] = (3, 5), min_shift: float = 1.5,
                        max_shift: float = 3.0, min_len: int = 20, sigma: float = 1.0,
                        revert: bool = True) -> SyntheticSequence:
    """Unit-variance noise around a mean that jumps at each boundary.

    Every coordinate of the mean moves by at least ``min_shift * sigma`` at each
    change. With ``revert`` the jump points back toward zero so means stay
    bounded; otherwise the sign is random and means random-walk. Regimes are at
    least ``min_len`` steps long.
    """
    k = int(rng.integers(regimes[0], regimes[1] + 1))
    slack = length - k * min_len
    if slack < 0:
        raise ValueError("sequence too short for the requested regimes")
    # stars and bars: random composition of the slack over k regimes
    cuts = np.sort(rng.integers(0, slack + 1, size=k - 1))
    extra = np.diff(np.concatenate([[0], cuts, [slack]]))
    lengths = min_len + extra
    boundaries = np.cumsum(lengths)[:-1]
    mean = rng.normal(0.0, 1.0, size=dim)
    x = np.empty((length, dim))
    means = np.empty((k, dim))
    start = 0
    for r, n in enumerate(lengths):
        if r:
            sign = rng.choice([-1.0, 1.0], size=dim)  # drawn either way to keep the stream aligned
            if revert:
                sign = np.where(mean > 0, -1.0, 1.0)
            mean = mean + sign * rng.uniform(min_shift, max_shift, size=dim) * sigma
        means[r] = mean
        x[start:start + n] = mean + sigma * rng.normal(size=(n, dim))
        start += n
    return SyntheticSequence(x, boundaries.astype(np.int64), means)


def synthetic_dataset(rng: np.random.Generator, n: int = 100, **kwargs) -> list[SyntheticSequence]:
    return [mean_shift_sequence(rng, **kwargs) for _ in range(n)]


def train_synthetic_detector(rng: np.random.Generator, steps: int = 2000, batch_size: int = 32,
                             latency: int = 1, warm: int = 100, cfg: CPDConfig | None = None,
                             **gen) -> CPDModel:
    """Supervised detector on generated sequences: ``warm`` sequences up front,
    then one fresh sequence per optimizer step. Targets also mark the
    ``latency`` steps after each change."""
    data_rng, model_rng, train_rng = rng.spawn(3)
    dim = gen.get("dim", 4)
    cfg = cfg or CPDConfig(state_dim=dim, extra_dim=0)
    model = CPDModel(cfg, model_rng)
    state = CPDTrainState(model, train_rng, batch_size=batch_size)
    none = np.zeros((gen.get("length", 200), 0))

    def push(seq):
        state.add(episode_windows(seq.x, none, dilate(seq.labels, latency), cfg.window))

    for seq in synthetic_dataset(data_rng, warm, **gen):
        push(seq)
    for _ in range(steps):
        push(mean_shift_sequence(data_rng, **gen))
        cpd_train_step(state)
    return model


def evaluate_synthetic(model: CPDModel, data: list[SyntheticSequence], tolerance: int = 2,
                       threshold: float | None = None, delta: int = 3) -> Accuracy:
    """Mean precision/recall/F1 over sequences."""
    scores = []
    for seq in data:
        seg, _ = segment(model, seq.x, np.zeros((len(seq.x), 0)), threshold=threshold, delta=delta)
        scores.append(cpd_accuracy(seg.boundaries, seq.boundaries, tolerance))
    return Accuracy(*(float(np.mean([getattr(a, k) for a in scores])) for k in ("precision", "recall", "f1")))
