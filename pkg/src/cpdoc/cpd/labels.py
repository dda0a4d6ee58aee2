"""Intrinsic signals and self-supervised boundary labels."""
from __future__ import annotations

import numpy as np


def zscore(x: np.ndarray) -> np.ndarray:
    """Column-wise z-normalization; constant columns map to zero."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    return np.where(sd > 0, (x - mu) / safe, 0.0)


def intrinsic_signals(td_errors: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    """(T, 2) array of per-episode z-normalized |TD error| and |r_t - r_{t-1}|."""
    td = np.abs(np.asarray(td_errors, dtype=np.float64))
    r = np.asarray(rewards, dtype=np.float64)
    dr = np.abs(np.diff(r, prepend=r[:1])) if len(r) else r
    return zscore(np.stack([td, dr], axis=1)) if len(r) else np.zeros((0, 2))


def triangular_smooth(x: np.ndarray, delta: int) -> np.ndarray:
    """Triangle-weighted average over [t - delta, t + delta], renormalized at the edges."""
    x = np.asarray(x, dtype=np.float64)
    if delta <= 0:
        return x.copy()
    kernel = (delta + 1 - np.abs(np.arange(-delta, delta + 1))).astype(np.float64)
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones_like(x), kernel, mode="same")
    return num / den


def pseudo_labels(z: np.ndarray, delta: int = 3, spike_z: float = 2.0) -> np.ndarray:
    """Binary boundary labels from peaks of the smoothed signal.

    Multi-channel signals are reduced to their per-step maximum. A step is a
    candidate when its smoothed value is a local maximum above
    ``mean + spike_z * std``; candidates are then kept greedily from the
    strongest down, dropping any within ``delta`` of one already kept.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        z = z.max(axis=1) if z.shape[1] else np.zeros(len(z))
    T = len(z)
    labels = np.zeros(T, dtype=np.int64)
    if T < 2 * delta + 1:
        return labels
    s = triangular_smooth(z, delta)
    sd = s.std()
    if not sd > 1e-12:
        return labels
    cut = s.mean() + spike_z * sd
    left = np.concatenate([[-np.inf], s[:-1]])
    right = np.concatenate([s[1:], [-np.inf]])
    cand = np.flatnonzero((s > cut) & (s >= left) & (s >= right))
    kept: list[int] = []
    for i in cand[np.argsort(-s[cand], kind="stable")]:
        if all(abs(i - k) > delta for k in kept):
            kept.append(int(i))
    labels[kept] = 1
    return labels


def label_smooth(y: np.ndarray, eps: float = 0.1) -> np.ndarray:
    if not 0.0 <= eps < 1.0:
        raise ValueError("label smoothing eps must lie in [0, 1)")
    return (1.0 - eps) * np.asarray(y, dtype=np.float64) + eps / 2.0


def dilate(y: np.ndarray, after: int = 1) -> np.ndarray:
    """Also mark the ``after`` steps that follow each positive."""
    y = np.asarray(y, dtype=np.float64)
    out = y.copy()
    for d in range(1, after + 1):
        out[d:] = np.maximum(out[d:], y[:-d])
    return out
