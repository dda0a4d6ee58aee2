"""Token construction, the window memory and the optimization step."""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as F
from ..tensor import Adam, Tape, clip_gradients
from .labels import label_smooth
from .model import CPDModel


def symlog(x):
    return np.sign(x) * np.log1p(np.abs(x))


@dataclass
class Tokenizer:
    """Maps a trajectory to ``(state_input[T, S], extras[T, E])``.

    Tabular states are one-hot over ``n_states``; continuous states pass
    through raw. Extras are the action one-hot, symlog reward and the
    intrinsic signals.
    """

    n_actions: int
    n_states: int | None = None
    state_dim: int | None = None
    n_signals: int = 2

    @property
    def input_dim(self) -> int:
        return self.n_states if self.n_states is not None else int(self.state_dim)

    @property
    def extra_dim(self) -> int:
        return self.n_actions + 1 + self.n_signals

    def states(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states)
        if self.n_states is not None:
            out = np.zeros((len(states), self.n_states))
            out[np.arange(len(states)), states.astype(np.int64)] = 1.0
            return out
        return states.astype(np.float64).reshape(len(states), -1)

    def __call__(self, states, actions, rewards, signals) -> tuple[np.ndarray, np.ndarray]:
        T = len(actions)
        onehot = np.zeros((T, self.n_actions))
        onehot[np.arange(T), np.asarray(actions, dtype=np.int64)] = 1.0
        r = symlog(np.asarray(rewards, dtype=np.float64))[:, None]
        z = np.asarray(signals, dtype=np.float64).reshape(T, self.n_signals)
        extras = np.concatenate([onehot, r, z], axis=1)
        if not np.all(np.isfinite(extras)):
            raise ValueError("non-finite token entries")
        return self.states(states), extras


@dataclass
class Window:
    state_input: np.ndarray
    extras: np.ndarray
    labels: np.ndarray
    mask: np.ndarray | None = None  # per-position loss mask; None means all ones


def episode_windows(state_input, extras, labels, window: int, stride: int | None = None) -> list[Window]:
    """Cut an episode into windows of at most ``window`` steps; the tail window
    always ends at the last step.

    """
    T = len(labels)
    if T == 0:
        return []
    stride = stride or max(1, window // 2)
    if T <= window:
        starts = [0]
    else:
        starts = list(range(0, T - window + 1, stride))
        if starts[-1] != T - window:
            starts.append(T - window)
    return [Window(np.asarray(state_input[s:s + window], dtype=np.float64),
                   np.asarray(extras[s:s + window], dtype=np.float64),
                   np.asarray(labels[s:s + window], dtype=np.float64)) for s in starts]


@dataclass
class CPDTrainState:
    model: CPDModel
    rng: np.random.Generator
    capacity: int = 1000
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 1e-4
    noise_sigma: float = 0.01
    noise_prob: float = 0.3
    label_eps: float = 0.1
    lambda_sup: float = 1.0
    lambda_aux: float = 0.0
    clip: float = 1.0
    buffer: deque = field(init=False)
    optimizer: Adam = field(init=False)
    steps: int = 0

    def __post_init__(self):
        self.buffer = deque(maxlen=self.capacity)
        self.optimizer = Adam(self.model.parameters(), lr=self.lr, weight_decay=self.weight_decay)

    def add(self, windows) -> None:
        self.buffer.extend(windows)

    def sample(self, n: int | None = None) -> list[Window]:
        n = n or self.batch_size
        idx = self.rng.integers(0, len(self.buffer), size=n)
        return [self.buffer[i] for i in idx]


def collate(windows: list[Window], width: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad to a common length; returns (states, extras, labels, mask)."""
    L = max(len(w.labels) for w in windows)
    b = len(windows)
    states = np.zeros((b, L, windows[0].state_input.shape[1]))
    extras = np.zeros((b, L, windows[0].extras.shape[1]))
    labels = np.zeros((b, L))
    mask = np.zeros((b, L))
    for i, w in enumerate(windows):
        n = len(w.labels)
        states[i, :n] = w.state_input
        extras[i, :n] = w.extras
        labels[i, :n] = w.labels
        mask[i, :n] = 1.0 if w.mask is None else w.mask
    return states, extras, labels, mask


def cpd_loss(model: CPDModel, states, extras, targets, mask, lambda_sup=1.0, lambda_aux=0.0,
             noise=None):
    """Masked BCE on soft targets plus the optional next-step embedding-delta
    regression. Must run inside a tape to get gradients."""
    h, phi = model.hidden(states, extras, noise=noise)
    p = F.sigmoid(model.head(h).reshape(h.shape[0], h.shape[1]))
    denom = max(mask.sum(), 1.0)
    sup = F.bce(p, targets, weights=mask, reduction="sum") * (1.0 / denom)
    total = sup * lambda_sup
    aux_val = 0.0
    if lambda_aux > 0 and model.aux is not None and h.shape[1] > 1:
        pred = model.aux(h)[:, :-1]
        target = phi.data[:, 1:] - phi.data[:, :-1]
        m = (mask[:, 1:] * mask[:, :-1])[..., None]
        diff = F.sub(pred, target) * m
        aux = F.sum_(F.mul(diff, diff)) * (1.0 / max(m.sum() * target.shape[-1], 1.0))
        total = total + aux * lambda_aux
        aux_val = float(aux.data)
    return total, float(sup.data), aux_val


def cpd_train_step(state: CPDTrainState, batch: list[Window] | None = None) -> dict | None:
    """One optimizer step on a uniform sample of the memory (or ``batch``)."""
    model = state.model
    if batch is None:
        if not state.buffer:
            warnings.warn("CPD memory is empty; training step skipped", RuntimeWarning, stacklevel=2)
            return None
        batch = state.sample()
    states, extras, labels, mask = collate(batch, model.cfg.window)
    targets = label_smooth(labels, state.label_eps)
    width = model.cfg.embed_dim + model.cfg.extra_dim
    noise = state.rng.normal(0.0, state.noise_sigma, size=(len(batch), states.shape[1], width))
    noise *= (state.rng.random(len(batch)) < state.noise_prob)[:, None, None]
    model.zero_grad()
    with Tape():
        total, sup, aux = cpd_loss(model, states, extras, targets, mask,
                                   state.lambda_sup, state.lambda_aux, noise)
        total.backward()
    norm = clip_gradients(model.parameters(), state.clip)
    state.optimizer.step()
    state.steps += 1
    return {"loss": float(total.data), "sup": sup, "aux": aux, "grad_norm": norm}
