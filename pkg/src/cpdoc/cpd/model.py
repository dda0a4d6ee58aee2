"""Causal Transformer boundary classifier.

A token is ``concat(encoder(state_input), extras)`` where ``extras`` carries
the action one-hot, the reward and the intrinsic signals. ``p_t`` is read off
the last position of the window ``(t - W, t]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as F
from ..checkpoint import read_container, write_container
from ..tensor import Tensor
from ..tensor.nn import EncoderBlock, LayerNorm, Linear, Module, causal_mask, sinusoidal_positions


class ModelDivergenceError(FloatingPointError):
    pass


@dataclass
class CPDConfig:
    state_dim: int
    extra_dim: int
    embed_dim: int = 64
    model_dim: int = 64
    layers: int = 4
    heads: int = 4
    ff_dim: int = 128
    window: int = 20
    threshold: float = 0.6
    aux_head: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


class CPDModel(Module):
    def __init__(self, cfg: CPDConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = Linear(cfg.state_dim, cfg.embed_dim, rng)
        self.inp = Linear(cfg.embed_dim + cfg.extra_dim, cfg.model_dim, rng)
        self.blocks = [EncoderBlock(cfg.model_dim, cfg.heads, cfg.ff_dim, rng) for _ in range(cfg.layers)]
        self.norm = LayerNorm(cfg.model_dim)
        self.head = Linear(cfg.model_dim, 1, rng)
        # predicts the next token's encoded-state delta; only trained when lambda_aux > 0
        self.aux = Linear(cfg.model_dim, cfg.embed_dim, rng) if cfg.aux_head else None
        self._positions = sinusoidal_positions(cfg.window, cfg.model_dim)

    def embed(self, state_input: np.ndarray | Tensor) -> Tensor:
        """phi(s): the learned linear state encoding (64-d by default)."""
        return self.encoder(F.as_tensor(state_input))

    def embed_numpy(self, state_input: np.ndarray) -> np.ndarray:
        return np.asarray(state_input) @ self.encoder.weight.data + self.encoder.bias.data

    def hidden(self, state_input, extras, noise: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Run the encoder stack on (B, L, .) windows; returns (hidden, phi).

        ``noise`` (same shape as the tokens) is added before the input projection.
        """
        phi = self.embed(state_input)
        b, length, _ = phi.shape
        if length > self.cfg.window:
            raise ValueError(f"window length {length} exceeds configured {self.cfg.window}")
        x = phi if self.cfg.extra_dim == 0 else F.concat([phi, F.as_tensor(extras)], axis=-1)
        if noise is not None:
            x = F.add(x, noise)
        h = F.add(self.inp(x), self._positions[:length])
        mask = causal_mask(length)
        for block in self.blocks:
            h = block(h, mask)
        return self.norm(h), phi

    def logits(self, state_input, extras) -> Tensor:
        h, _ = self.hidden(state_input, extras)
        return self.head(h).reshape(h.shape[0], h.shape[1])

    def probs(self, state_input, extras) -> Tensor:
        return F.sigmoid(self.logits(state_input, extras))


def window_index(T: int, W: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scoring windows for a length-T sequence.

    Windows start at multiples of ``stride`` and span ``L = min(T, W)`` steps
    (right-padded with the last index). Step t is read from the earliest window
    that contains it, so it sees at least ``L - stride + 1`` steps of context
    once t >= L - 1. Returns ``(idx[n, L], row[T], col[T])``: step t's
    prediction sits at ``(row[t], col[t])``. ``stride=1`` is one window per step.
    """
    L = min(T, W)
    t = np.arange(T)
    first = np.maximum(-(-(t - L + 1) // stride) * stride, 0)
    starts, row = np.unique(first, return_inverse=True)
    idx = np.minimum(starts[:, None] + np.arange(L)[None, :], T - 1)
    return idx, row.reshape(-1), t - first


def boundary_probs(model: CPDModel, state_input: np.ndarray, extras: np.ndarray,
                   stride: int | None = None, batch: int = 256) -> np.ndarray:
    """Per-step boundary probabilities for one tokenized trajectory (no tape).

    The default stride of half a window matches how training windows are cut,
    so every step is scored with the context length it was trained at.
    """
    state_input = np.asarray(state_input, dtype=np.float64)
    extras = np.asarray(extras, dtype=np.float64).reshape(len(state_input), -1)
    T = len(state_input)
    if T == 0:
        return np.zeros(0)
    W = model.cfg.window
    idx, row, col = window_index(T, W, stride or max(1, W // 2))
    scores = np.empty(idx.shape)
    for lo in range(0, len(idx), batch):
        rows = idx[lo:lo + batch]
        scores[lo:lo + batch] = model.probs(state_input[rows], extras[rows]).data
    out = scores[row, col]
    if not np.all(np.isfinite(out)):
        raise ModelDivergenceError("non-finite boundary probabilities")
    return out


def save_model(model: CPDModel, path, extra: dict | None = None) -> None:
    write_container(path, "cpd", {"config": model.cfg.to_dict(), "extra": extra or {}}, model.state_dict())


def load_model(path) -> tuple[CPDModel, dict]:
    meta, arrays = read_container(path, "cpd")
    model = CPDModel(CPDConfig(**meta["config"]), np.random.default_rng(0))
    model.load_state_dict(arrays)
    return model, meta
