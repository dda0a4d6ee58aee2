"""Intra-option policies and termination functions.

Two parameterizations share one interface: tabular (integer states) and
linear over a feature vector. ``x`` below is whatever the agent feeds in:
a state index or a feature array.
"""
from __future__ import annotations

import math

import numpy as np


def softmax(z: np.ndarray) -> np.ndarray:
    # scalar libm exp: keeps this bit-identical to the compiled kernel
    shifted = z - z.max()
    e = np.array([math.exp(v) for v in shifted])
    return e / e.sum()


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def sample_with(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from ``probs`` using the uniform ``u``."""
    v = u * probs.sum()
    c = 0.0
    for a in range(len(probs)):
        c += probs[a]
        if v < c:
            return a
    return len(probs) - 1


class TabularOptions:
    """theta[o, s, a] action preferences and nu[o, s] termination logits."""

    kind = "tabular"

    def __init__(self, n_options: int, n_states: int, n_actions: int, temperature: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.n_options = n_options
        self.n_actions = n_actions
        self.temperature = temperature
        self.theta = np.zeros((n_options, n_states, n_actions))
        self.nu = np.zeros((n_options, n_states))

    def logits(self, x, option: int) -> np.ndarray:
        return self.theta[option, x] / self.temperature

    def action_probs(self, x, option: int) -> np.ndarray:
        return softmax(self.logits(x, option))

    def all_action_probs(self, x) -> np.ndarray:
        z = self.theta[:, x] / self.temperature
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def termination_logit(self, x, option: int) -> float:
        return float(self.nu[option, x])

    def termination_prob(self, x, option: int) -> float:
        return sigmoid(self.nu[option, x])

    def add_preference_grad(self, x, option: int, grad_logits: np.ndarray, scale: float) -> None:
        """theta[option, x] += scale * grad_logits (gradient w.r.t. the action logits)."""
        self.theta[option, x] += scale * grad_logits

    def add_termination_grad(self, x, option: int, scale: float) -> None:
        self.nu[option, x] += scale

    def get_params(self) -> dict[str, np.ndarray]:
        return {"theta": self.theta, "nu": self.nu}

    def set_params(self, params: dict) -> None:
        self.theta[...] = params["theta"]
        self.nu[...] = params["nu"]


class LinearOptions:
    """theta[o, a, :] . phi action logits and nu[o, :] . phi termination logits."""

    kind = "linear"

    def __init__(self, n_options: int, n_features: int, n_actions: int, temperature: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.n_options = n_options
        self.n_actions = n_actions
        self.temperature = temperature
        self.theta = np.zeros((n_options, n_actions, n_features))
        self.nu = np.zeros((n_options, n_features))

    def logits(self, x, option: int) -> np.ndarray:
        return (self.theta[option] @ x) / self.temperature

    def action_probs(self, x, option: int) -> np.ndarray:
        return softmax(self.logits(x, option))

    def all_action_probs(self, x) -> np.ndarray:
        z = (self.theta @ x) / self.temperature
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def termination_logit(self, x, option: int) -> float:
        return float(self.nu[option] @ x)

    def termination_prob(self, x, option: int) -> float:
        return sigmoid(self.termination_logit(x, option))

    def add_preference_grad(self, x, option: int, grad_logits: np.ndarray, scale: float) -> None:
        self.theta[option] += scale * np.outer(grad_logits, x)

    def add_termination_grad(self, x, option: int, scale: float) -> None:
        self.nu[option] += scale * x

    def get_params(self) -> dict[str, np.ndarray]:
        return {"theta": self.theta, "nu": self.nu}

    def set_params(self, params: dict) -> None:
        self.theta[...] = params["theta"]
        self.nu[...] = params["nu"]


def intra_action(options, option: int, x, rng) -> int:
    """Sample an action from the option's Boltzmann policy."""
    return sample_with(options.action_probs(x, option), rng.random())


def termination_prob(options, option: int, x) -> float:
    return options.termination_prob(x, option)


def intra_policy_gradient_update(options, x, option: int, action: int, q_u: float, lr: float) -> None:
    """Log-softmax ascent: the taken action's preference rises by lr*q_u*(1-pi),
    every other action's falls by lr*q_u*pi. Only ``option``'s parameters move."""
    if q_u == 0.0:
        return
    probs = options.action_probs(x, option)
    grad = -probs
    grad[action] += 1.0
    options.add_preference_grad(x, option, grad, lr * q_u)


def termination_gradient_update(options, critic, x, option: int, lr: float, eta: float = 0.0) -> float:
    """Termination-gradient step at arrival state ``x``.

    The advantage A = Q_Omega(x, option) - V(x) is offset by the deliberation
    margin ``eta``: the logit moves by -lr * beta * (1 - beta) * (A + eta).
    Returns the advantage (without the margin).
    """
    q = critic.q_omega(x)
    advantage = float(q[option] - q.max())
    beta = options.termination_prob(x, option)
    step = -lr * beta * (1.0 - beta) * (advantage + eta)
    if step != 0.0:
        options.add_termination_grad(x, option, step)
    return advantage
