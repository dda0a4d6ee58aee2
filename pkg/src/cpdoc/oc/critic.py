from __future__ import annotations

import numpy as np


class TabularCritic:
    """Q_Omega[s, o] and Q_U[s, o, a] tables, zero-initialized."""

    kind = "tabular"

    def __init__(self, n_states: int, n_options: int, n_actions: int, gamma: float = 0.99, lr: float = 0.5):
        self.gamma = gamma
        self.lr = lr
        self.q_omega_table = np.zeros((n_states, n_options))
        self.q_u_table = np.zeros((n_states, n_options, n_actions))

    def q_omega(self, x) -> np.ndarray:
        return self.q_omega_table[x]

    def q_u(self, x, option: int, action: int) -> float:
        return float(self.q_u_table[x, option, action])

    def value(self, x) -> float:
        return float(self.q_omega_table[x].max())

    def _apply(self, x, option: int, action: int, target: float) -> float:
        td = target - self.q_omega_table[x, option]
        self.q_omega_table[x, option] += self.lr * td
        self.q_u_table[x, option, action] += self.lr * (target - self.q_u_table[x, option, action])
        return float(td)

    def get_params(self) -> dict[str, np.ndarray]:
        return {"q_omega": self.q_omega_table, "q_u": self.q_u_table}

    def set_params(self, params: dict) -> None:
        self.q_omega_table[...] = params["q_omega"]
        self.q_u_table[...] = params["q_u"]


class LinearCritic:
    """Q_Omega(x, o) = w_omega[o] . x and Q_U(x, o, a) = w_u[o, a] . x."""

    kind = "linear"

    def __init__(self, n_features: int, n_options: int, n_actions: int, gamma: float = 0.99, lr: float = 1e-3):
        self.gamma = gamma
        self.lr = lr
        self.w_omega = np.zeros((n_options, n_features))
        self.w_u = np.zeros((n_options, n_actions, n_features))

    def q_omega(self, x) -> np.ndarray:
        return self.w_omega @ x

    def q_u(self, x, option: int, action: int) -> float:
        return float(self.w_u[option, action] @ x)

    def value(self, x) -> float:
        return float(self.q_omega(x).max())

    def _apply(self, x, option: int, action: int, target: float) -> float:
        td = target - float(self.w_omega[option] @ x)
        self.w_omega[option] += self.lr * td * x
        self.w_u[option, action] += self.lr * (target - float(self.w_u[option, action] @ x)) * x
        return td

    def get_params(self) -> dict[str, np.ndarray]:
        return {"w_omega": self.w_omega, "w_u": self.w_u}

    def set_params(self, params: dict) -> None:
        self.w_omega[...] = params["w_omega"]
        self.w_u[...] = params["w_u"]


def continuation_value(critic, x_next, option: int, beta_next: float) -> float:
    """U(s', o) = (1 - beta) Q_Omega(s', o) + beta max_o' Q_Omega(s', o')."""
    q = critic.q_omega(x_next)
    return float((1.0 - beta_next) * q[option] + beta_next * q.max())


def critic_update(critic, x, option: int, action: int, reward: float, x_next, done: bool,
                  beta_next: float) -> float:
    """One intra-option TD step for Q_U and Q_Omega toward r + gamma U(s', o).

    Terminal transitions use target ``r``. Returns the TD error of Q_Omega
    before the update.
    """
    if done:
        target = reward
    else:
        target = reward + critic.gamma * continuation_value(critic, x_next, option, beta_next)
    return critic._apply(x, option, action, target)
