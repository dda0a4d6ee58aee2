"""Call-and-return option execution and the online Option-Critic learner."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .critic import LinearCritic, TabularCritic, critic_update
from .options import (
    LinearOptions,
    TabularOptions,
    intra_policy_gradient_update,
    sample_with,
    termination_gradient_update,
)


@dataclass
class AgentHyper:
    lr_critic: float = 0.5
    lr_theta: float = 0.25
    lr_beta: float = 0.25
    temperature: float = 0.001
    eps_option: float = 0.0
    eps_decay: float = 1.0  # multiplicative, applied per episode
    gamma: float = 0.99
    eta: float = 0.0  # deliberation cost
    baseline: bool = True  # policy gradient uses Q_U - Q_Omega

    def validate(self) -> list[str]:
        errors = []
        for name in ("lr_critic", "lr_theta", "lr_beta", "temperature"):
            if getattr(self, name) <= 0:
                errors.append(f"{name}: must be positive")
        if not 0.0 < self.gamma <= 1.0:
            errors.append("gamma: must lie in (0, 1]")
        if not 0.0 <= self.eps_option <= 1.0:
            errors.append("eps_option: must lie in [0, 1]")
        if not 0.0 < self.eps_decay <= 1.0:
            errors.append("eps_decay: must lie in (0, 1]")
        if self.eta < 0:
            errors.append("eta: must be non-negative")
        return errors

    @classmethod
    def from_dict(cls, doc: dict) -> "AgentHyper":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise KeyError(f"unknown agent fields: {sorted(unknown)}")
        return cls(**doc)


def _select(q_row: np.ndarray, eps: float, u_eps: float, u_choice: float) -> int:
    if eps > 0.0 and u_eps < eps:
        return int(u_choice * len(q_row))
    return int(np.argmax(q_row))


def select_option(q_row: np.ndarray, eps: float, rng) -> int:
    """Greedy over Q_Omega (lowest id wins ties); uniform with probability eps."""
    return _select(np.asarray(q_row), eps, rng.random(), rng.random())


@dataclass
class Trajectory:
    """Column-wise record of one episode; row t is the transition at step t."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    options: np.ndarray
    terminated: np.ndarray
    td_errors: np.ndarray
    train_rewards: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def dones(self) -> np.ndarray:
        d = np.zeros(len(self), dtype=bool)
        if len(self):
            d[-1] = True
        return d


@dataclass
class EpisodeStats:
    steps: int
    ret: float
    switches: int
    mean_option_len: float
    usage: np.ndarray
    reached_goal: bool


class EpisodeHooks:
    """No-op callbacks; subclasses shape the training reward."""

    def on_option_start(self, option: int, state) -> None:
        pass

    def shape_reward(self, reward: float, next_state, option: int) -> float:
        return reward

    def tabular_shaping(self):
        """``(reach[o, s] bool table, bonus)`` for the compiled path, or None."""
        return None


class OptionCriticAgent:
    def __init__(self, options, critic, hyper: AgentHyper, rng: np.random.Generator,
                 featurize: Callable | None = None):
        self.options = options
        self.critic = critic
        self.hyper = hyper
        self.rng = rng
        self.featurize = featurize
        self.eps = hyper.eps_option

    @property
    def n_options(self) -> int:
        return self.options.n_options

    def features(self, state):
        return state if self.featurize is None else self.featurize(state)

    def begin_episode(self, step_cap: int) -> np.ndarray:
        """Draw the episode's uniforms: row t = (action, termination, eps, choice);
        row ``step_cap`` seeds the initial option choice."""
        self.uniforms = self.rng.random((step_cap + 1, 4))
        return self.uniforms

    def select_option(self, x, u_eps: float, u_choice: float) -> int:
        return _select(self.critic.q_omega(x), self.eps, u_eps, u_choice)

    def act(self, x, option: int, u: float) -> int:
        return sample_with(self.options.action_probs(x, option), u)

    def learn(self, x, option: int, action: int, reward: float, x_next, done: bool) -> float:
        h = self.hyper
        beta_next = 0.0 if done else self.options.termination_prob(x_next, option)
        td = critic_update(self.critic, x, option, action, reward, x_next, done, beta_next)
        q_u = self.critic.q_u(x, option, action)
        if h.baseline:
            q_u -= float(self.critic.q_omega(x)[option])
        intra_policy_gradient_update(self.options, x, option, action, q_u, h.lr_theta)
        if not done:
            termination_gradient_update(self.options, self.critic, x_next, option, h.lr_beta, h.eta)
        return td

    def end_episode(self) -> None:
        self.eps *= self.hyper.eps_decay

    def get_params(self) -> dict[str, np.ndarray]:
        out = {f"options.{k}": v for k, v in self.options.get_params().items()}
        out.update({f"critic.{k}": v for k, v in self.critic.get_params().items()})
        return out

    def set_params(self, params: dict) -> None:
        self.options.set_params({k.split(".", 1)[1]: v for k, v in params.items() if k.startswith("options.")})
        self.critic.set_params({k.split(".", 1)[1]: v for k, v in params.items() if k.startswith("critic.")})


def make_tabular_agent(n_states: int, n_actions: int, n_options: int, hyper: AgentHyper,
                       rng: np.random.Generator) -> OptionCriticAgent:
    options = TabularOptions(n_options, n_states, n_actions, hyper.temperature)
    critic = TabularCritic(n_states, n_options, n_actions, hyper.gamma, hyper.lr_critic)
    return OptionCriticAgent(options, critic, hyper, rng)


def make_linear_agent(n_features: int, n_actions: int, n_options: int, hyper: AgentHyper,
                      rng: np.random.Generator, featurize: Callable) -> OptionCriticAgent:
    options = LinearOptions(n_options, n_features, n_actions, hyper.temperature)
    critic = LinearCritic(n_features, n_options, n_actions, hyper.gamma, hyper.lr_critic)
    return OptionCriticAgent(options, critic, hyper, rng, featurize)


def run_episode(agent: OptionCriticAgent, env, hooks: EpisodeHooks | None = None,
                learn: bool = True, fast: bool = True) -> tuple[Trajectory, EpisodeStats]:
    """Run one episode with call-and-return option execution.

    A fresh option is chosen at the start and whenever the active option's
    termination fires in the arrival state. Tabular agents on Four-Rooms go
    through the compiled kernel unless ``fast=False``; both paths consume the
    generators identically and produce the same trajectory.
    """
    hooks = hooks or EpisodeHooks()
    if fast and agent.options.kind == "tabular" and hasattr(env, "free_index_mask"):
        from .kernel import run_tabular_episode
        return run_tabular_episode(agent, env, hooks, learn)
    cap = env.cfg.step_cap
    state = env.reset()
    u = agent.begin_episode(cap)
    x = agent.features(state)
    option = agent.select_option(x, u[cap, 2], u[cap, 3])
    hooks.on_option_start(option, state)
    cols = {k: [] for k in ("states", "actions", "rewards", "next_states", "options",
                            "terminated", "td_errors", "train_rewards")}
    switches = 0
    reached = False
    t = 0
    while True:
        action = agent.act(x, option, u[t, 0])
        out = env.step(action)
        next_state = out.next_state
        x_next = agent.features(next_state)
        train_reward = hooks.shape_reward(out.reward, next_state, option)
        td = agent.learn(x, option, action, train_reward, x_next, out.done) if learn else 0.0
        terminated = False
        if not out.done:
            terminated = u[t, 1] < agent.options.termination_prob(x_next, option)
        for key, val in (("states", state), ("actions", action), ("rewards", out.reward),
                         ("next_states", next_state), ("options", option), ("terminated", terminated),
                         ("td_errors", td), ("train_rewards", train_reward)):
            cols[key].append(val)
        t += 1
        if out.done:
            reached = bool(out.info.get("goal", False))
            break
        if terminated:
            switches += 1
            option = agent.select_option(x_next, u[t - 1, 2], u[t - 1, 3])
            hooks.on_option_start(option, next_state)
        state, x = next_state, x_next
    agent.end_episode()
    traj = Trajectory(
        states=np.array(cols["states"]), actions=np.array(cols["actions"], dtype=np.int64),
        rewards=np.array(cols["rewards"], dtype=float), next_states=np.array(cols["next_states"]),
        options=np.array(cols["options"], dtype=np.int64), terminated=np.array(cols["terminated"], dtype=bool),
        td_errors=np.array(cols["td_errors"], dtype=float), train_rewards=np.array(cols["train_rewards"], dtype=float))
    return traj, episode_stats(traj, agent.n_options, switches, reached)


def episode_stats(traj: Trajectory, n_options: int, switches: int, reached: bool) -> EpisodeStats:
    t = len(traj)
    usage = np.bincount(traj.options, minlength=n_options).astype(float) / max(t, 1)
    return EpisodeStats(steps=t, ret=float(traj.rewards.sum()), switches=switches,
                        mean_option_len=t / (switches + 1), usage=usage, reached_goal=reached)
