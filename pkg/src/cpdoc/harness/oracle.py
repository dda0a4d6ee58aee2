"""Reference values: BFS optimum on Four-Rooms, a uniform-random floor on Pinball."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..envs import Pinball, PinballConfig, fourrooms_from_dict, optimal_steps, pinball_from_dict

RANDOM_EPISODES = 50


def env_kind(doc: dict) -> str:
    if "grid" in doc:
        return "fourrooms"
    if "obstacles" in doc:
        return "pinball"
    raise ValueError("cannot tell the environment from the file: expected a 'grid' or an 'obstacles' key")


def random_policy_return(cfg: PinballConfig, episodes: int = RANDOM_EPISODES, seed: int = 0) -> float:
    """Mean undiscounted return of uniformly random actions over seeded episodes."""
    env = Pinball(cfg)
    totals = []
    for ss in np.random.SeedSequence(seed).spawn(episodes):
        rng = np.random.default_rng(ss)
        env.reset()
        actions = rng.integers(env.n_actions, size=cfg.step_cap)
        total = 0.0
        for a in actions:
            out = env.step(int(a))
            total += out.reward
            if out.done:
                break
        totals.append(total)
    return float(np.mean(totals))


def oracle(path, episodes: int = RANDOM_EPISODES, seed: int = 0) -> dict:
    doc = json.loads(Path(path).read_text())
    kind = env_kind(doc)
    if kind == "fourrooms":
        return {"env": kind, "optimal_steps": optimal_steps(fourrooms_from_dict(doc))}
    return {"env": kind, "random_return": random_policy_return(pinball_from_dict(doc), episodes, seed),
            "episodes": episodes}
