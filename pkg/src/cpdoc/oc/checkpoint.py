"""Agent checkpoints in the shared versioned container."""
from __future__ import annotations

from dataclasses import asdict

from ..checkpoint import CheckpointError, read_container, write_container
from .agent import AgentHyper, OptionCriticAgent


def save_checkpoint(agent: OptionCriticAgent, path, extra: dict | None = None) -> None:
    meta = {"kind": agent.options.kind, "n_options": agent.n_options, "hyper": asdict(agent.hyper),
            "eps": agent.eps, "extra": extra or {}}
    write_container(path, "agent", meta, agent.get_params())


def load_checkpoint(agent: OptionCriticAgent, path) -> dict:
    """Restore parameters into a freshly built agent of the same shape."""
    meta, params = read_container(path, "agent")
    if meta["kind"] != agent.options.kind or meta["n_options"] != agent.n_options:
        raise CheckpointError("checkpoint does not match the agent's layout")
    current = agent.get_params()
    for k, v in params.items():
        if k not in current or current[k].shape != v.shape:
            raise CheckpointError(f"parameter {k}: shape mismatch or unknown")
    agent.set_params(params)
    agent.hyper = AgentHyper(**meta["hyper"])
    agent.eps = meta["eps"]
    return meta
