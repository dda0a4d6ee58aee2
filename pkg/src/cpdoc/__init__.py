"""Change-point-guided Option-Critic: tensor core, benchmark envs, agents, CPD, harness."""

__version__ = "0.1.0"
