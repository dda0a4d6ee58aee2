"""Option-Critic: policies over options, intra-option policies, terminations, critics."""
from .agent import (
    AgentHyper,
    EpisodeHooks,
    EpisodeStats,
    episode_stats,
    OptionCriticAgent,
    Trajectory,
    make_linear_agent,
    make_tabular_agent,
    run_episode,
    select_option,
)
from .critic import LinearCritic, TabularCritic, continuation_value, critic_update
from .options import (
    LinearOptions,
    TabularOptions,
    intra_action,
    intra_policy_gradient_update,
    termination_gradient_update,
    termination_prob,
)
from ..checkpoint import CheckpointError
from .checkpoint import load_checkpoint, save_checkpoint
