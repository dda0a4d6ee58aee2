"""Change-point signals applied to options: termination supervision, subgoal
discovery with behavioral cloning and shaping, and policy diversity."""
from .losses import (
    IntegrationConfigError,
    LossWeights,
    TerminationSupervision,
    UsageError,
    apply_diversity,
    apply_termination_grad,
    bc_loss,
    bc_pretrain,
    boundary_weights,
    diversity_loss,
    logit_grads_to_params,
    sharpen,
    termination_supervision_loss,
    total_loss,
)
from .pipeline import CPDPipeline, EpisodeReport, IntegrationConfig
from .subgoals import (
    Segment,
    ShapingHooks,
    SubgoalSet,
    SubgoalTracker,
    beta_init_near_subgoals,
    cluster_segments,
    pool_segment,
    reach_radius,
    shaped_reward,
)

__all__ = [name for name in dir() if not name.startswith("_")]
