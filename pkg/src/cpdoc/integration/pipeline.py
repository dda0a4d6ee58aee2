"""Per-episode wiring of the change-point detector into Option-Critic training.

Order of work after each episode:

1. tokenize the trajectory, derive pseudo-labels and push windows to the CPD memory;
2. one CPD optimizer step once the memory holds enough windows;
3. after the warm-up: score and segment the episode, apply termination
   supervision, update the subgoal tracker (pooling + clustering), and take a
   diversity ascent step on states from recent segments;
4. on the first subgoal adoption: behavioral-cloning pretraining and the
   termination boost near subgoals.

Every stage is gated by its weight, so with all weights at zero the agent's
parameters and random streams are untouched.
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..cpd import (
    CPDConfig,
    CPDModel,
    CPDTrainState,
    Tokenizer,
    boundary_probs,
    cpd_train_step,
    episode_windows,
    intrinsic_signals,
    pseudo_labels,
    segment_probs,
)
from ..oc.agent import EpisodeHooks, Trajectory
from .losses import (
    IntegrationConfigError,
    LossWeights,
    TerminationSupervision,
    apply_diversity,
    apply_termination_grad,
    bc_pretrain,
    diversity_loss,
    termination_supervision_loss,
)
from .subgoals import Segment, ShapingHooks, SubgoalTracker, beta_init_near_subgoals


@dataclass
class IntegrationConfig:
    # loss weights
    lambda_beta: float = 0.5
    lambda_div: float = 0.01
    lambda_bc: float = 1.0
    lambda_cpd: float = 1.0
    # termination supervision
    tau: float = 0.5
    half_width: int = 2
    alpha_w: float = 1.0
    warmup: int = 200
    # subgoals
    n_subgoals: int | None = None  # defaults to the option count
    bonus: float = 0.1
    beta_boost: float = 2.0
    refresh_period: float = 100
    drift_threshold: float = 0.5
    segment_history: int = 400
    bc_epochs: int = 5
    bc_lr: float = 0.25
    # diversity
    diversity_states: int = 64
    diversity_episodes: int = 10
    # detector
    cpd_min_windows: int = 64
    cpd_batch: int = 16
    cpd_layers: int = 4
    cpd_heads: int = 4
    cpd_dim: int = 64
    cpd_ff: int = 128
    cpd_window: int = 20
    cpd_threshold: float = 0.6
    cpd_lr: float = 1e-3
    cpd_weight_decay: float = 1e-4
    cpd_capacity: int = 1000
    label_eps: float = 0.1
    label_delta: int = 3
    spike_z: float = 2.0
    lambda_aux: float = 0.0

    def validate(self) -> list[str]:
        errors = []
        for name in ("lambda_beta", "lambda_div", "lambda_bc", "lambda_cpd", "alpha_w", "bonus",
                     "beta_boost", "lambda_aux", "drift_threshold", "bc_lr"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be non-negative")
        if not self.tau > 0:
            errors.append("tau: must be positive")
        for name in ("warmup", "half_width", "bc_epochs", "label_delta"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be non-negative")
        for name in ("refresh_period", "cpd_min_windows", "cpd_batch", "cpd_window", "cpd_capacity",
                     "diversity_states", "diversity_episodes", "segment_history"):
            if not getattr(self, name) > 0:
                errors.append(f"{name}: must be positive")
        if self.cpd_dim % max(self.cpd_heads, 1):
            errors.append("cpd_dim: must be divisible by cpd_heads")
        if not 0.0 < self.cpd_threshold < 1.0:
            errors.append("cpd_threshold: must lie in (0, 1)")
        if not 0.0 <= self.label_eps < 1.0:
            errors.append("label_eps: must lie in [0, 1)")
        return errors

    @classmethod
    def from_dict(cls, doc: dict) -> "IntegrationConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise IntegrationConfigError(f"unknown integration fields: {sorted(unknown)}")
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise IntegrationConfigError(str(exc)) from exc
        errors = cfg.validate()
        if errors:
            raise IntegrationConfigError("; ".join(errors))
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_beta, self.lambda_div, self.lambda_bc, self.lambda_cpd)

    @property
    def supervision(self) -> TerminationSupervision:
        return TerminationSupervision(self.tau, self.half_width, self.alpha_w, self.lambda_beta,
                                      self.lambda_cpd, self.warmup)


@dataclass
class EpisodeReport:
    p: np.ndarray | None = None
    boundaries: np.ndarray | None = None
    cpd_loss: float | None = None
    term_loss: float | None = None
    div_loss: float | None = None
    refreshed: bool = False


@dataclass
class CPDPipeline:
    """Owns the detector, its memory and the subgoal state for one agent.

    ``tabular_states`` is the number of discrete states (one-hot tokens and a
    full embedding table); otherwise ``state_dim`` raw inputs are used and the
    agent's ``featurize`` maps states to option features.
    """

    agent: object
    cfg: IntegrationConfig
    rng: np.random.Generator
    n_actions: int
    tabular_states: int | None = None
    state_dim: int | None = None
    model: CPDModel = field(init=False)
    train: CPDTrainState = field(init=False)
    tokenizer: Tokenizer = field(init=False)
    tracker: SubgoalTracker = field(init=False)
    recent: deque = field(init=False)
    segment_states: deque = field(init=False)
    bc_done: bool = False
    seeded: bool = False
    episode: int = 0

    def __post_init__(self):
        c = self.cfg
        self.tokenizer = Tokenizer(self.n_actions, n_states=self.tabular_states, state_dim=self.state_dim)
        model_rng, train_rng, sub_rng, self._div_rng = self.rng.spawn(4)
        mcfg = CPDConfig(state_dim=self.tokenizer.input_dim, extra_dim=self.tokenizer.extra_dim,
                         embed_dim=64, model_dim=c.cpd_dim, layers=c.cpd_layers, heads=c.cpd_heads,
                         ff_dim=c.cpd_ff, window=c.cpd_window, threshold=c.cpd_threshold)
        self.model = CPDModel(mcfg, model_rng)
        self.train = CPDTrainState(self.model, train_rng, capacity=c.cpd_capacity, batch_size=c.cpd_batch,
                                   lr=c.cpd_lr, weight_decay=c.cpd_weight_decay, label_eps=c.label_eps,
                                   lambda_aux=c.lambda_aux)
        k = c.n_subgoals or self.agent.n_options
        self.tracker = SubgoalTracker(k, sub_rng, period=c.refresh_period, drift_threshold=c.drift_threshold,
                                      bonus=c.bonus, history=c.segment_history)
        self.recent = deque(maxlen=50)
        self.segment_states = deque(maxlen=c.diversity_episodes)

    # embeddings -----------------------------------------------------------

    def embed_states(self, states) -> np.ndarray:
        return self.model.embed_numpy(self.tokenizer.states(np.asarray(states)))

    def state_embeddings(self) -> np.ndarray | None:
        if self.tabular_states is None:
            return None
        return self.model.encoder.weight.data + self.model.encoder.bias.data

    @property
    def subgoals_active(self) -> bool:
        return self.cfg.lambda_bc > 0 and self.tracker.subgoals is not None

    def hooks(self) -> EpisodeHooks:
        if not self.subgoals_active or self.cfg.bonus == 0.0:
            return EpisodeHooks()
        table = self.state_embeddings()
        embed = None if table is not None else (lambda s: self.embed_states([s])[0])
        return ShapingHooks(self.tracker.subgoals, self.agent.n_options, embed=embed, state_embeddings=table)

    # per-episode work -----------------------------------------------------

    def tokens(self, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
        z = intrinsic_signals(traj.td_errors, traj.rewards)
        return self.tokenizer(traj.states, traj.actions, traj.rewards, z)

    def agent_inputs(self, states) -> list:
        if self.agent.featurize is None:
            return [int(s) for s in states]
        return [self.agent.featurize(s) for s in states]

    def after_episode(self, traj: Trajectory) -> EpisodeReport:
        c = self.cfg
        report = EpisodeReport()
        self.episode += 1
        if c.lambda_cpd == 0 and c.lambda_beta == 0 and c.lambda_bc == 0 and c.lambda_div == 0:
            return report
        states_in, extras = self.tokens(traj)
        if c.lambda_cpd > 0:
            z = extras[:, -2:]
            labels = pseudo_labels(z, c.label_delta, c.spike_z)
            self.train.add(episode_windows(states_in, extras, labels, c.cpd_window))
            if len(self.train.buffer) >= c.cpd_min_windows:
                out = cpd_train_step(self.train)
                report.cpd_loss = out["loss"] if out else None
        self.recent.append(traj)
        if self.episode < c.warmup:
            return report
        p = boundary_probs(self.model, states_in, extras)
        seg = segment_probs(p, c.cpd_threshold, c.label_delta)
        report.p, report.boundaries = p, seg.boundaries
        xs = self.agent_inputs(traj.states)
        if c.lambda_beta > 0:
            loss, grads = termination_supervision_loss(self.agent.options, xs, traj.options, p, seg.indicators,
                                                       c.supervision, episode=self.episode)
            # gradient of the mean scaled back to a per-visit step
            apply_termination_grad(self.agent.options, grads["nu"],
                                   self.agent.hyper.lr_beta * c.lambda_beta * len(traj))
            report.term_loss = loss
        segments = [Segment(traj.states[a:b], traj.actions[a:b]) for a, b in seg.segments]
        self.segment_states.append(traj.states)
        if c.lambda_bc > 0:
            first = self.tracker.subgoals is None
            if not self.seeded:
                # back-fill the history with the episodes played before the warm-up ended
                for old in list(self.recent)[:-1]:
                    self.tracker.add(self._segments_of(old))
                self.seeded = True
            self.tracker.add(segments)
            report.refreshed = self.tracker.step(self.embed_states, force=first)
            if report.refreshed and not self.bc_done:
                self._pretrain()
        if c.lambda_div > 0 and self.agent.n_options > 1:
            pool = np.concatenate(list(self.segment_states))
            pick = pool[self._div_rng.integers(0, len(pool), size=c.diversity_states)]
            xs_div = self.agent_inputs(pick)
            val, g = diversity_loss(self.agent.options, xs_div)
            apply_diversity(self.agent.options, xs_div, g, self.agent.hyper.lr_theta * c.lambda_div)
            report.div_loss = val
        return report

    def _segments_of(self, traj: Trajectory) -> list[Segment]:
        states_in, extras = self.tokens(traj)
        p = boundary_probs(self.model, states_in, extras)
        seg = segment_probs(p, self.cfg.cpd_threshold, self.cfg.label_delta)
        return [Segment(traj.states[a:b], traj.actions[a:b]) for a, b in seg.segments]

    def _pretrain(self) -> None:
        c = self.cfg
        datasets = []
        for group in self.tracker.members:
            if not group:
                datasets.append(None)
                continue
            states = np.concatenate([s.states for s in group])
            actions = np.concatenate([s.actions for s in group])
            datasets.append((self.agent_inputs(states), actions))
        bc_pretrain(self.agent.options, datasets, epochs=c.bc_epochs, lr=c.bc_lr * c.lambda_bc)
        subgoals = self.tracker.subgoals
        if c.beta_boost > 0:
            table = self.state_embeddings()
            if table is not None:
                beta_init_near_subgoals(self.agent.options, subgoals, c.beta_boost, table)
            else:
                seen = np.concatenate([s.states for g in self.tracker.members for s in g])
                beta_init_near_subgoals(self.agent.options, subgoals, c.beta_boost, self.embed_states(seen),
                                        xs=np.array(self.agent_inputs(seen)))
        self.bc_done = True
