"""Subgoal discovery from CPD segments: pooling, clustering, shaping and refresh."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..oc.agent import EpisodeHooks
from .losses import UsageError


def pool_segment(embeddings: np.ndarray, segment: tuple[int, int] | None = None) -> np.ndarray:
    """Mean of the per-step embeddings over ``[start, end)`` (or all rows)."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if segment is not None:
        emb = emb[segment[0]:segment[1]]
    if len(emb) == 0:
        raise UsageError("cannot pool an empty segment")
    return emb.mean(axis=0)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        i = int(rng.integers(len(X))) if tot <= 0 else int(rng.choice(len(X), p=d2 / tot))
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def cluster_segments(X: np.ndarray, k: int, rng: np.random.Generator,
                     max_iter: int = 50) -> tuple[np.ndarray, np.ndarray] | None:
    """k-means with k-means++ seeding. Returns ``(labels, centers)``, or None when
    there are fewer than ``k`` points (the caller keeps its previous subgoals)."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) < k:
        return None
    centers = _kmeanspp(X, k, rng)
    labels = np.full(len(X), -1)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        for c in range(k):
            if not np.any(new == c):
                # reseed from the point farthest from its current center
                far = int(d2[np.arange(len(X)), new].argmax())
                new[far] = c
                centers[c] = X[far]
                d2[far] = ((X[far] - centers) ** 2).sum(axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([X[labels == c].mean(axis=0) for c in range(k)])
    return labels, centers


def reach_radius(X: np.ndarray, q: float = 10.0) -> float:
    """The q-th percentile of pairwise distances in the clustering set."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) < 2:
        return 0.0
    iu = np.triu_indices(len(X), k=1)
    d = np.sqrt(((X[:, None, :] - X[None]) ** 2).sum(axis=2))[iu]
    return float(np.percentile(d, q))


@dataclass
class SubgoalSet:
    """Prototype k is the subgoal of option k."""

    prototypes: np.ndarray  # (K, D)
    radius: float
    bonus: float = 0.1

    def reaches(self, embedding: np.ndarray, option: int) -> bool:
        if option >= len(self.prototypes):
            return False
        return bool(np.linalg.norm(np.asarray(embedding) - self.prototypes[option]) <= self.radius)

    def reach_table(self, embeddings: np.ndarray, n_options: int) -> np.ndarray:
        """(n_options, n_states) reach indicators for a table of state embeddings."""
        out = np.zeros((n_options, len(embeddings)), dtype=bool)
        d = np.sqrt(((embeddings[None] - self.prototypes[:, None]) ** 2).sum(axis=2))
        out[:len(self.prototypes)] = d <= self.radius
        return out


def shaped_reward(r: float, embedding, option: int, subgoals: SubgoalSet | None,
                  already_fired: bool = False) -> tuple[float, bool]:
    """``r + bonus`` on the first reach of the active option's prototype.

    Returns the reward and whether the bonus fired on this call.
    """
    if subgoals is None or subgoals.bonus == 0.0 or already_fired:
        return r, False
    if subgoals.reaches(embedding, option):
        return r + subgoals.bonus, True
    return r, False


class ShapingHooks(EpisodeHooks):
    """Adds the subgoal bonus once per option execution.

    ``embed(state)`` maps a raw state to its 64-d embedding; for tabular agents
    ``state_embeddings`` (n_states, D) enables the compiled rollout.
    """

    def __init__(self, subgoals: SubgoalSet | None, n_options: int, embed=None,
                 state_embeddings: np.ndarray | None = None):
        self.subgoals = subgoals
        self.n_options = n_options
        self.embed = embed
        self.state_embeddings = state_embeddings
        self.fired = False
        self.bonus_count = 0
        self._table = None
        if subgoals is not None and state_embeddings is not None:
            self._table = subgoals.reach_table(state_embeddings, n_options)

    def on_option_start(self, option, state) -> None:
        self.fired = False

    def shape_reward(self, reward, next_state, option):
        if self.subgoals is None:
            return reward
        emb = self.state_embeddings[next_state] if self.state_embeddings is not None else self.embed(next_state)
        r, fired = shaped_reward(reward, emb, option, self.subgoals, self.fired)
        if fired:
            self.fired = True
            self.bonus_count += 1
        return r

    def tabular_shaping(self):
        if self._table is None or self.subgoals is None:
            return None
        return self._table, self.subgoals.bonus


def beta_init_near_subgoals(options, subgoals: SubgoalSet, boost: float, state_embeddings: np.ndarray,
                            xs: np.ndarray | None = None) -> None:
    """Raise option k's termination logit by ``boost`` near prototype k.

    Tabular options are indexed by the rows of ``state_embeddings``. Linear
    options are refit by least squares on the feature rows ``xs`` (paired with
    ``state_embeddings``) toward their current logits plus the boost.
    """
    if boost == 0.0:
        return
    reach = subgoals.reach_table(state_embeddings, options.n_options)
    if options.kind == "tabular":
        options.nu += boost * reach
        return
    X = np.asarray(xs, dtype=np.float64)
    for k in range(min(len(subgoals.prototypes), options.n_options)):
        target = X @ options.nu[k] + boost * reach[k]
        options.nu[k] = np.linalg.lstsq(X, target, rcond=None)[0]


@dataclass
class Segment:
    states: np.ndarray
    actions: np.ndarray


@dataclass
class SubgoalTracker:
    """Periodic re-clustering of recent CPD segments with hysteresis.

    Segments are kept raw so that pooling always uses the current encoder.
    Every ``period`` episodes the history is pooled and clustered; the new
    prototypes are adopted only when their mean displacement from the current
    subgoals (re-pooled under the same encoder) exceeds ``drift_threshold``.
    """

    k: int
    rng: np.random.Generator
    period: float = 100
    drift_threshold: float = 0.5
    bonus: float = 0.1
    history: int = 400
    segments: list = field(default_factory=list)
    subgoals: SubgoalSet | None = None
    members: list = field(default_factory=list)  # segments per adopted cluster
    since: int = 0
    refreshes: int = 0
    last_displacement: float = 0.0

    def add(self, segments) -> None:
        self.segments.extend(segments)
        if len(self.segments) > self.history:
            del self.segments[:len(self.segments) - self.history]

    def fit(self, embed) -> tuple[SubgoalSet, list] | None:
        """Cluster the history; returns the subgoals and each cluster's segments."""
        if len(self.segments) < self.k:
            return None
        X = np.array([pool_segment(embed(seg.states)) for seg in self.segments])
        out = cluster_segments(X, self.k, self.rng)
        if out is None:
            return None
        labels, centers = out
        members = [[seg for seg, l in zip(self.segments, labels) if l == c] for c in range(self.k)]
        return SubgoalSet(centers, reach_radius(X), self.bonus), members

    def current_prototypes(self, embed) -> np.ndarray:
        return np.array([np.mean([pool_segment(embed(seg.states)) for seg in group], axis=0)
                         for group in self.members])

    def step(self, embed, force: bool = False) -> bool:
        """Advance one episode; returns True when new subgoals were adopted."""
        self.since += 1
        if not force and (not np.isfinite(self.period) or self.since < self.period):
            return False
        self.since = 0
        out = self.fit(embed)
        if out is None:
            return False
        fresh, members = out
        if self.subgoals is None:
            self.subgoals, self.members = fresh, members
            self.refreshes += 1
            return True
        old = self.current_prototypes(embed)
        cost = np.sqrt(((old[:, None] - fresh.prototypes[None]) ** 2).sum(axis=2))
        rows, cols = linear_sum_assignment(cost)
        order = np.empty(self.k, dtype=np.int64)
        order[rows] = cols
        self.last_displacement = float(cost[rows, cols].mean())
        if self.last_displacement > self.drift_threshold:
            self.subgoals = SubgoalSet(fresh.prototypes[order], fresh.radius, self.bonus)
            self.members = [members[c] for c in order]
            self.refreshes += 1
            return True
        return False
