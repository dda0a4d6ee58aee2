"""Stochastic Four-Rooms gridworld.

States are indexed over the full 13x13 grid (``row * 13 + col``); wall indices
exist but are never occupied.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

GRID_SIZE = 13
N_STATES = GRID_SIZE * GRID_SIZE
N_ACTIONS = 4
UP, DOWN, LEFT, RIGHT = range(4)
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

CLASSIC_GRID = (
    "#############",
    "#.....#.....#",
    "#.....#.....#",
    "#...........#",
    "#.....#.....#",
    "#.....#.....#",
    "##.####.....#",
    "#.....###.###",
    "#.....#.....#",
    "#.....#.....#",
    "#...........#",
    "#.....#.....#",
    "#############",
)
DEFAULT_START = (3, 3)
DEFAULT_GOAL = (6, 9)
SWITCHED_GOAL = (10, 3)


class ConfigError(ValueError):
    pass


class CorruptedStateError(RuntimeError):
    pass


class NoPathError(RuntimeError):
    pass


@dataclass
class StepOutcome:
    next_state: object
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FourRoomsConfig:
    grid: tuple[str, ...] = CLASSIC_GRID
    start: tuple[int, int] = DEFAULT_START
    goal: tuple[int, int] = DEFAULT_GOAL
    slip_prob: float = 1.0 / 3.0
    step_cap: int = 500
    goal_reward: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        errors = validate_fourrooms(self)
        if errors:
            raise ConfigError("; ".join(errors))

    def is_free(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < GRID_SIZE and 0 <= c < GRID_SIZE and self.grid[r][c] != "#"

    @property
    def free_mask(self) -> np.ndarray:
        return np.array([[ch != "#" for ch in row] for row in self.grid]).reshape(-1)


def doorways(grid) -> list[tuple[int, int]]:
    """Free cells squeezed between two walls on opposite sides."""
    cells = []
    for r in range(1, GRID_SIZE - 1):
        for c in range(1, GRID_SIZE - 1):
            if grid[r][c] == "#":
                continue
            vertical = grid[r - 1][c] != "#" and grid[r + 1][c] != "#"
            horizontal = grid[r][c - 1] != "#" and grid[r][c + 1] != "#"
            if (grid[r - 1][c] == "#" and grid[r + 1][c] == "#" and horizontal) or \
                    (grid[r][c - 1] == "#" and grid[r][c + 1] == "#" and vertical):
                cells.append((r, c))
    return cells


def validate_fourrooms(cfg: FourRoomsConfig) -> list[str]:
    errors = []
    if len(cfg.grid) != GRID_SIZE or any(len(row) != GRID_SIZE for row in cfg.grid):
        return [f"grid: must be {GRID_SIZE}x{GRID_SIZE}"]
    if len(doorways(cfg.grid)) != 4:
        errors.append(f"grid: expected 4 doorway cells, found {len(doorways(cfg.grid))}")
    if not cfg.is_free(cfg.start):
        errors.append(f"start: {cfg.start} is not a free cell")
    if not cfg.is_free(cfg.goal):
        errors.append(f"goal: {cfg.goal} is not a free cell")
    if not 0.0 <= cfg.slip_prob <= 1.0:
        errors.append("slip_prob: must lie in [0, 1]")
    if cfg.step_cap <= 0:
        errors.append("step_cap: must be positive")
    return errors


def to_index(cell: tuple[int, int]) -> int:
    return cell[0] * GRID_SIZE + cell[1]


def to_cell(index: int) -> tuple[int, int]:
    return divmod(int(index), GRID_SIZE)


def move(cfg: FourRoomsConfig, cell: tuple[int, int], action: int) -> tuple[int, int]:
    dr, dc = ACTION_DELTAS[action]
    nxt = (cell[0] + dr, cell[1] + dc)
    return nxt if cfg.is_free(nxt) else cell


def transition(cfg: FourRoomsConfig, cell: tuple[int, int], action: int, u_slip: float,
               u_dir: float) -> tuple[tuple[int, int], int, bool]:
    """Deterministic core of a step given two uniforms in [0, 1)."""
    slipped = u_slip < cfg.slip_prob
    executed = int(u_dir * N_ACTIONS) if slipped else int(action)
    return move(cfg, cell, executed), executed, slipped


def fourrooms_step(cfg: FourRoomsConfig, state: int, action: int, rng) -> StepOutcome:
    """One transition from grid index ``state``.

    With probability ``slip_prob`` the executed action is redrawn uniformly
    from all four, so the intended move still happens a quarter of the time.
    ``rng`` only needs a ``random()`` method.
    """
    cell = to_cell(state)
    if not cfg.is_free(cell):
        raise CorruptedStateError(f"state {state} {cell} is inside a wall")
    u_slip = rng.random()
    u_dir = rng.random() if u_slip < cfg.slip_prob else 0.0
    nxt, executed, slipped = transition(cfg, cell, action, u_slip, u_dir)
    at_goal = nxt == cfg.goal
    return StepOutcome(to_index(nxt), cfg.goal_reward if at_goal else 0.0, at_goal,
                       {"goal": at_goal, "executed": executed, "slipped": slipped,
                        "collision": nxt == cell})


def fourrooms_set_goal(cfg: FourRoomsConfig, goal: tuple[int, int]) -> FourRoomsConfig:
    if not cfg.is_free(tuple(goal)):
        raise ConfigError(f"goal: {tuple(goal)} is a wall cell")
    return replace(cfg, goal=tuple(goal))


def bfs_distances(cfg: FourRoomsConfig, source: tuple[int, int]) -> dict[tuple[int, int], int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        cell = queue.popleft()
        for a in range(N_ACTIONS):
            nxt = move(cfg, cell, a)
            if nxt not in dist:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


def optimal_steps(cfg: FourRoomsConfig, start: tuple[int, int] | None = None) -> int:
    """Shortest deterministic path length from start to goal, ignoring slip."""
    start = cfg.start if start is None else tuple(start)
    dist = bfs_distances(cfg, start)
    if cfg.goal not in dist:
        raise NoPathError(f"goal {cfg.goal} unreachable from {start}")
    return dist[cfg.goal]


class _BlockRng:
    """Feeds pre-drawn uniforms to ``fourrooms_step`` two per step."""

    def __init__(self, row: np.ndarray):
        self.row = row
        self.i = 0

    def random(self) -> float:
        u = float(self.row[self.i])
        self.i += 1
        return u


class FourRooms:
    """Episodic wrapper: tracks position and the step cap.

    Randomness for a whole episode is drawn at ``reset`` as a (step_cap, 2)
    block of uniforms, so the compiled rollout kernel and this class consume
    the generator identically.
    """

    n_states = N_STATES
    n_actions = N_ACTIONS

    def __init__(self, cfg: FourRoomsConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.state = to_index(cfg.start)
        self.t = 0
        self.uniforms = np.zeros((cfg.step_cap, 2))

    def set_goal(self, goal) -> None:
        self.cfg = fourrooms_set_goal(self.cfg, goal)

    @property
    def free_index_mask(self) -> np.ndarray:
        return self.cfg.free_mask

    def reset(self) -> int:
        self.state = to_index(self.cfg.start)
        self.t = 0
        self.uniforms = self.rng.random((self.cfg.step_cap, 2))
        return self.state

    def step(self, action: int) -> StepOutcome:
        out = fourrooms_step(self.cfg, self.state, action, _BlockRng(self.uniforms[self.t]))
        self.t += 1
        self.state = out.next_state
        if not out.done and self.t >= self.cfg.step_cap:
            out.done = True
            out.info["timeout"] = True
        return out


def load_fourrooms(path) -> FourRoomsConfig:
    doc = json.loads(Path(path).read_text())
    return fourrooms_from_dict(doc)


def fourrooms_from_dict(doc: dict) -> FourRoomsConfig:
    try:
        return FourRoomsConfig(
            grid=tuple(doc.get("grid", CLASSIC_GRID)),
            start=tuple(doc.get("start", DEFAULT_START)),
            goal=tuple(doc.get("goal", DEFAULT_GOAL)),
            slip_prob=float(doc.get("slip_prob", 1.0 / 3.0)),
            step_cap=int(doc.get("step_cap", 500)),
            goal_reward=float(doc.get("goal_reward", 1.0)),
        )
    except (TypeError, IndexError) as exc:
        raise ConfigError(f"malformed four-rooms document: {exc}") from exc


def fourrooms_to_dict(cfg: FourRoomsConfig) -> dict:
    return {"grid": list(cfg.grid), "start": list(cfg.start), "goal": list(cfg.goal),
            "slip_prob": cfg.slip_prob, "step_cap": cfg.step_cap, "goal_reward": cfg.goal_reward}
