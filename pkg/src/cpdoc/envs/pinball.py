"""Pinball: a ball in the unit square steered by small velocity impulses.

Each action adds an impulse (or nothing), the position is integrated over
``SUBSTEPS`` sub-steps with elastic reflection off obstacles and the arena
border, then drag scales the velocity.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from .fourrooms import ConfigError, CorruptedStateError, StepOutcome

SUBSTEPS = 20
STEP_DURATION = 0.05  # position units travelled per action at unit speed
N_ACTIONS = 5
THRUST_XP, THRUST_XN, THRUST_YP, THRUST_YN, NOOP = range(5)
_IMPULSE_DIRS = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (0.0, 0.0))


@dataclass(frozen=True)
class PinballConfig:
    obstacles: tuple = ()
    start: tuple[float, float] = (0.2, 0.2)
    goal: tuple[float, float] = (0.8, 0.8)
    goal_radius: float = 0.05
    ball_radius: float = 0.02
    drag: float = 0.995
    impulse: float = 0.02
    step_cap: int = 10000
    goal_reward: float = 10000.0
    noop_reward: float = -1.0
    thrust_reward: float = -5.0

    def __post_init__(self):
        obs = tuple(tuple((float(x), float(y)) for x, y in poly) for poly in self.obstacles)
        object.__setattr__(self, "obstacles", obs)
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        errors = validate_pinball(self)
        if errors:
            raise ConfigError("; ".join(errors))


def _point_in_polygon(x: float, y: float, poly) -> bool:
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def _signed_area(poly) -> float:
    return 0.5 * sum(poly[i][0] * poly[(i + 1) % len(poly)][1] - poly[(i + 1) % len(poly)][0] * poly[i][1]
                     for i in range(len(poly)))


def validate_pinball(cfg: PinballConfig) -> list[str]:
    errors = []

    def in_unit(p):
        return all(0.0 <= v <= 1.0 for v in p)

    for i, poly in enumerate(cfg.obstacles):
        if len(poly) < 3:
            errors.append(f"obstacles[{i}]: polygon needs at least 3 vertices")
        elif not all(in_unit(p) for p in poly):
            errors.append(f"obstacles[{i}]: vertices must lie in [0,1]^2")
        elif abs(_signed_area(poly)) < 1e-12:
            errors.append(f"obstacles[{i}]: degenerate polygon")
    for name in ("start", "goal"):
        p = getattr(cfg, name)
        if len(p) != 2 or not in_unit(p):
            errors.append(f"{name}: must be a point in [0,1]^2")
    if not 0.0 < cfg.drag <= 1.0:
        errors.append("drag: must lie in (0, 1]")
    if cfg.goal_radius <= 0:
        errors.append("goal_radius: must be positive")
    if cfg.ball_radius <= 0:
        errors.append("ball_radius: must be positive")
    if cfg.step_cap <= 0:
        errors.append("step_cap: must be positive")
    if not errors:
        for i, poly in enumerate(cfg.obstacles):
            if _point_in_polygon(cfg.start[0], cfg.start[1], poly):
                errors.append(f"start: inside obstacles[{i}]")
    return errors


class _Obstacle:
    __slots__ = ("poly", "edges", "xmin", "xmax", "ymin", "ymax", "ccw")

    def __init__(self, poly):
        self.poly = poly
        n = len(poly)
        self.edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        self.xmin, self.xmax, self.ymin, self.ymax = min(xs), max(xs), min(ys), max(ys)
        self.ccw = _signed_area(poly) > 0

    def contact(self, x: float, y: float, r: float):
        """Return (nx, ny, px, py) if the ball touches the obstacle, else None.

        ``(nx, ny)`` is the unit normal pointing out of the obstacle and
        ``(px, py)`` the closest boundary point.
        """
        if x < self.xmin - r or x > self.xmax + r or y < self.ymin - r or y > self.ymax + r:
            return None
        best = None
        for (x1, y1), (x2, y2) in self.edges:
            ex, ey = x2 - x1, y2 - y1
            L2 = ex * ex + ey * ey
            u = ((x - x1) * ex + (y - y1) * ey) / L2
            u = 0.0 if u < 0.0 else 1.0 if u > 1.0 else u
            px, py = x1 + u * ex, y1 + u * ey
            d2 = (x - px) ** 2 + (y - py) ** 2
            if best is None or d2 < best[0]:
                best = (d2, px, py, ex, ey)
        d2, px, py, ex, ey = best
        inside = _point_in_polygon(x, y, self.poly)
        if not inside and d2 >= r * r:
            return None
        d = math.sqrt(d2)
        if inside or d < 1e-12:
            # outward normal of the closest edge
            nx, ny = (ey, -ex) if self.ccw else (-ey, ex)
            norm = math.hypot(nx, ny)
            return nx / norm, ny / norm, px, py
        return (x - px) / d, (y - py) / d, px, py


class Pinball:
    n_actions = N_ACTIONS
    state_dim = 4

    def __init__(self, cfg: PinballConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.rng = rng
        self._obstacles = [_Obstacle(p) for p in cfg.obstacles]
        self.state = np.array([cfg.start[0], cfg.start[1], 0.0, 0.0])
        self.t = 0

    def set_goal(self, goal) -> None:
        self.cfg = replace(self.cfg, goal=tuple(goal))

    def reset(self) -> np.ndarray:
        self.state = np.array([self.cfg.start[0], self.cfg.start[1], 0.0, 0.0])
        self.t = 0
        return self.state.copy()

    def _at_goal(self, x: float, y: float) -> bool:
        gx, gy = self.cfg.goal
        return (x - gx) ** 2 + (y - gy) ** 2 <= self.cfg.goal_radius ** 2

    def step(self, action: int) -> StepOutcome:
        out = pinball_step(self, self.state, action)
        self.t += 1
        self.state = out.next_state
        if not out.done and self.t >= self.cfg.step_cap:
            out.done = True
            out.info["timeout"] = True
        return out


def pinball_step(env: Pinball, state, action: int) -> StepOutcome:
    cfg = env.cfg
    x, y, vx, vy = (float(v) for v in state)
    if not all(math.isfinite(v) for v in (x, y, vx, vy)):
        raise CorruptedStateError(f"non-finite pinball state {state!r}")
    action = int(action)
    reward = cfg.noop_reward if action == NOOP else cfg.thrust_reward
    if env._at_goal(x, y):
        return StepOutcome(np.array([x, y, vx, vy]), cfg.goal_reward, True,
                           {"goal": True, "collision": False})
    dx, dy = _IMPULSE_DIRS[action]
    vx = min(1.0, max(-1.0, vx + cfg.impulse * dx))
    vy = min(1.0, max(-1.0, vy + cfg.impulse * dy))
    r = cfg.ball_radius
    h = STEP_DURATION / SUBSTEPS
    collided = False
    goal = False
    for _ in range(SUBSTEPS):
        x += vx * h
        y += vy * h
        for obs in env._obstacles:
            hit = obs.contact(x, y, r)
            if hit is None:
                continue
            nx, ny, px, py = hit
            x, y = px + nx * (r + 1e-9), py + ny * (r + 1e-9)
            vn = vx * nx + vy * ny
            if vn < 0.0:
                vx -= 2.0 * vn * nx
                vy -= 2.0 * vn * ny
            collided = True
        if x < r:
            x, vx, collided = r, abs(vx), True
        elif x > 1.0 - r:
            x, vx, collided = 1.0 - r, -abs(vx), True
        if y < r:
            y, vy, collided = r, abs(vy), True
        elif y > 1.0 - r:
            y, vy, collided = 1.0 - r, -abs(vy), True
        if env._at_goal(x, y):
            goal = True
            break
    # an oblique bounce keeps the speed but can push one axis past the clamp
    vx = min(1.0, max(-1.0, vx * cfg.drag))
    vy = min(1.0, max(-1.0, vy * cfg.drag))
    if goal:
        reward = cfg.goal_reward
    return StepOutcome(np.array([x, y, vx, vy]), reward, goal, {"goal": goal, "collision": collided})


FOURIER_COEFFS = np.array(list(product(range(4), repeat=4)), dtype=np.float64)


def normalize_state(state) -> np.ndarray:
    """Map (x, y, vx, vy) with velocities in [-1, 1] to [0, 1]^4."""
    s = np.asarray(state, dtype=np.float64)
    return np.array([s[0], s[1], (s[2] + 1.0) / 2.0, (s[3] + 1.0) / 2.0])


def fourier_features(s) -> np.ndarray:
    """cos(pi * c . s) for every c in {0,1,2,3}^4: 256 features."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {s.shape}")
    if np.any(s < -1e-12) or np.any(s > 1 + 1e-12) or not np.all(np.isfinite(s)):
        raise ValueError(f"fourier_features domain is [0,1]^4, got {s}")
    return np.cos(np.pi * (FOURIER_COEFFS @ s))


def pinball_from_dict(doc: dict) -> PinballConfig:
    known = {f for f in PinballConfig.__dataclass_fields__}
    extra = set(doc) - known - {"rewards"}
    if extra:
        raise ConfigError(f"unknown pinball fields: {sorted(extra)}")
    kwargs = {k: v for k, v in doc.items() if k in known}
    rewards = doc.get("rewards", {})
    for key, field_name in (("goal", "goal_reward"), ("noop", "noop_reward"), ("move", "thrust_reward")):
        if key in rewards:
            kwargs[field_name] = float(rewards[key])
    try:
        return PinballConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed pinball document: {exc}") from exc


def pinball_to_dict(cfg: PinballConfig) -> dict:
    doc = asdict(cfg)
    doc["obstacles"] = [[list(p) for p in poly] for poly in cfg.obstacles]
    doc["start"] = list(cfg.start)
    doc["goal"] = list(cfg.goal)
    return doc


def pinball_load(path) -> PinballConfig:
    return pinball_from_dict(json.loads(Path(path).read_text()))


def pinball_save(cfg: PinballConfig, path) -> None:
    Path(path).write_text(json.dumps(pinball_to_dict(cfg), indent=2))
