import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from cpdoc.envs import (
    CLASSIC_GRID,
    ConfigError,
    CorruptedStateError,
    FourRooms,
    FourRoomsConfig,
    NoPathError,
    Pinball,
    PinballConfig,
    fourier_features,
    fourrooms_set_goal,
    fourrooms_step,
    load_fourrooms,
    normalize_state,
    optimal_steps,
    pinball_load,
    pinball_save,
    pinball_step,
)
from cpdoc.envs.fourrooms import DOWN, LEFT, RIGHT, UP, SWITCHED_GOAL, doorways, to_cell, to_index
from cpdoc.envs.pinball import NOOP, THRUST_XP

from oracles import graph_distance

CONFIGS = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"


class Forced:
    """rng stand-in returning a fixed sequence of uniforms."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


# Four-Rooms ---------------------------------------------------------------

def test_classic_layout_shape():
    cfg = FourRoomsConfig()
    assert len(cfg.grid) == 13 and all(len(r) == 13 for r in cfg.grid)
    assert cfg.free_mask.sum() == 104
    assert len(doorways(CLASSIC_GRID)) == 4


def test_default_optimal_steps_in_range_and_matches_graph_oracle():
    cfg = FourRoomsConfig()
    n = optimal_steps(cfg)
    assert 8 <= n <= 10
    assert n == graph_distance(cfg.grid, cfg.start, cfg.goal)


def test_switched_goal_distance_recomputed():
    cfg = fourrooms_set_goal(FourRoomsConfig(), SWITCHED_GOAL)
    assert optimal_steps(cfg) == graph_distance(cfg.grid, cfg.start, SWITCHED_GOAL)


def test_optimal_steps_trivial_cases():
    assert optimal_steps(FourRoomsConfig(start=(3, 3), goal=(3, 3))) == 0
    assert optimal_steps(FourRoomsConfig(start=(3, 3), goal=(3, 4))) == 1


def test_unreachable_goal():
    grid = list(CLASSIC_GRID)
    # wall the start off inside a pocket of the top-left room
    grid[1] = "#.#...#.....#"
    grid[2] = "###...#.....#"
    with pytest.raises(NoPathError):
        optimal_steps(FourRoomsConfig(grid=tuple(grid), start=(1, 1), goal=(6, 9)))


def test_intended_move_reaches_goal():
    cfg = FourRoomsConfig(start=(3, 3), goal=(3, 4))
    out = fourrooms_step(cfg, to_index((3, 3)), RIGHT, Forced(0.9))
    assert out.reward == 1.0 and out.done and out.next_state == to_index((3, 4))


def test_move_into_wall_stays_put():
    cfg = FourRoomsConfig()
    out = fourrooms_step(cfg, to_index((1, 1)), UP, Forced(0.9))
    assert out.next_state == to_index((1, 1)) and out.reward == 0.0 and not out.done


def test_slip_branch_executes_drawn_direction():
    cfg = FourRoomsConfig()
    out = fourrooms_step(cfg, to_index((3, 3)), UP, Forced(0.1, 0.99))
    assert out.info["executed"] == RIGHT and out.info["slipped"]
    assert to_cell(out.next_state) == (3, 4)


def test_wall_state_is_corrupted():
    with pytest.raises(CorruptedStateError):
        fourrooms_step(FourRoomsConfig(), 0, UP, Forced(0.9))


def test_goal_and_start_validation():
    with pytest.raises(ConfigError, match="goal"):
        FourRoomsConfig(goal=(0, 0))
    with pytest.raises(ConfigError, match="start"):
        FourRoomsConfig(start=(6, 0))
    with pytest.raises(ConfigError):
        fourrooms_set_goal(FourRoomsConfig(), (6, 1))
    cfg = FourRoomsConfig()
    door = doorways(cfg.grid)[0]
    assert fourrooms_set_goal(cfg, door).goal == door
    assert fourrooms_set_goal(cfg, cfg.goal) == cfg


def test_slip_statistics_match_mixture():
    # centre of a room so no direction is blocked; count executed directions
    cfg = FourRoomsConfig(goal=(10, 10))
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.zeros(4)
    state = to_index((3, 3))
    for _ in range(n):
        counts[fourrooms_step(cfg, state, DOWN, rng).info["executed"]] += 1
    expected = np.full(4, n / 12)
    expected[DOWN] = 0.75 * n
    assert abs(counts[DOWN] / n - 0.75) < 0.01
    assert chisquare(counts, expected).pvalue > 1e-3


def test_episode_respects_step_cap_and_never_enters_walls():
    cfg = FourRoomsConfig(step_cap=50)
    env = FourRooms(cfg, np.random.default_rng(3))
    act = np.random.default_rng(4)
    for _ in range(5):
        s = env.reset()
        for t in range(1, 51):
            out = env.step(int(act.integers(4)))
            s = out.next_state
            assert cfg.is_free(to_cell(s))
            if out.done:
                break
        assert t <= 50


def test_seeded_episodes_are_reproducible():
    def rollout(seed):
        env = FourRooms(FourRoomsConfig(), np.random.default_rng(seed))
        env.reset()
        return [env.step(a % 4).next_state for a in range(40)]

    assert rollout(7) == rollout(7)


def test_layout_file_loads(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"grid": list(CLASSIC_GRID), "start": [3, 3], "goal": [6, 9]}))
    cfg = load_fourrooms(path)
    assert cfg == FourRoomsConfig()


def test_shipped_layout_loads():
    cfg = load_fourrooms(CONFIGS / "fourrooms-layout.json")
    assert 8 <= optimal_steps(cfg) <= 10


# Pinball --------------------------------------------------------------------

def open_arena(**kw):
    return Pinball(PinballConfig(obstacles=(), start=(0.5, 0.5), goal=(0.9, 0.9), goal_radius=0.02, **kw))


def test_drag_applied_in_open_space():
    env = open_arena()
    out = pinball_step(env, np.array([0.3, 0.5, 1.0, 0.0]), NOOP)
    assert out.next_state[2] == pytest.approx(0.995) and out.next_state[3] == 0.0
    assert out.reward == -1.0 and not out.done


def test_thrust_costs_and_adds_impulse():
    env = open_arena(drag=1.0)
    out = pinball_step(env, np.array([0.3, 0.5, 0.0, 0.0]), THRUST_XP)
    assert out.reward == -5.0
    assert out.next_state[2] == pytest.approx(0.02)


def test_perpendicular_wall_hit_reflects():
    env = open_arena(drag=1.0)
    out = pinball_step(env, np.array([0.97, 0.5, 0.5, 0.2]), NOOP)
    assert out.info["collision"]
    assert out.next_state[2] == pytest.approx(-0.5) and out.next_state[3] == pytest.approx(0.2)


def test_obstacle_hit_reflects_normal_component():
    square = ((0.6, 0.4), (0.8, 0.4), (0.8, 0.6), (0.6, 0.6))
    env = Pinball(PinballConfig(obstacles=(square,), start=(0.2, 0.2), goal=(0.9, 0.9), drag=1.0))
    out = pinball_step(env, np.array([0.57, 0.5, 0.6, 0.1]), NOOP)
    assert out.info["collision"]
    assert out.next_state[2] == pytest.approx(-0.6) and out.next_state[3] == pytest.approx(0.1)


def test_oblique_bounce_keeps_velocity_in_clamp():
    # a face whose normal is parallel to (1 + sqrt 2, 1) reflects (1, 1) into (-sqrt 2, 0)
    n = np.array([1 + np.sqrt(2), 1.0]) / np.hypot(1 + np.sqrt(2), 1.0)
    d, p = np.array([n[1], -n[0]]), np.array([0.6, 0.5])
    tri = (tuple(p + 0.15 * d), tuple(p + 0.2 * n), tuple(p - 0.15 * d))
    env = Pinball(PinballConfig(obstacles=(tri,), start=(0.1, 0.1), goal=(0.05, 0.95), drag=1.0))
    state = np.array([*(p - 0.02 * np.array([1, 1]) / np.sqrt(2) - 0.03 * n), 1.0, 1.0])
    out = pinball_step(env, state, NOOP)
    assert out.info["collision"]
    assert out.next_state[2] == -1.0 and abs(out.next_state[3]) < 1e-12
    fourier_features(normalize_state(out.next_state))


def test_goal_reward():
    env = open_arena()
    out = pinball_step(env, np.array([0.9, 0.9, 0.0, 0.0]), THRUST_XP)
    assert out.reward == 10000.0 and out.done and out.info["goal"]


def test_nan_state_rejected():
    with pytest.raises(CorruptedStateError):
        pinball_step(open_arena(), np.array([np.nan, 0.5, 0.0, 0.0]), NOOP)


def test_step_cap_ends_episode():
    env = Pinball(PinballConfig(start=(0.2, 0.2), goal=(0.9, 0.9), step_cap=3))
    env.reset()
    outs = [env.step(NOOP) for _ in range(3)]
    assert [o.done for o in outs] == [False, False, True]


@settings(max_examples=200, deadline=None)
@given(st.floats(0.03, 0.97), st.floats(0.03, 0.97), st.floats(-1, 1), st.floats(-1, 1),
       st.integers(0, 4))
def test_ball_stays_in_arena_and_never_gains_speed_from_collisions(x, y, vx, vy, a):
    square = ((0.4, 0.4), (0.6, 0.4), (0.6, 0.6), (0.4, 0.6))
    cfg = PinballConfig(obstacles=(square,), start=(0.1, 0.1), goal=(0.95, 0.05), goal_radius=0.01)
    env = Pinball(cfg)
    if 0.38 < x < 0.62 and 0.38 < y < 0.62:
        return
    out = pinball_step(env, np.array([x, y, vx, vy]), NOOP)
    nx, ny, nvx, nvy = out.next_state
    assert 0.0 <= nx <= 1.0 and 0.0 <= ny <= 1.0
    assert np.hypot(nvx, nvy) <= np.hypot(vx, vy) + 1e-12


def test_fourier_features():
    assert np.all(fourier_features(np.zeros(4)) == 1.0)
    rng = np.random.default_rng(0)
    s = rng.random((1000, 4))
    feats = np.array([fourier_features(v) for v in s])
    assert feats.shape == (1000, 256)
    assert np.all(np.abs(feats) <= 1.0)
    assert np.all(feats[:, 0] == 1.0)
    with pytest.raises(ValueError):
        fourier_features(np.array([0.5, 0.5, 0.5, 1.5]))
    assert np.allclose(normalize_state([0.2, 0.3, -1.0, 1.0]), [0.2, 0.3, 0.0, 1.0])


def test_shipped_pinball_config_loads():
    cfg = pinball_load(CONFIGS / "pinball-simple-single.json")
    assert len(cfg.obstacles) >= 1


def test_pinball_validation_names_fields(tmp_path):
    square = [[0.1, 0.1], [0.3, 0.1], [0.3, 0.3], [0.1, 0.3]]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"obstacles": [square], "start": [0.2, 0.2], "goal": [0.9, 0.9]}))
    with pytest.raises(ConfigError, match="start"):
        pinball_load(path)
    path.write_text(json.dumps({"obstacles": [[[0.1, 0.1], [0.2, 0.2]]], "start": [0.5, 0.5]}))
    with pytest.raises(ConfigError, match=r"obstacles\[0\]"):
        pinball_load(path)
    path.write_text(json.dumps({"drag": 1.5}))
    with pytest.raises(ConfigError, match="drag"):
        pinball_load(path)


def test_pinball_roundtrip(tmp_path):
    cfg = pinball_load(CONFIGS / "pinball-simple-single.json")
    pinball_save(cfg, tmp_path / "copy.json")
    assert pinball_load(tmp_path / "copy.json") == cfg
