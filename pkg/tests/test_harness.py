import json
from pathlib import Path

import numpy as np
import pytest

from cpdoc.envs import CLASSIC_GRID, NoPathError, FourRoomsConfig, fourrooms_to_dict
from cpdoc.envs.fourrooms import SWITCHED_GOAL, to_index
from cpdoc.harness import (
    AlignmentError,
    MetricsRecord,
    config_from_dict,
    csv_header,
    improvement,
    load_run,
    markdown_table,
    oracle,
    room_boundaries,
    room_map,
    run,
    smooth,
    summarize,
    validate_config,
    write_report,
)
from cpdoc.harness import cli, runner
from cpdoc.harness.report import RunData

from oracles import graph_distance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LAYOUT = str(CONFIGS / "fourrooms-layout.json")
PINBALL = str(CONFIGS / "pinball-simple-single.json")

TINY_CPD = {"warmup": 4, "cpd_min_windows": 8, "cpd_batch": 4, "cpd_layers": 1, "cpd_heads": 2, "cpd_dim": 8,
            "cpd_ff": 16, "cpd_window": 6, "refresh_period": 3, "bc_epochs": 1}
ZERO_WEIGHTS = {"lambda_beta": 0.0, "lambda_div": 0.0, "lambda_bc": 0.0, "lambda_cpd": 0.0}


def make_cfg(tmp_path, subdir="run", **over):
    doc = {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC", "episodes": 10, "seeds": [0],
           "output_dir": str(tmp_path / subdir)}
    doc.update(over)
    return config_from_dict(doc)


def read(path):
    return Path(path).read_bytes()


# config ----------------------------------------------------------------------

def test_shipped_configs_validate():
    for name in ("fourrooms-oc4", "fourrooms-ocd4", "fourrooms-cpdoc4", "fourrooms-cpdocd4",
                 "pinball-oc", "pinball-cpdoc"):
        cfg, errors = validate_config(CONFIGS / f"{name}.json")
        assert errors == [], (name, errors)
    cfg, _ = validate_config(CONFIGS / "fourrooms-cpdoc4.json")
    assert cfg.episodes == 2000 and len(cfg.seeds) == 20 and cfg.goal_switch == [(1000, (10, 3))]
    assert cfg.uses_cpd and cfg.eta == 0.0


def write_doc(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_negative_learning_rate_names_field(tmp_path):
    path = write_doc(tmp_path, {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC",
                                "agent": {"lr_critic": -0.1}})
    _, errors = validate_config(path)
    assert errors == ["agent.lr_critic: must be positive"]


def test_schedule_into_wall_is_rejected(tmp_path):
    path = write_doc(tmp_path, {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC",
                                "goal_switch": [{"episode": 1000, "goal": [6, 0]}]})
    _, errors = validate_config(path)
    assert len(errors) == 1 and errors[0].startswith("goal_switch[0].goal")


def test_schedule_must_increase(tmp_path):
    path = write_doc(tmp_path, {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC",
                                "goal_switch": [{"episode": 5, "goal": [10, 3]}, {"episode": 5, "goal": [6, 9]}]})
    _, errors = validate_config(path)
    assert errors == ["goal_switch[1].episode: schedule episodes must be strictly increasing"]


def test_schema_errors_carry_field_paths(tmp_path):
    path = write_doc(tmp_path, {"env": "maze", "env_config": "nowhere.json", "variant": "OC", "episodes": 0})
    _, errors = validate_config(path)
    assert any(e.startswith("env:") for e in errors)
    assert any(e.startswith("episodes:") for e in errors)
    path = write_doc(tmp_path, {"env": "fourrooms", "env_config": "nowhere.json", "variant": "OC",
                                "integration": {"tau": -1.0}})
    _, errors = validate_config(path)
    assert any(e.startswith("env_config: file not found") for e in errors)
    assert "integration.tau: must be positive" in errors


def test_relative_env_path_resolves_next_to_config(tmp_path):
    (tmp_path / "layout.json").write_text(json.dumps(fourrooms_to_dict(FourRoomsConfig())))
    path = write_doc(tmp_path, {"env": "fourrooms", "env_config": "layout.json", "variant": "OCD"})
    cfg, errors = validate_config(path)
    assert errors == [] and cfg.env_config == tmp_path / "layout.json"
    assert cfg.eta == 0.1 and cfg.hyper().eta == 0.1


def test_pinball_defaults():
    cfg = config_from_dict({"env": "pinball", "env_config": PINBALL, "variant": "OC"})
    assert (cfg.agent.lr_critic, cfg.agent.lr_theta, cfg.agent.lr_beta) == (1e-3, 1e-3, 1e-4)
    assert cfg.agent.temperature == 1.0 and cfg.agent.eps_option == 0.1 and cfg.agent.eps_decay == 0.9995
    assert cfg.goal_switch == []


# metrics ---------------------------------------------------------------------

def test_csv_header():
    assert ",".join(csv_header(4)) == ("seed,episode,steps,return,switches,mean_option_len,"
                                       "usage_0,usage_1,usage_2,usage_3,cpd_p,cpd_r,cpd_f1,wall_ms")


def test_record_usage_invariant():
    MetricsRecord(0, 0, 4, 0.0, 1, 2.0, np.array([0.25, 0.75]))
    with pytest.raises(ValueError):
        MetricsRecord(0, 0, 4, 0.0, 1, 2.0, np.array([0.5, 0.25]))


def test_room_map_and_reference_boundaries():
    rooms = room_map(CLASSIC_GRID)
    assert len(set(rooms[rooms >= 0].tolist())) == 4
    # walk east from the top-left room through its doorway into the top-right room
    path = [to_index((3, c)) for c in range(3, 9)]
    assert rooms[to_index((3, 6))] == -1
    assert room_boundaries(path, rooms).tolist() == [4]
    assert room_boundaries([to_index((3, 3))] * 5, rooms).tolist() == []


# runs ------------------------------------------------------------------------

def test_ten_episode_run(tmp_path):
    cfg = make_cfg(tmp_path)
    results = run(cfg)
    assert [r.ok for r in results] == [True]
    lines = read(results[0].csv).decode().splitlines()
    assert len(lines) == 11
    steps = [int(l.split(",")[2]) for l in lines[1:]]
    assert all(1 <= s <= 500 for s in steps)
    assert (tmp_path / "run" / "agent_seed0.npz").exists()


def test_same_config_twice_is_byte_identical(tmp_path):
    a = run(make_cfg(tmp_path, "a", variant="CPD-OC", episodes=8, integration=TINY_CPD, dump_boundaries_every=2))
    b = run(make_cfg(tmp_path, "b", variant="CPD-OC", episodes=8, integration=TINY_CPD, dump_boundaries_every=2))
    assert read(a[0].csv) == read(b[0].csv)
    for name in ("boundaries_seed0.csv", "prototypes_seed0.csv"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)
    rows = read(a[0].csv).decode().splitlines()[1:]
    assert any(r.split(",")[-2] != "" for r in rows)  # boundary accuracy recorded after warm-up


def test_parallel_matches_sequential(tmp_path):
    seq = run(make_cfg(tmp_path, "seq", seeds=[0, 1, 2], episodes=6))
    par = run(make_cfg(tmp_path, "par", seeds=[0, 1, 2], episodes=6), jobs=2)
    for s, p in zip(seq, par):
        assert read(s.csv) == read(p.csv)


def test_zero_weight_cpd_variant_reproduces_oc(tmp_path):
    oc = run(make_cfg(tmp_path, "oc", episodes=30))
    cpd = run(make_cfg(tmp_path, "cpd", variant="CPD-OC", episodes=30, integration={**TINY_CPD, **ZERO_WEIGHTS}))
    assert read(oc[0].csv) == read(cpd[0].csv)


def test_seed_offset(tmp_path):
    res = run(make_cfg(tmp_path, seeds=[0, 1], episodes=2), seed_offset=5)
    assert [r.seed for r in res] == [5, 6]
    assert (tmp_path / "run" / "metrics_seed6.csv").exists()


def test_goal_switch_is_applied(tmp_path, monkeypatch):
    cfg = make_cfg(tmp_path, episodes=3, goal_switch=[{"episode": 1, "goal": list(SWITCHED_GOAL)}])
    seen = []
    real = runner.run_episode

    def spy(agent, env, hooks=None):
        seen.append(env.cfg.goal)
        return real(agent, env, hooks)

    monkeypatch.setattr(runner, "run_episode", spy)
    run(cfg)
    assert seen == [(6, 9), SWITCHED_GOAL, SWITCHED_GOAL]


def test_failing_seed_does_not_stop_others(tmp_path, monkeypatch):
    real = runner._train

    def flaky(cfg, seed, out_dir, path):
        if seed == 1:
            raise FloatingPointError("diverged")
        return real(cfg, seed, out_dir, path)

    monkeypatch.setattr(runner, "_train", flaky)
    res = run(make_cfg(tmp_path, seeds=[0, 1, 2], episodes=2))
    assert [r.ok for r in res] == [True, False, True]
    assert "diverged" in res[1].error
    assert "FloatingPointError" in (tmp_path / "run" / "error_seed1.txt").read_text()
    assert "seed 1: FAILED" in (tmp_path / "run" / "run.log").read_text()


def test_pinball_cpd_run(tmp_path):
    geometry = json.loads(Path(PINBALL).read_text())
    geometry["step_cap"] = 60
    env_path = tmp_path / "pinball.json"
    env_path.write_text(json.dumps(geometry))
    cfg = config_from_dict({"env": "pinball", "env_config": str(env_path), "variant": "CPD-OCD", "episodes": 6,
                            "seeds": [0], "integration": TINY_CPD, "output_dir": str(tmp_path / "pb")})
    res = run(cfg)
    assert res[0].ok, res[0].error
    rows = read(res[0].csv).decode().splitlines()[1:]
    assert len(rows) == 6 and all(r.split(",")[-2] == "" for r in rows)  # no reference boundaries on Pinball
    assert (tmp_path / "pb" / "cpd_seed0.npz").exists()


# report ----------------------------------------------------------------------

def fake_run(name, steps, schedule=((1, (10, 3)),), returns=None):
    steps = np.asarray(steps, dtype=float)
    return RunData(name, "fourrooms", Path(LAYOUT), list(schedule), list(range(len(steps))), steps,
                   -steps if returns is None else np.asarray(returns, dtype=float), np.ones_like(steps))


def test_report_against_itself_is_zero():
    rep = summarize([fake_run("A", [[10, 20, 30]]), fake_run("B", [[10, 20, 30]])])
    assert all(v == 0.0 for v in rep.improvement[("B", "A")].values())


def test_half_steps_is_fifty_percent():
    rep = summarize([fake_run("base", [[10, 20, 40], [30, 20, 40]]), fake_run("var", [[5, 10, 20], [15, 10, 20]])])
    assert rep.improvement[("var", "base")] == {"pre-switch": 50.0, "post-switch": 50.0, "overall": 50.0}
    assert improvement(200.0, 50.0) == 75.0


def test_three_row_aggregates_by_hand():
    rep = summarize([fake_run("base", [[12, 30, 18]]), fake_run("var", [[9, 15, 27]])])
    assert rep.phases == {"pre-switch": (0, 1), "post-switch": (1, 3), "overall": (0, 3)}
    assert rep.mean_steps["base"] == {"pre-switch": 12.0, "post-switch": 24.0, "overall": 20.0}
    assert rep.mean_steps["var"] == {"pre-switch": 9.0, "post-switch": 21.0, "overall": 17.0}
    assert rep.improvement[("var", "base")]["overall"] == pytest.approx(15.0)
    assert rep.improvement[("var", "base")]["post-switch"] == pytest.approx(12.5)
    assert rep.efficiency["var"]["overall"] == pytest.approx(9 / 17)
    assert rep.median_return["base"] == -18.0


def test_efficiency_uses_bfs_optimum():
    opt = graph_distance(CLASSIC_GRID, (3, 3), (6, 9))
    switched = graph_distance(CLASSIC_GRID, (3, 3), SWITCHED_GOAL)
    rep = summarize([fake_run("a", [[18, 18, 18]])])
    assert rep.optimal.tolist() == [opt, switched, switched]
    assert rep.efficiency["a"]["pre-switch"] == opt / 18


def test_mismatched_episode_counts():
    with pytest.raises(AlignmentError):
        summarize([fake_run("a", [[1, 2, 3]]), fake_run("b", [[1, 2]])])


def test_smoothing_is_trailing_mean():
    assert smooth(np.array([2.0, 4.0, 6.0, 8.0]), window=2).tolist() == [2.0, 3.0, 5.0, 7.0]


def test_write_report_outputs(tmp_path):
    a = run(make_cfg(tmp_path, "a", seeds=[0, 1], episodes=5))
    b = run(make_cfg(tmp_path, "b", name="OCD4", variant="OCD", seeds=[0, 1], episodes=5))
    assert a and b
    rep = write_report([tmp_path / "a", tmp_path / "b"], tmp_path / "rep")
    md = (tmp_path / "rep" / "summary.md").read_text()
    assert "| OC |" in md and "| OCD4 |" in md and "efficiency" in md
    svg = (tmp_path / "rep" / "learning_curves.svg").read_text()
    assert svg.startswith("<?xml") and "Optimal" in svg
    write_report([tmp_path / "a", tmp_path / "b"], tmp_path / "rep2")
    assert read(tmp_path / "rep" / "learning_curves.svg") == read(tmp_path / "rep2" / "learning_curves.svg")
    assert rep.names == ["OC", "OCD4"]
    assert load_run(tmp_path / "a").steps.shape == (2, 5)
    assert markdown_table(rep) == md


# oracle ----------------------------------------------------------------------

def test_fourrooms_oracle():
    out = oracle(LAYOUT)
    assert 8 <= out["optimal_steps"] <= 10
    assert out["optimal_steps"] == graph_distance(CLASSIC_GRID, (3, 3), (6, 9))


def test_adjacent_goal_oracle(tmp_path):
    path = tmp_path / "adj.json"
    path.write_text(json.dumps({"grid": list(CLASSIC_GRID), "start": [3, 3], "goal": [3, 4]}))
    assert oracle(path)["optimal_steps"] == 1


def test_unreachable_goal_oracle(tmp_path):
    grid = list(CLASSIC_GRID)
    grid[1] = "#.#...#.....#"
    grid[2] = "###...#.....#"
    path = tmp_path / "pocket.json"
    path.write_text(json.dumps({"grid": grid, "start": [1, 1], "goal": [6, 9]}))
    with pytest.raises(NoPathError):
        oracle(path)


def test_pinball_random_floor_is_negative():
    out = oracle(PINBALL)
    assert out["episodes"] == 50 and out["random_return"] < 0
    assert out == oracle(PINBALL)  # seeded


# cli -------------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(CONFIGS / "fourrooms-cpdoc4.json")]) == 0
    assert json.loads(capsys.readouterr().out)["integration"]["warmup"] == 200
    bad = write_doc(tmp_path, {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC", "agent": {"lr_theta": -1}})
    assert cli.main(["validate", "--config", str(bad)]) == 1
    assert "agent.lr_theta" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(bad)]) == 1
    assert cli.main(["oracle", "--env", LAYOUT]) == 0
    assert json.loads(capsys.readouterr().out)["optimal_steps"] == 9

    good = write_doc(tmp_path, {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC", "episodes": 3,
                                "seeds": [0], "output_dir": str(tmp_path / "r1")})
    assert cli.main(["train", "--config", str(good)]) == 0
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"env": "fourrooms", "env_config": LAYOUT, "variant": "OC", "episodes": 4,
                                 "seeds": [0], "output_dir": str(tmp_path / "r2")}))
    assert cli.main(["train", "--config", str(other)]) == 0
    assert cli.main(["report", str(tmp_path / "r1"), str(tmp_path / "r2"), "--out", str(tmp_path / "rep")]) == 2
    assert cli.main(["report", str(tmp_path / "r1"), "--out", str(tmp_path / "rep")]) == 0
    assert cli.main(["cpd-eval", "--run", str(tmp_path / "r1")]) == 0


def test_cli_train_reports_failed_seed(tmp_path, monkeypatch):
    monkeypatch.setattr(runner, "_train", lambda *a: (_ for _ in ()).throw(RuntimeError("boom")))
    good = write_doc(tmp_path, {"env": "fourrooms", "env_config": LAYOUT, "variant": "OC", "episodes": 3,
                                "seeds": [0], "output_dir": str(tmp_path / "r")})
    assert cli.main(["train", "--config", str(good)]) == 2
