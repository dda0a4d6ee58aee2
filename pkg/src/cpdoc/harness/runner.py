"""Seeded training runs: one environment, agent and optional detector per seed.

Each seed streams one CSV row per episode. Every byte of the CSV is a function
of (config, seed) unless ``record_wall_time`` is set, in which case the
``wall_ms`` column carries measured times.
"""
from __future__ import annotations

import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cpd import cpd_accuracy, save_model
from ..envs import FourRooms, Pinball, fourier_features, normalize_state
from ..envs.fourrooms import GRID_SIZE, N_STATES, doorways
from ..integration import CPDPipeline
from ..oc import make_linear_agent, make_tabular_agent, run_episode, save_checkpoint
from .config import ExperimentConfig

log = logging.getLogger("cpdoc.harness")

BOUNDARY_TOLERANCE = 2


def csv_header(n_options: int) -> list[str]:
    usage = [f"usage_{i}" for i in range(n_options)]
    return ["seed", "episode", "steps", "return", "switches", "mean_option_len", *usage,
            "cpd_p", "cpd_r", "cpd_f1", "wall_ms"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class MetricsRecord:
    seed: int
    episode: int
    steps: int
    ret: float
    switches: int
    mean_option_len: float
    usage: np.ndarray
    cpd_p: float | None = None
    cpd_r: float | None = None
    cpd_f1: float | None = None
    wall_ms: float = 0.0

    def __post_init__(self):
        if self.steps > 0 and abs(float(np.sum(self.usage)) - 1.0) > 1e-9:
            raise ValueError(f"usage fractions sum to {np.sum(self.usage)}")

    def row(self) -> str:
        vals = [self.seed, self.episode, self.steps, self.ret, self.switches, self.mean_option_len,
                *[float(u) for u in self.usage], self.cpd_p, self.cpd_r, self.cpd_f1, self.wall_ms]
        return ",".join(_fmt(v) for v in vals)


def room_map(grid) -> np.ndarray:
    """Room id per state index: connected free cells once doorways are removed.
    Walls and doorways get -1."""
    doors = set(doorways(grid))
    rooms = np.full(N_STATES, -1, dtype=np.int64)
    next_id = 0
    for r in range(GRID_SIZE):
        for c in range(GRID_SIZE):
            if grid[r][c] == "#" or (r, c) in doors or rooms[r * GRID_SIZE + c] >= 0:
                continue
            stack = [(r, c)]
            rooms[r * GRID_SIZE + c] = next_id
            while stack:
                cr, cc = stack.pop()
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nr, nc = cr + dr, cc + dc
                    if not (0 <= nr < GRID_SIZE and 0 <= nc < GRID_SIZE):
                        continue
                    if grid[nr][nc] == "#" or (nr, nc) in doors or rooms[nr * GRID_SIZE + nc] >= 0:
                        continue
                    rooms[nr * GRID_SIZE + nc] = next_id
                    stack.append((nr, nc))
            next_id += 1
    return rooms


def room_boundaries(states, rooms: np.ndarray) -> np.ndarray:
    """Steps whose state lies in a different room than the last room visited;
    doorway cells keep the previous room."""
    out = []
    current = -1
    for t, s in enumerate(np.asarray(states, dtype=np.int64)):
        room = rooms[s]
        if room < 0:
            continue
        if current >= 0 and room != current:
            out.append(t)
        current = room
    return np.array(out, dtype=np.int64)


def pinball_features(state) -> np.ndarray:
    return fourier_features(normalize_state(state))


def build_env(cfg: ExperimentConfig, rng: np.random.Generator):
    env_cfg = cfg.load_env()
    return FourRooms(env_cfg, rng) if cfg.env == "fourrooms" else Pinball(env_cfg, rng)


def build_agent(cfg: ExperimentConfig, env, rng: np.random.Generator):
    hyper = cfg.hyper()
    if cfg.env == "fourrooms":
        return make_tabular_agent(N_STATES, env.n_actions, cfg.n_options, hyper, rng)
    return make_linear_agent(256, env.n_actions, cfg.n_options, hyper, rng, pinball_features)


def build_pipeline(cfg: ExperimentConfig, agent, env, rng: np.random.Generator) -> CPDPipeline:
    if cfg.env == "fourrooms":
        return CPDPipeline(agent, cfg.integration, rng, env.n_actions, tabular_states=N_STATES)
    return CPDPipeline(agent, cfg.integration, rng, env.n_actions, state_dim=env.state_dim)


@dataclass
class SeedResult:
    seed: int
    ok: bool
    csv: Path
    error: str | None = None


def metrics_path(out_dir: Path, seed: int) -> Path:
    return Path(out_dir) / f"metrics_seed{seed}.csv"


def run_seed(cfg: ExperimentConfig, seed: int, out_dir: Path | None = None) -> SeedResult:
    """Train one seed, streaming its CSV. Any error aborts only this seed."""
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = metrics_path(out_dir, seed)
    try:
        _train(cfg, seed, out_dir, path)
    except Exception as exc:  # reported per seed; the other seeds carry on
        reason = f"{type(exc).__name__}: {exc}"
        (out_dir / f"error_seed{seed}.txt").write_text(traceback.format_exc())
        log.error("seed %d aborted: %s", seed, reason)
        return SeedResult(seed, False, path, reason)
    return SeedResult(seed, True, path)


def _train(cfg: ExperimentConfig, seed: int, out_dir: Path, path: Path) -> None:
    env_rng, agent_rng, cpd_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    env = build_env(cfg, env_rng)
    agent = build_agent(cfg, env, agent_rng)
    pipe = build_pipeline(cfg, agent, env, cpd_rng) if cfg.uses_cpd else None
    rooms = room_map(env.cfg.grid) if cfg.env == "fourrooms" else None
    schedule = dict(cfg.goal_switch)
    dump_every = cfg.dump_boundaries_every
    bfile = pfile = None
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(csv_header(cfg.n_options)) + "\n")
            if pipe is not None and dump_every:
                bfile = open(out_dir / f"boundaries_seed{seed}.csv", "w")
                bfile.write("episode,t,p_t,b_t\n")
            for ep in range(cfg.episodes):
                if ep in schedule:
                    env.set_goal(schedule[ep])
                start = time.perf_counter()
                traj, stats = run_episode(agent, env, pipe.hooks() if pipe else None)
                report = pipe.after_episode(traj) if pipe else None
                wall = (time.perf_counter() - start) * 1000.0 if cfg.record_wall_time else 0.0
                acc = None
                if report is not None and report.boundaries is not None and rooms is not None:
                    acc = cpd_accuracy(report.boundaries, room_boundaries(traj.states, rooms), BOUNDARY_TOLERANCE)
                rec = MetricsRecord(seed, ep, stats.steps, stats.ret, stats.switches, stats.mean_option_len,
                                    stats.usage, *((acc.precision, acc.recall, acc.f1) if acc else (None,) * 3),
                                    wall_ms=wall)
                fh.write(rec.row() + "\n")
                if bfile is not None and report.p is not None and ep % dump_every == 0:
                    ind = np.zeros(len(report.p), dtype=np.int64)
                    ind[report.boundaries] = 1
                    for t, (p, b) in enumerate(zip(report.p, ind)):
                        bfile.write(f"{ep},{t},{_fmt(p)},{b}\n")
                if report is not None and report.refreshed:
                    pfile = pfile or _open_prototypes(out_dir, seed, pipe)
                    tracker = pipe.tracker
                    for k, proto in enumerate(tracker.subgoals.prototypes):
                        vals = ",".join(_fmt(v) for v in proto)
                        pfile.write(f"{tracker.refreshes},{k},{vals},{_fmt(tracker.last_displacement)}\n")
    finally:
        for f in (bfile, pfile):
            if f is not None:
                f.close()
    if cfg.checkpoints:
        save_checkpoint(agent, out_dir / f"agent_seed{seed}.npz", extra={"seed": seed, "episodes": cfg.episodes})
        if pipe is not None:
            save_model(pipe.model, out_dir / f"cpd_seed{seed}.npz", extra={"seed": seed})


def _open_prototypes(out_dir: Path, seed: int, pipe: CPDPipeline):
    dim = pipe.tracker.subgoals.prototypes.shape[1]
    fh = open(out_dir / f"prototypes_seed{seed}.csv", "w")
    fh.write(",".join(["refresh", "k", *[f"e{i}" for i in range(dim)], "displacement"]) + "\n")
    return fh


def _worker(args):
    cfg, seed, out_dir = args
    return run_seed(cfg, seed, out_dir)


def run(cfg: ExperimentConfig, jobs: int = 1, seed_offset: int = 0) -> list[SeedResult]:
    """Run every seed of ``cfg``; seeds fan out over ``jobs`` worker processes."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [s + seed_offset for s in cfg.seeds]
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    tasks = [(cfg, s, out_dir) for s in seeds]
    if jobs <= 1 or len(seeds) == 1:
        results = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, tasks))
    failed = [r for r in results if not r.ok]
    with open(out_dir / "run.log", "w") as fh:
        for r in results:
            fh.write(f"seed {r.seed}: {'ok' if r.ok else 'FAILED ' + r.error}\n")
    if failed:
        log.warning("%d of %d seeds failed", len(failed), len(results))
    return results
