"""Aggregate run directories into phase tables, improvement figures and learning curves."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..envs import fourrooms_set_goal, load_fourrooms, optimal_steps

SMOOTH_WINDOW = 20
POST_SWITCH_EPISODES = 200


class AlignmentError(ValueError):
    pass


@dataclass
class RunData:
    name: str
    env: str
    env_config: Path
    schedule: list[tuple[int, tuple]]
    seeds: list[int]
    steps: np.ndarray  # (seeds, episodes)
    returns: np.ndarray
    mean_option_len: np.ndarray

    @property
    def episodes(self) -> int:
        return self.steps.shape[1]


def _read_metrics(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise AlignmentError(f"{path}: no episodes recorded")
    return {k: np.array([float(r[k]) for r in rows]) for k in ("episode", "steps", "return", "mean_option_len")}


def load_run(run_dir) -> RunData:
    run_dir = Path(run_dir)
    cfg = json.loads((run_dir / "config.json").read_text())
    files = sorted(run_dir.glob("metrics_seed*.csv"), key=lambda p: int(p.stem.removeprefix("metrics_seed")))
    if not files:
        raise FileNotFoundError(f"{run_dir}: no metrics CSVs")
    data = [_read_metrics(f) for f in files]
    lengths = {len(d["steps"]) for d in data}
    if len(lengths) != 1:
        raise AlignmentError(f"{run_dir}: seeds recorded different episode counts {sorted(lengths)}")
    schedule = [(int(s["episode"]), tuple(s["goal"])) for s in cfg.get("goal_switch", [])]
    return RunData(
        name=cfg.get("name", cfg["variant"]), env=cfg["env"], env_config=Path(cfg["env_config"]),
        schedule=schedule, seeds=[int(f.stem.removeprefix("metrics_seed")) for f in files],
        steps=np.stack([d["steps"] for d in data]), returns=np.stack([d["return"] for d in data]),
        mean_option_len=np.stack([d["mean_option_len"] for d in data]))


def smooth(x: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Trailing moving average along the last axis; the first entries average what is available."""
    x = np.asarray(x, dtype=np.float64)
    c = np.cumsum(x, axis=-1)
    out = c.copy()
    out[..., window:] = c[..., window:] - c[..., :-window]
    n = np.minimum(np.arange(1, x.shape[-1] + 1), window)
    return out / n


def phase_slices(episodes: int, schedule) -> dict[str, slice]:
    if schedule:
        switch = schedule[0][0]
        phases = {"pre-switch": slice(0, min(switch, episodes)),
                  "post-switch": slice(switch, min(switch + POST_SWITCH_EPISODES, episodes))}
    else:
        phases = {}
    phases["overall"] = slice(0, episodes)
    return {k: v for k, v in phases.items() if v.stop > v.start}


def optimal_per_episode(run: RunData) -> np.ndarray | None:
    """BFS optimum for the goal active in each episode (Four-Rooms only)."""
    if run.env != "fourrooms":
        return None
    env_cfg = load_fourrooms(run.env_config)
    out = np.full(run.episodes, float(optimal_steps(env_cfg)))
    for ep, goal in run.schedule:
        if ep < run.episodes:
            out[ep:] = optimal_steps(fourrooms_set_goal(env_cfg, tuple(int(v) for v in goal)))
    return out


def improvement(baseline: float, variant: float) -> float:
    """Percentage reduction of mean steps relative to the baseline."""
    return 100.0 * (baseline - variant) / baseline


@dataclass
class SummaryReport:
    names: list[str]
    episodes: int
    phases: dict[str, tuple[int, int]]
    mean_steps: dict[str, dict[str, float]]
    mean_return: dict[str, dict[str, float]]
    median_return: dict[str, float]
    mean_option_len: dict[str, float]
    curves: dict[str, tuple[np.ndarray, np.ndarray]]  # smoothed mean and std over seeds
    improvement: dict[tuple[str, str], dict[str, float]]  # (variant, baseline) -> phase -> %
    efficiency: dict[str, dict[str, float]] = field(default_factory=dict)
    optimal: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "episodes": self.episodes,
            "phases": {k: list(v) for k, v in self.phases.items()},
            "mean_steps": self.mean_steps,
            "mean_return": self.mean_return,
            "median_return": self.median_return,
            "mean_option_len": self.mean_option_len,
            "improvement": {f"{v} vs {b}": d for (v, b), d in self.improvement.items()},
            "efficiency": self.efficiency,
            "optimal": None if self.optimal is None else sorted(set(self.optimal.tolist())),
        }


def summarize(runs: list[RunData]) -> SummaryReport:
    if not runs:
        raise ValueError("report needs at least one run")
    episodes = {r.episodes for r in runs}
    if len(episodes) != 1:
        raise AlignmentError(f"runs have different episode counts: {sorted(episodes)}")
    names = [r.name for r in runs]
    if len(set(names)) != len(names):
        names = [f"{r.name}#{i}" for i, r in enumerate(runs)]
    first = runs[0]
    phases = phase_slices(first.episodes, first.schedule)
    optimal = optimal_per_episode(first)
    mean_steps, mean_return, efficiency = {}, {}, {}
    for name, run in zip(names, runs):
        mean_steps[name] = {p: float(run.steps[:, s].mean()) for p, s in phases.items()}
        mean_return[name] = {p: float(run.returns[:, s].mean()) for p, s in phases.items()}
        if optimal is not None:
            efficiency[name] = {p: float(optimal[s].mean()) / mean_steps[name][p] for p, s in phases.items()}
    imp = {(v, b): {p: improvement(mean_steps[b][p], mean_steps[v][p]) for p in phases}
           for v in names for b in names}
    curves = {}
    for name, run in zip(names, runs):
        sm = smooth(run.steps)
        curves[name] = (sm.mean(axis=0), sm.std(axis=0))
    return SummaryReport(
        names=names, episodes=first.episodes, phases={p: (s.start, s.stop) for p, s in phases.items()},
        mean_steps=mean_steps, mean_return=mean_return,
        median_return={n: float(np.median(r.returns)) for n, r in zip(names, runs)},
        mean_option_len={n: float(r.mean_option_len.mean()) for n, r in zip(names, runs)},
        curves=curves, improvement=imp, efficiency=efficiency, optimal=optimal)


def markdown_table(rep: SummaryReport) -> str:
    base = rep.names[0]
    phases = list(rep.phases)
    head = ["variant"] + [f"steps {p}" for p in phases] + [f"vs {base} {p}" for p in phases]
    if rep.efficiency:
        head += [f"efficiency {p}" for p in phases]
    head += ["mean return", "median return", "mean option length"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for n in rep.names:
        cells = [n] + [f"{rep.mean_steps[n][p]:.2f}" for p in phases]
        cells += [f"{rep.improvement[(n, base)][p]:+.1f}%" for p in phases]
        if rep.efficiency:
            cells += [f"{rep.efficiency[n][p]:.3f}" for p in phases]
        cells += [f"{rep.mean_return[n]['overall']:.2f}", f"{rep.median_return[n]:.2f}",
                  f"{rep.mean_option_len[n]:.2f}"]
        lines.append("| " + " | ".join(cells) + " |")
    phase_note = ", ".join(f"{p}: episodes {a}-{b - 1}" for p, (a, b) in rep.phases.items())
    lines += ["", f"Phases: {phase_note}. Improvement is (baseline - variant) / baseline on mean steps."]
    if rep.optimal is not None:
        lines.append(f"Optimal steps (BFS): {', '.join(str(int(v)) for v in sorted(set(rep.optimal.tolist())))}; "
                     "efficiency = optimal / mean steps.")
    return "\n".join(lines) + "\n"


def plot_curves(rep: SummaryReport, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "cpdoc"  # stable element ids
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(rep.episodes)
    for n in rep.names:
        mean, std = rep.curves[n]
        ax.plot(x, mean, label=n, linewidth=1.2)
        ax.fill_between(x, mean - std, mean + std, alpha=0.15)
    if rep.optimal is not None:
        ax.plot(x, rep.optimal, "k--", linewidth=1.0, label="Optimal")
    ax.set_xlabel("episode")
    ax.set_ylabel(f"steps per episode (moving average, {SMOOTH_WINDOW})")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(run_dirs, out_dir) -> SummaryReport:
    rep = summarize([load_run(d) for d in run_dirs])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.md").write_text(markdown_table(rep))
    (out / "summary.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    plot_curves(rep, out / "learning_curves.svg")
    return rep
