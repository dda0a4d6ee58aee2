"""Experiment configuration: JSON schema checks, invariants and resolved defaults."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import jsonschema

from ..envs import ConfigError, FourRoomsConfig, PinballConfig, fourrooms_set_goal, load_fourrooms, pinball_load
from ..envs.fourrooms import SWITCHED_GOAL
from ..integration import IntegrationConfig, IntegrationConfigError
from ..oc import AgentHyper

SCHEMA_PATH = Path(__file__).with_name("experiment.schema.json")
VARIANTS = ("OC", "OCD", "CPD-OC", "CPD-OCD")
ENVS = ("fourrooms", "pinball")

PINBALL_AGENT = dict(lr_critic=1e-3, lr_theta=1e-3, lr_beta=1e-4, temperature=1.0, eps_option=0.1,
                     eps_decay=0.9995)


class ExperimentConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def default_agent(env: str) -> AgentHyper:
    return AgentHyper(**PINBALL_AGENT) if env == "pinball" else AgentHyper()


def default_schedule(env: str) -> list[tuple[int, tuple]]:
    return [(1000, SWITCHED_GOAL)] if env == "fourrooms" else []


@dataclass
class ExperimentConfig:
    env: str
    env_config: Path
    variant: str
    name: str = ""
    n_options: int = 4
    episodes: int = 2000
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    goal_switch: list[tuple[int, tuple]] | None = None
    deliberation_cost: float = 0.1
    agent: AgentHyper | None = None
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    output_dir: Path = Path("runs")
    checkpoints: bool = True
    dump_boundaries_every: int = 0
    record_wall_time: bool = False

    def __post_init__(self):
        self.env_config = Path(self.env_config)
        self.output_dir = Path(self.output_dir)
        if not self.name:
            self.name = self.variant
        if self.agent is None:
            self.agent = default_agent(self.env)
        if self.goal_switch is None:
            self.goal_switch = default_schedule(self.env)

    @property
    def uses_cpd(self) -> bool:
        return self.variant.startswith("CPD")

    @property
    def eta(self) -> float:
        return self.deliberation_cost if self.variant.endswith("OCD") else 0.0

    def hyper(self) -> AgentHyper:
        return replace(self.agent, eta=self.eta)

    def load_env(self) -> FourRoomsConfig | PinballConfig:
        return load_fourrooms(self.env_config) if self.env == "fourrooms" else pinball_load(self.env_config)

    def to_dict(self) -> dict:
        """Effective configuration with every default resolved (JSON-ready)."""
        agent = asdict(self.agent)
        agent.pop("eta")
        return {
            "name": self.name,
            "env": self.env,
            "env_config": str(self.env_config),
            "variant": self.variant,
            "n_options": self.n_options,
            "episodes": self.episodes,
            "seeds": list(self.seeds),
            "goal_switch": [{"episode": e, "goal": list(g)} for e, g in self.goal_switch],
            "deliberation_cost": self.deliberation_cost,
            "agent": agent,
            "integration": self.integration.to_dict(),
            "output_dir": str(self.output_dir),
            "checkpoints": self.checkpoints,
            "dump_boundaries_every": self.dump_boundaries_every,
            "record_wall_time": self.record_wall_time,
        }


def _path(err: jsonschema.ValidationError) -> str:
    parts = [f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path]
    return "".join(parts).lstrip(".") or "<root>"


def schema_errors(doc) -> list[str]:
    schema = json.loads(SCHEMA_PATH.read_text())
    validator = jsonschema.Draft202012Validator(schema)
    found = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    return [f"{_path(e)}: {e.message}" for e in found]


def _check_goal(env: str, env_cfg, goal, where: str) -> str | None:
    try:
        if env == "fourrooms":
            if any(float(v) != int(v) for v in goal):
                return f"{where}: Four-Rooms goals are integer cells"
            fourrooms_set_goal(env_cfg, tuple(int(v) for v in goal))
        else:
            replace(env_cfg, goal=tuple(float(v) for v in goal))
    except ConfigError as exc:
        return f"{where}: {exc}"
    return None


def config_from_dict(doc: dict, base: Path | None = None) -> ExperimentConfig:
    """Build a config from a parsed document; raises ExperimentConfigError listing every problem."""
    errors = schema_errors(doc)
    if errors:
        raise ExperimentConfigError(errors)
    base = base or Path.cwd()
    env = doc["env"]
    env_path = Path(doc["env_config"])
    if not env_path.is_absolute():
        env_path = base / env_path
    env_cfg = None
    if not env_path.is_file():
        errors.append(f"env_config: file not found: {env_path}")
    else:
        try:
            env_cfg = load_fourrooms(env_path) if env == "fourrooms" else pinball_load(env_path)
        except (ConfigError, ValueError, KeyError) as exc:
            errors.append(f"env_config: {exc}")

    seeds = doc.get("seeds", 20)
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)

    schedule = None
    if "goal_switch" in doc:
        schedule = [(int(item["episode"]), tuple(item["goal"])) for item in doc["goal_switch"]]
        for i, (ep, goal) in enumerate(schedule):
            if i and ep <= schedule[i - 1][0]:
                errors.append(f"goal_switch[{i}].episode: schedule episodes must be strictly increasing")
            if env_cfg is not None:
                msg = _check_goal(env, env_cfg, goal, f"goal_switch[{i}].goal")
                if msg:
                    errors.append(msg)
        if env == "fourrooms":
            schedule = [(ep, tuple(int(v) for v in goal)) for ep, goal in schedule]

    agent = default_agent(env)
    overrides = doc.get("agent", {})
    if overrides:
        agent = replace(agent, **overrides)
    errors += [f"agent.{e}" for e in agent.validate()]

    integration = IntegrationConfig()
    try:
        integration = IntegrationConfig.from_dict(doc.get("integration", {}))
    except IntegrationConfigError as exc:
        errors += [f"integration.{e.strip()}" for e in str(exc).split(";")]

    name = doc.get("name", doc["variant"])
    out = Path(doc.get("output_dir", Path("runs") / name))  # relative to the working directory
    if errors:
        raise ExperimentConfigError(errors)
    return ExperimentConfig(
        env=env, env_config=env_path, variant=doc["variant"], name=name,
        n_options=doc.get("n_options", 4), episodes=doc.get("episodes", 2000), seeds=seeds,
        goal_switch=schedule, deliberation_cost=doc.get("deliberation_cost", 0.1), agent=agent,
        integration=integration, output_dir=out, checkpoints=doc.get("checkpoints", True),
        dump_boundaries_every=doc.get("dump_boundaries_every", 0),
        record_wall_time=doc.get("record_wall_time", False))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ExperimentConfigError([f"<file>: cannot read {path}: {exc.strerror}"]) from exc
    except json.JSONDecodeError as exc:
        raise ExperimentConfigError([f"<file>: invalid JSON at line {exc.lineno}: {exc.msg}"]) from exc
    return config_from_dict(doc, path.resolve().parent)


def validate_config(path) -> tuple[ExperimentConfig | None, list[str]]:
    try:
        return load_config(path), []
    except ExperimentConfigError as exc:
        return None, exc.errors

