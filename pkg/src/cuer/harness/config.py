"""Experiment configuration files.

Grammar: INI-style sections holding ``key = value`` lines; ``#`` and ``;``
start comments. Keys before the first section header belong to
``[experiment]``. Sections and their keys::

    [experiment]  env, sampler, capacity, batch_size, total_steps,
                  learning_starts, eval_interval, eval_episodes, seeds,
                  out_dir, replay_log, label
    [sampler]     alpha, beta0, eps_per, eps_min, stratified,
                  per_occurrence, importance_weights
    [agent]       gamma, tau, policy_delay, target_noise, noise_clip,
                  explore_noise, actor_lr, critic_lr, hidden, grad_clip,
                  action_l2
    [grid]        samplers, capacities   (compare only)

Lists (``seeds``, ``hidden``, ``samplers``, ``capacities``) are comma
separated. Booleans accept true/false/yes/no/1/0.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Optional

from ..envs import ENV_NAMES
from ..errors import ConfigError, InvalidArgument
from ..samplers import SAMPLER_NAMES
from ..td3 import Td3Config


@dataclass
class SamplerParams:
    alpha: float = 0.6
    beta0: float = 0.4
    eps_per: float = 1e-3
    eps_min: float = 1.0
    stratified: bool = False
    per_occurrence: bool = True
    importance_weights: bool = True


@dataclass
class ExperimentConfig:
    env: str = "pointmass"
    sampler: str = "cuer"
    capacity: int = 100_000
    batch_size: int = 64
    total_steps: int = 30_000
    learning_starts: int = 1000
    eval_interval: int = 1000
    eval_episodes: int = 10
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str = "runs"
    replay_log: bool = False
    label: str = ""
    sampler_params: SamplerParams = field(default_factory=SamplerParams)
    agent: Td3Config = field(default_factory=Td3Config)

    @property
    def name(self) -> str:
        return self.label or self.sampler

    def agent_config(self) -> Td3Config:
        return dataclasses.replace(self.agent, batch_size=self.batch_size)

    def validate(self) -> "ExperimentConfig":
        if self.env not in ENV_NAMES:
            raise ConfigError("experiment.env", f"unknown env {self.env!r}; expected {ENV_NAMES}")
        if self.sampler not in SAMPLER_NAMES:
            raise ConfigError("experiment.sampler", f"unknown sampler {self.sampler!r}; expected {SAMPLER_NAMES}")
        for key in ("capacity", "batch_size", "eval_interval", "eval_episodes"):
            if getattr(self, key) < 1:
                raise ConfigError(f"experiment.{key}", "must be >= 1")
        for key in ("total_steps", "learning_starts"):
            if getattr(self, key) < 0:
                raise ConfigError(f"experiment.{key}", "must be >= 0")
        if self.capacity < self.batch_size:
            raise ConfigError("experiment.capacity", f"capacity {self.capacity} < batch size {self.batch_size}")
        if not self.seeds:
            raise ConfigError("experiment.seeds", "need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("experiment.seeds", "seeds must be distinct")
        sp = self.sampler_params
        if not 0.0 <= sp.alpha <= 1.0:
            raise ConfigError("sampler.alpha", "must lie in [0, 1]")
        if not 0.0 <= sp.beta0 <= 1.0:
            raise ConfigError("sampler.beta0", "must lie in [0, 1]")
        if sp.eps_per <= 0:
            raise ConfigError("sampler.eps_per", "must be > 0")
        if not 0.0 <= sp.eps_min <= self.batch_size:
            raise ConfigError("sampler.eps_min", "must lie in [0, batch_size]")
        try:
            self.agent_config().validate()
        except InvalidArgument as exc:
            raise ConfigError("agent", str(exc)) from None
        return self


_SECTIONS = {
    "experiment": (ExperimentConfig, {"sampler_params", "agent"}),
    "sampler": (SamplerParams, set()),
    "agent": (Td3Config, {"batch_size"}),
}


def _convert(path: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _section_values(parser, section: str, cls, skip: set) -> dict:
    defaults = {f.name: f.default if f.default is not dataclasses.MISSING else f.default_factory()
                for f in fields(cls) if f.name not in skip}
    values = {}
    for key, raw in parser.items(section):
        path = f"{section}.{key}"
        if key not in defaults:
            raise ConfigError(path, "unknown key")
        values[key] = _convert(path, raw, defaults[key])
    return values


def _parser(text: str) -> configparser.ConfigParser:
    body = [ln.strip() for ln in text.splitlines()]
    body = [ln for ln in body if ln and not ln.startswith(("#", ";"))]
    if body and not body[0].startswith("["):
        text = "[experiment]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    return parser


def _build(parser, allowed_extra=()) -> ExperimentConfig:
    for section in parser.sections():
        if section not in _SECTIONS and section not in allowed_extra:
            raise ConfigError(section, "unknown section")
    parts = {}
    for section, (cls, skip) in _SECTIONS.items():
        parts[section] = _section_values(parser, section, cls, skip) if parser.has_section(section) else {}
    cfg = ExperimentConfig(
        **parts["experiment"],
        sampler_params=SamplerParams(**parts["sampler"]),
        agent=Td3Config(**parts["agent"]),
    )
    return cfg.validate()


def parse_config(text: str) -> ExperimentConfig:
    return _build(_parser(text))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def parse_grid(text: str) -> list[ExperimentConfig]:
    """Expand a grid file into one config per ``samplers x capacities`` cell."""
    parser = _parser(text)
    base = _build(parser, allowed_extra=("grid",))
    samplers = [base.sampler]
    capacities: list[Optional[int]] = [None]
    if parser.has_section("grid"):
        for key, raw in parser.items("grid"):
            if key == "samplers":
                samplers = [s.strip() for s in raw.split(",") if s.strip()]
            elif key == "capacities":
                capacities = [int(_convert("grid.capacities", c, 0)) for c in raw.split(",") if c.strip()]
            else:
                raise ConfigError(f"grid.{key}", "unknown key")
    out = []
    for sampler in samplers:
        for cap in capacities:
            label = sampler if cap is None else f"{sampler}@{cap}"
            cfg = dataclasses.replace(
                base, sampler=sampler, capacity=base.capacity if cap is None else cap, label=label,
                sampler_params=dataclasses.replace(base.sampler_params),
                agent=dataclasses.replace(base.agent),
            )
            try:
                out.append(cfg.validate())
            except ConfigError as exc:
                raise ConfigError(f"grid[{label}].{exc.path}", str(exc).split(": ", 1)[-1]) from None
    return out


def load_grid(path) -> list[ExperimentConfig]:
    with open(path) as fh:
        return parse_grid(fh.read())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config in the same grammar ``parse_config`` reads."""
    lines = ["[experiment]"]
    for f in fields(ExperimentConfig):
        if f.name in ("sampler_params", "agent"):
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    lines.append("[sampler]")
    for f in fields(SamplerParams):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.sampler_params, f.name))}")
    lines.append("[agent]")
    for f in fields(Td3Config):
        if f.name == "batch_size":
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg.agent, f.name))}")
    return "\n".join(lines) + "\n"
