"""Run and experiment configuration, plus the flat key=value spec format.

A spec file looks like::

    [experiment]
    name = hanoi
    seeds = 0 1 2
    output = out/hanoi

    [run]
    env = hanoi
    total_steps = 20000

    [variant base]
    grammar_iterations = 0

    [variant ag]

Keys under ``[run]`` override RunConfig defaults; each ``[variant X]``
section overrides ``[run]`` for that variant. Lines starting with ``#``
or ``;`` are comments.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .grammar import CALCULATORS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # environment
    env: str = "hanoi"
    n_disks: int = 3
    grid_map: str = ""
    step_penalty: float = -1.0
    max_episode_steps: int = 0  # 0: environment default

    # base learner
    estimator: str = "tabular"
    gamma: float = 0.99
    alpha: float = 0.5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5000
    batch_size: int = 32
    target_refresh: int = 200
    initial_random_steps: int = 1000
    buffer_capacity: int = 50000

    # action grammar
    steps_before_grammar: int = 5000
    eval_period: int = 10
    evaluation_episodes: int = 5
    best_fraction: float = 0.2
    abandon_z: float | None = 1.0  # None: Abandon Ship off
    abandon_decay: float = 0.99
    abandon_warmup: int = 10
    exploration_bonus: float = 4.0
    calculator: str = "sequitur"
    k: int = 2
    replay: str = "balanced"
    har: bool = True
    transfer: bool = True
    post_inference_random_steps: int = 500
    grammar_iterations: int = 1

    total_steps: int = 20000
    early_stop: bool = False
    seed: int = 0

    def validate(self) -> RunConfig:
        positive = ("batch_size", "target_refresh", "buffer_capacity", "steps_before_grammar",
                    "eval_period", "evaluation_episodes", "total_steps", "abandon_warmup")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        nonneg = ("initial_random_steps", "post_inference_random_steps", "grammar_iterations",
                  "epsilon_decay_steps", "max_episode_steps")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.env not in ("hanoi", "grid"):
            raise ConfigError(f"unknown env {self.env!r}")
        if self.env == "grid" and not self.grid_map:
            raise ConfigError("grid env needs grid_map")
        if self.estimator not in ("tabular", "linear"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.calculator not in CALCULATORS:
            raise ConfigError(f"calculator must be one of {CALCULATORS}")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.replay not in ("balanced", "uniform"):
            raise ConfigError("replay must be 'balanced' or 'uniform'")
        if not (0.0 <= self.epsilon_end <= 1.0 and 0.0 <= self.epsilon_start <= 1.0):
            raise ConfigError("epsilon must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.alpha <= 1.0:
            raise ConfigError("gamma and alpha must lie in (0, 1]")
        if self.exploration_bonus < 1.0:
            raise ConfigError("exploration_bonus must be at least 1")
        if self.abandon_z is not None and self.abandon_z < 0:
            raise ConfigError("abandon_z must be non-negative or off")
        if not 0.0 < self.best_fraction <= 1.0:
            raise ConfigError("best_fraction must lie in (0, 1]")
        return self

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _coerce(name: str, raw: str) -> Any:
    f = RUN_FIELDS.get(name)
    if f is None:
        raise ConfigError(f"unknown run key {name!r}")
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    raw = raw.strip()
    try:
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() in ("off", "none", "") else float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def format_value(v: Any) -> str:
    if v is None:
        return "off"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


RUN_FIELDS = {f.name: f for f in fields(RunConfig)}


def run_config_from(overrides: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    values = {k: _coerce(k, v) for k, v in overrides.items()}
    return (base or RunConfig()).replace(**values)


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str = "out"
    parallelism: int = 0  # 0: one worker per seed
    run: dict[str, str] = field(default_factory=dict)
    variants: dict[str, dict[str, str]] = field(default_factory=dict)

    def validate(self) -> ExperimentSpec:
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        for label in self.variants:
            if not label or any(c in label for c in "/\\ "):
                raise ConfigError(f"bad variant label {label!r}")
        for cfg in self.run_configs().values():
            cfg.validate()
        return self

    def base_config(self) -> RunConfig:
        return run_config_from(self.run)

    def run_configs(self) -> dict[str, RunConfig]:
        """One RunConfig per variant label (a single 'default' if none)."""
        base = self.base_config()
        if not self.variants:
            return {"default": base}
        return {label: run_config_from(ov, base) for label, ov in self.variants.items()}

    def output_dir(self) -> Path:
        return Path(os.environ.get("ACTIONGRAM_OUT") or self.output)

    def workers(self) -> int:
        return self.parallelism or len(self.seeds)


def parse_spec(text: str) -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=None, strict=True,
                                   default_section="__defaults__")
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    spec = ExperimentSpec()
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "experiment":
            for key, raw in items.items():
                if key == "name":
                    spec.name = raw
                elif key == "seeds":
                    try:
                        spec.seeds = [int(s) for s in raw.replace(",", " ").split()]
                    except ValueError:
                        raise ConfigError(f"bad seeds: {raw!r}") from None
                elif key == "output":
                    spec.output = raw
                elif key == "parallelism":
                    try:
                        spec.parallelism = int(raw)
                    except ValueError:
                        raise ConfigError(f"bad parallelism: {raw!r}") from None
                else:
                    raise ConfigError(f"unknown experiment key {key!r}")
        elif section == "run":
            for key in items:
                _coerce(key, items[key])
            spec.run = items
        elif section.startswith("variant "):
            label = section[len("variant "):].strip()
            if label in spec.variants:
                raise ConfigError(f"duplicate variant {label!r}")
            for key in items:
                _coerce(key, items[key])
            spec.variants[label] = items
        else:
            raise ConfigError(f"unknown section [{section}]")
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_spec(text).validate()


def format_spec(spec: ExperimentSpec) -> str:
    lines = ["[experiment]", f"name = {spec.name}", "seeds = " + " ".join(map(str, spec.seeds)),
             f"output = {spec.output}"]
    if spec.parallelism:
        lines.append(f"parallelism = {spec.parallelism}")
    if spec.run:
        lines += ["", "[run]"] + [f"{k} = {v}" for k, v in spec.run.items()]
    for label, ov in spec.variants.items():
        lines += ["", f"[variant {label}]"] + [f"{k} = {v}" for k, v in ov.items()]
    return "\n".join(lines) + "\n"


def format_run_config(cfg: RunConfig) -> str:
    return "\n".join(f"{f.name} = {format_value(getattr(cfg, f.name))}" for f in fields(cfg)) + "\n"
