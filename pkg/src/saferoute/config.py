"""Run configuration: an INI file with one section per module.

Every key has a typed default; unknown sections or keys are rejected, and
values are validated by building the per-module config objects.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .crime_index import DEFAULT_BANDWIDTH_MILES, DEFAULT_CELL_DEG
from .embeddings import SkipGramConfig, WalkConfig
from .evaluation import ROUTERS, ExperimentConfig
from .rewards import RewardConfig
from .training import TrainConfig

ENV_VAR = "SAFEROUTE_CONFIG"


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _strs(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"seed": (int, 0), "threads": (int, 1)},
    "crime": {
        "categories": (_strs, ("shooting", "assault", "robbery")),
        "cell_deg": (float, DEFAULT_CELL_DEG),
        "bandwidth": (float, DEFAULT_BANDWIDTH_MILES),
    },
    "embeddings": {
        "dim": (int, 64),
        "p": (float, 1.0),
        "q": (float, 1.0),
        "walk_length": (int, 40),
        "walks_per_node": (int, 10),
        "window": (int, 5),
        "negatives": (int, 5),
        "lr": (float, 0.025),
        "epochs": (int, 5),
    },
    "policy": {
        "h1": (int, 512),
        "h2": (int, 256),
        "lr": (float, 1e-3),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "eps": (float, 1e-8),
    },
    "training": {
        "pairs": (int, 1000),
        "hop_k": (int, 5),
        "episodes_per_epoch": (int, 2000),
        "epochs": (int, 60),
        "supervised_episodes_per_epoch": (int, 2000),
        "supervised_epochs": (int, 30),
        "rollouts": (int, 5),
        "max_len": (int, 40),
        "kappa": (float, 1.0),
    },
    "routing": {"beam": (int, 5), "max_len": (int, 40)},
    "evaluation": {
        "city": (str, "city"),
        "hops": (_ints, (5, 10)),
        "pairs": (int, 100),
        "seeds": (_ints, (0, 1, 2)),
        "routers": (_strs, ROUTERS),
    },
}


class ConfigError(ValueError):
    pass


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
        for sec, keys in (values or {}).items():
            for k, v in keys.items():
                self.set(sec, k, v)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        parse, _ = SCHEMA[section][key]
        if isinstance(value, str):
            try:
                value = parse(value)
            except ValueError:
                raise ConfigError(f"bad value for {section}.{key}: {value!r}") from None
        self.values[section][key] = value

    def override(self, assignment: str) -> None:
        """Apply ``section.key=value``."""
        name, sep, value = assignment.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {assignment!r} must look like section.key=value")
        self.set(section, key, value.strip())

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.set(section, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def from_env_or_default(cls, path=None) -> "RunConfig":
        path = path or os.environ.get(ENV_VAR)
        return cls.load(path) if path else cls()

    def validate(self) -> None:
        try:
            self.walk_config()
            self.skipgram_config()
            self.train_config()
            self.experiment_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        run, pol, rt = self.values["run"], self.values["policy"], self.values["routing"]
        if run["threads"] < 1:
            raise ConfigError("run.threads must be >= 1")
        if pol["h1"] < 1 or pol["h2"] < 1 or pol["lr"] <= 0:
            raise ConfigError("policy sizes and lr must be positive")
        if rt["beam"] < 1 or rt["max_len"] < 1:
            raise ConfigError("routing.beam and routing.max_len must be >= 1")
        cr = self.values["crime"]
        if cr["bandwidth"] <= 0 or cr["cell_deg"] <= 0:
            raise ConfigError("crime.bandwidth and crime.cell_deg must be positive")
        if self.values["training"]["pairs"] < 1:
            raise ConfigError("training.pairs must be >= 1")

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def walk_config(self) -> WalkConfig:
        e = self.values["embeddings"]
        return WalkConfig(e["p"], e["q"], e["walk_length"], e["walks_per_node"], self.seed)

    def skipgram_config(self) -> SkipGramConfig:
        e = self.values["embeddings"]
        return SkipGramConfig(e["dim"], e["window"], e["negatives"], e["lr"], e["epochs"], self.seed)

    def train_config(self) -> TrainConfig:
        t = self.values["training"]
        return TrainConfig(
            episodes_per_epoch=t["episodes_per_epoch"],
            epochs=t["epochs"],
            rollouts=t["rollouts"],
            max_len=t["max_len"],
            hop_k=t["hop_k"],
            supervised_episodes_per_epoch=t["supervised_episodes_per_epoch"],
            supervised_epochs=t["supervised_epochs"],
            reward=RewardConfig(t["kappa"]),
            seed=self.seed,
        )

    def experiment_config(self) -> ExperimentConfig:
        ev, rt = self.values["evaluation"], self.values["routing"]
        return ExperimentConfig(
            city=ev["city"],
            hops=tuple(ev["hops"]),
            pairs=ev["pairs"],
            routers=tuple(ev["routers"]),
            seeds=tuple(ev["seeds"]),
            beam=rt["beam"],
            max_len=rt["max_len"],
            bandwidth=self.values["crime"]["bandwidth"],
        )

    def dump(self) -> str:
        lines = []
        for sec, keys in self.values.items():
            lines.append(f"[{sec}]")
            for k, v in keys.items():
                text = ", ".join(str(x) for x in v) if isinstance(v, tuple) else str(v)
                lines.append(f"{k} = {text}")
            lines.append("")
        return "\n".join(lines)
