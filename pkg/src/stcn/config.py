"""Run configuration files: UTF-8 `key = value` under nested sections.

Unknown sections or keys are rejected so typos fail loudly. Every key has a
default; see configs/example.ini for the documented reference file.
"""

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .model import ModelConfig
from .observation import ObsConfig
from .tcn import TcnConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Raised for unknown keys or malformed values in a run config."""


@dataclass
class RunConfig:
    model: ModelConfig
    training: TrainConfig
    train_data: Optional[str] = None
    valid_data: Optional[str] = None


_SCHEMA = {
    "model": {
        "variant": str,
        "input_dim": int,
        "stacks": int,
        "blocks_per_stack": int,
        "filters": int,
        "latent_dims": "int_list",
    },
    "observation": {
        "family": str,
        "components": int,
        "head": str,
        "head_depth": int,
    },
    "training": {
        "batch_size": int,
        "lr": float,
        "lr_decay_rate": float,
        "lr_decay_steps": int,
        "kl_anneal_rate": float,
        "max_steps": int,
        "eval_every": int,
        "patience": int,
        "seed": int,
        "precision": str,
    },
    "data": {
        "train": str,
        "valid": str,
    },
}

_DEFAULTS = {
    "model": {
        "variant": "stcn",
        "input_dim": 2,
        "stacks": 5,
        "blocks_per_stack": 6,
        "filters": 256,
        "latent_dims": [32, 16, 8, 5, 2],
    },
}


def _convert(section, key, raw):
    kind = _SCHEMA[section][key]
    try:
        if kind == "int_list":
            return [int(v) for v in raw.replace(",", " ").split()]
        return kind(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from e


def parse_run_config(path):
    """Parse a config file into a RunConfig. Missing keys use defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, "r", encoding="utf-8") as f:
        parser.read_file(f)
    values = {s: dict(_DEFAULTS.get(s, {})) for s in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            values[section][key] = _convert(section, key, raw)
    m = values["model"]
    tcn = TcnConfig(
        stacks=m["stacks"],
        blocks_per_stack=m["blocks_per_stack"],
        filters=m["filters"],
    )
    variant = m["variant"]
    latent = m["latent_dims"] if variant in ("stcn", "stcn_dense") else None
    if latent is not None and len(latent) != tcn.stacks:
        raise ConfigError(
            f"latent_dims has {len(latent)} entries but stacks = {tcn.stacks}"
        )
    model = ModelConfig(
        variant=variant,
        input_dim=m["input_dim"],
        tcn=tcn,
        latent_dims=latent,
        obs=ObsConfig(**values["observation"]),
    )
    training = TrainConfig(**values["training"])
    return RunConfig(
        model=model,
        training=training,
        train_data=values["data"].get("train"),
        valid_data=values["data"].get("valid"),
    )
