"""Run configuration: TOML file, ``--set`` overrides, environment and seed.

Defaults are sized for the synthetic benchmark (16-token texts, 64-token
input limit for the uncompressed baseline).
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

import tomli

from .model import ConfigError, ModelConfig
from .trainer import TrainConfig

DEFAULTS = {
    "paths": {"edges": "edges.tsv", "texts": "texts.jsonl", "labels": "labels.jsonl", "out": "out"},
    "graph": {"num_classes": 0},  # 0: infer from labels
    "tokenizer": {"max_vocab": 20000, "min_freq": 1, "t": 16},
    "model": {"d": 64, "layers": 2, "heads": 4, "k": 4, "max_len": 512, "init_std": 0.1, "dropout": 0.1, "seed": 0},
    "train": {"mode": "hicom", "fanouts": [4, 4], "epochs": 30, "batch": 16, "lr": 1e-3, "threshold": 0.5,
              "seed": 0, "input_limit": 64, "pretrain_epochs": 3, "trim": True},
    "split": {"per_class": 20, "val_size": 300, "test_cap": 1000},
    "synth": {"num_nodes": 2000, "num_classes": 8, "avg_degree": 8.0},
    "bench": {"trials": 5, "configs": [
        {"mode": "nconcat", "neighbors": 4},
        {"mode": "hicom", "fanouts": [2, 2]},
        {"mode": "hicom", "fanouts": [2, 2], "trim": False},
    ]},
}

# keys that never enter metrics.json, so reruns into another directory compare equal
LOCATION_SECTIONS = ("paths",)


def _check_types(cfg: dict, ref: dict, where: str = "") -> None:
    for key, value in cfg.items():
        name = f"{where}{key}"
        if key not in ref:
            raise ConfigError(f"unknown config key {name!r}")
        expected = ref[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{name!r} must be a table")
            _check_types(value, expected, name + ".")
        elif isinstance(expected, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{name!r} must be a boolean")
        elif isinstance(expected, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name!r} must be a number")
            cfg[key] = float(value)
        elif isinstance(expected, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name!r} must be an integer")
        elif not isinstance(value, type(expected)):
            raise ConfigError(f"{name!r} must be of type {type(expected).__name__}")


def _merge(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def parse_override(item: str) -> tuple[list[str], object]:
    """``section.key=value``; the value is read as a TOML literal, else as a bare string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    path = key.strip().split(".")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return path, value


def load_config(path=None, overrides=(), seed: int | None = None, env=None) -> dict:
    """Resolve defaults < TOML file < ``--set`` overrides < ``HICOM_OUT`` / ``--seed``."""
    env = os.environ if env is None else env
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomli.load(f)
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        _check_types(data, DEFAULTS)
        base = Path(path).parent
        for key, value in data.get("paths", {}).items():
            data["paths"][key] = str(base / value)  # paths in a config file are relative to it
        _merge(cfg, data)
    for item in overrides:
        keys, value = parse_override(item)
        nested = value
        for key in reversed(keys):
            nested = {key: nested}
        _check_types(nested, DEFAULTS)
        _merge(cfg, nested)
    if env.get("HICOM_OUT"):
        cfg["paths"]["out"] = env["HICOM_OUT"]
    if seed is not None:
        cfg["train"]["seed"] = cfg["model"]["seed"] = int(seed)
    model_config(cfg, vocab_size=1)
    train_config(cfg)
    return cfg


def model_config(cfg: dict, vocab_size: int) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, **cfg["model"])


def train_config(cfg: dict, **changes) -> TrainConfig:
    t = dict(cfg["train"])
    t["batch_size"] = t.pop("batch")
    t.update(changes)
    return TrainConfig(**t)


def report_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in LOCATION_SECTIONS}


def write_resolved(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "resolved_config.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
