"""Run configuration: YAML file + preset + flag overrides, strictly validated.

Resolution order (later wins): built-in defaults, preset, config file,
``--set section.key=value`` overrides, then the ``ADRFLOW_SEED`` environment
variable for the seed.  Unknown keys are rejected at every layer.  Every run
writes a manifest holding the fully resolved tree, its hash, the seed and
the package version, which is sufficient to reproduce the run exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

SEED_ENV_VAR = "ADRFLOW_SEED"

DEFAULTS: dict = {
    "model": {
        "in_channels": 1,
        "hidden_channels": 8,
        "layer_count": 1,
        "h": 1.0,
        "push_mode": "color",
        "history_len": 0,
        "reaction_substeps": 1,
        "reaction_hidden": None,
        "flow_width": None,
        "flow_blocks": 2,
        "fused_dr": False,
        "shared_flow": False,
        "flow_from_history": False,
        "advection": True,
        "use_fft_dct": False,
    },
    "train": {
        "lr": 1e-4,
        "batch": 64,
        "epochs": 200,
        "scheduler": "none",
        "gamma": 0.999,
        "seed": 0,
        "threads": 1,
        "init_seed": 0,
        "kappa_init": 0.5,
        "stop_below": None,
    },
    "data": {
        "path": None,
        "stride": 1,
    },
    "eval": {
        "convention": "pdebench",
        "nrmse_mode": "norm",
        "max_val": 1.0,
        "rollout": [5, 10, 20, 50],
        "ssim_window": "gaussian",
    },
}

PRESETS: dict[str, dict] = {
    # hyperparameters for the shallow-water-style runs
    "swe-like": {
        "model": {"layer_count": 1, "hidden_channels": 128},
        "train": {"lr": 1e-4, "batch": 64, "epochs": 200, "scheduler": "none"},
    },
    # hyperparameters for the video-style runs
    "video-like": {
        "model": {"layer_count": 8, "hidden_channels": 192},
        "train": {"lr": 2e-6, "batch": 16, "epochs": 1000,
                  "scheduler": "exponential"},
    },
    # the corner-transport toy task: swe-like optimizer, small embedding
    "fig1": {
        "model": {"layer_count": 1, "hidden_channels": 8, "history_len": 0},
        "train": {"lr": 1e-4, "batch": 64, "epochs": 5000, "scheduler": "none",
                  "kappa_init": 1.0, "stop_below": 1e-9},
    },
    # small grids with short histories, for the synthetic blob datasets
    "blob": {
        "model": {"layer_count": 1, "hidden_channels": 16, "history_len": 1,
                  "flow_blocks": 2},
        "train": {"lr": 3e-3, "batch": 16, "epochs": 50,
                  "scheduler": "exponential", "gamma": 0.96, "kappa_init": 0.05},
    },
}


@dataclass(frozen=True)
class DataSettings:
    path: str | None = None
    stride: int = 1


@dataclass(frozen=True)
class EvalSettings:
    convention: str = "pdebench"
    nrmse_mode: str = "norm"
    max_val: float = 1.0
    rollout: tuple = (5, 10, 20, 50)
    ssim_window: str = "gaussian"


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: DataSettings
    eval: EvalSettings
    init_seed: int
    kappa_init: float
    resolved: dict


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def parse_override(text: str) -> dict:
    """Parse one ``section.key=value`` flag into a nested dict."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    dotted, raw = text.split("=", 1)
    keys = dotted.strip().split(".")
    if len(keys) < 2:
        raise ConfigError(f"override {text!r} needs a section, e.g. train.lr=1e-3")
    value = yaml.safe_load(raw)
    tree: dict = {keys[-1]: value}
    for key in reversed(keys[:-1]):
        tree = {key: tree}
    return tree


def resolve_config(config_path=None, preset: str | None = None,
                   overrides=(), env=None) -> dict:
    env = os.environ if env is None else env
    tree = DEFAULTS
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        tree = _merge(tree, PRESETS[preset])
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        loaded = yaml.safe_load(path.read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        tree = _merge(tree, loaded)
    for text in overrides:
        tree = _merge(tree, parse_override(text))
    if env.get(SEED_ENV_VAR):
        try:
            tree = _merge(tree, {"train": {"seed": int(env[SEED_ENV_VAR])}})
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}={env[SEED_ENV_VAR]!r} is not an integer")
    return tree


def build_run_config(tree: dict) -> RunConfig:
    m = tree["model"]
    t = tree["train"]
    model = ModelConfig(**m)
    stop = t["stop_below"]
    train = TrainConfig(learning_rate=float(t["lr"]), batch_size=int(t["batch"]),
                        epochs=int(t["epochs"]), scheduler=t["scheduler"],
                        gamma=float(t["gamma"]), seed=int(t["seed"]),
                        threads=int(t["threads"]),
                        stop_below=None if stop is None else float(stop))
    data = DataSettings(path=tree["data"]["path"], stride=int(tree["data"]["stride"]))
    ev = tree["eval"]
    evaluation = EvalSettings(convention=ev["convention"],
                              nrmse_mode=ev["nrmse_mode"],
                              max_val=float(ev["max_val"]),
                              rollout=tuple(int(r) for r in ev["rollout"]),
                              ssim_window=ev["ssim_window"])
    return RunConfig(model=model, train=train, data=data, eval=evaluation,
                     init_seed=int(t["init_seed"]),
                     kappa_init=float(t["kappa_init"]),
                     resolved=tree)


def load_run_config(config_path=None, preset=None, overrides=(), env=None) -> RunConfig:
    return build_run_config(resolve_config(config_path, preset, overrides, env))


def config_hash(tree: dict) -> str:
    canonical = json.dumps(tree, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(outdir, command: str, tree: dict, extra: dict | None = None) -> Path:
    """Deterministic reproduction record: no timestamps, stable key order."""
    from . import __version__
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": tree,
        "config_hash": config_hash(tree),
        "seed": tree.get("train", {}).get("seed"),
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path
