"""Run configuration: one JSON file, command-line overrides on top.

Layout (every key optional)::

    {
      "seed": 0,
      "unet":  {"levels": 4, "base_channels": 64, "downsample_mode": "maxpool"},
      "loss":  {"variant": "dbcef", "epsilon": 1e-4, "gamma": 1.0},
      "adam":  {"lr0": 2e-4, "batch_size": 32, ...},
      "synth": {"patch_size": 256, "scale_range": [0.5, 1.5], ...},
      "train": {"epochs": 20},
      "paths": {"sources": null, "dataset": null, "run_dir": null}
    }

Precedence is flags > file > defaults. Relative paths in the file resolve
against the file's directory; relative paths given as flags resolve against
the working directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Set

from hwseg.errors import ConfigError
from hwseg.losses import LossConfig
from hwseg.network.unet import UNetConfig
from hwseg.optim import AdamConfig
from hwseg.synth.patch import SynthConfig

SECTIONS = {
    "unet": UNetConfig,
    "loss": LossConfig,
    "adam": AdamConfig,
    "synth": SynthConfig,
}
PATH_KEYS = ("sources", "dataset", "run_dir")


def _defaults() -> Dict[str, Any]:
    d: Dict[str, Any] = {"seed": 0, "train": {"epochs": 20}, "paths": {k: None for k in PATH_KEYS}}
    for name, cls in SECTIONS.items():
        d[name] = _plain(asdict(cls()))
    return d


def _plain(d):
    return {k: (list(v) if isinstance(v, tuple) else getattr(v, "value", v)) for k, v in d.items()}


@dataclass
class RunConfig:
    unet: UNetConfig = field(default_factory=UNetConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    epochs: int = 20
    seed: int = 0
    paths: Dict[str, Optional[str]] = field(default_factory=lambda: {k: None for k in PATH_KEYS})
    explicit: Set[str] = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train": {"epochs": self.epochs},
            "paths": dict(self.paths),
            **{name: _plain(asdict(getattr(self, name))) for name in SECTIONS},
        }

    def hash(self) -> str:
        """sha256 of the canonical JSON form, excluding paths."""
        doc = self.to_dict()
        del doc["paths"]
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def path(self, key: str, required: bool = True) -> Optional[Path]:
        value = self.paths.get(key)
        if value is None:
            if required:
                raise ConfigError(f"no {key} path given (flag or paths.{key} in the config)")
            return None
        return Path(value)


def _merge(base: dict, update: dict, where: str, explicit: Set[str]) -> None:
    for key, value in update.items():
        dotted = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted!r} must be an object")
            _merge(base[key], value, dotted + ".", explicit)
        else:
            base[key] = value
            explicit.add(dotted)


def build_config(file: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Validate and merge ``file`` and dotted-key ``overrides`` over the defaults.

    Raises ConfigError for malformed JSON, unknown keys or invalid values;
    nothing is written anywhere before this returns.
    """
    doc = _defaults()
    explicit: Set[str] = set()
    if file is not None:
        fpath = Path(file)
        try:
            data = json.loads(fpath.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{file}: top level must be an object")
        _merge(doc, data, "", explicit)
        for k, v in doc["paths"].items():
            if v is not None and f"paths.{k}" in explicit:
                doc["paths"][k] = str(fpath.parent / v)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = doc
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[leaf] = value
        explicit.add(dotted)

    cfg = RunConfig(explicit=explicit)
    try:
        for name, cls in SECTIONS.items():
            section = copy.deepcopy(doc[name])
            if name == "synth":
                setattr(cfg, name, SynthConfig.from_dict(section))
            else:
                setattr(cfg, name, cls(**section))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        # enum lookups and similar raise plain ValueError
        raise ConfigError(str(exc)) from exc
    cfg.epochs = doc["train"]["epochs"]
    cfg.seed = doc["seed"]
    if not isinstance(cfg.epochs, int) or cfg.epochs < 0:
        raise ConfigError("train.epochs must be a non-negative integer")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    cfg.paths = doc["paths"]
    return cfg


def unet_mismatch(cfg: RunConfig, stored: UNetConfig) -> Optional[str]:
    """Describe the first explicitly configured network field that disagrees with ``stored``."""
    mine = _plain(asdict(cfg.unet))
    theirs = _plain(asdict(stored))
    for key in sorted(mine):
        if f"unet.{key}" in cfg.explicit and mine[key] != theirs[key]:
            return f"unet.{key}={mine[key]!r} but checkpoint has {theirs[key]!r}"
    return None
