"""Run configuration: one versioned schema shared by every experiment family.

A config is a mapping with ``schema_version``, ``experiment`` and one
sub-mapping per family. User values are merged over the defaults below and
type-checked leaf by leaf, so every error carries a dotted field path.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any, Iterable

import yaml

SCHEMA_VERSION = 1
EXPERIMENTS = ("fdtd", "dispersion", "topo", "spins", "anneal")
REQUIRED = ("schema_version", "experiment")
SEED_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "experiment": None,
    "seed": 0,
    "output_dir": "out",
    "workers": 1,
    "emit": {"csv": True, "json": True},
    "dispersion": {
        "k": {"start": 0.0, "stop": 3.0, "num": 31},
        "mu": [0.1, 0.2, 0.3, 0.4, 0.5],
        "b0": 0.0,
    },
    "fdtd": {
        "length_cells": 64,
        "circumference_cells": 32,
        "cell_size": 1.0,
        "punctures": [],
        "mu": 0.3,
        "b0": 0.0,
        "e2": 1.0,
        "courant": 0.5,
        "dt": None,
        "steps": 2000,
        "boundary": "pec",
        "init": "random",
        "mode": 1,
        "amplitude": 1.0,
        "every": 10,
    },
    "topo": {
        "protected": [1, 0],
        "control": [[1, 0], [0, 0]],
        "strength": 0.3,
        "steps": 1000,
        "w_max": 8,
    },
    "spins": {
        "b_z": 0.02,
        "gamma_e": 1.0,
        "gamma_n": 1.0 / 1620.0,
        "a_amplitude": 1.0,
        "j_amplitude": 1.0,
        "pair_separation": 55.0,
        # descriptive only, no spin physics reads it
        "resting_potential": "-70 mV",
        "noise": {
            "sigma": 0.1 * 1620.0,
            "tau_c": 50.0,
            "dt": 0.1,
            "steps": 400,
            "realizations": 10000,
            "mode": "common",
        },
        "spectators": {"count": 3, "spacing": 5.0, "configs": 10, "prefactor": 1.0},
    },
    "anneal": {
        "box": [20.0, 20.0],
        "n_pc": 60,
        "n_background": 60,
        "dipole_moment": 1.0,
        "disk_diameter": 0.8,
        "dd_strength": 0.1,
        "dd_cutoff": 4.0,
        "gates": [
            {"start": [5.0, 0.0], "end": [5.0, 20.0], "charge_density": 4.0, "role": "A",
             "depth": 0.5, "n_sites": 5},
            {"start": [15.0, 0.0], "end": [15.0, 20.0], "charge_density": 4.0, "role": "A",
             "depth": 0.5, "n_sites": 5},
        ],
        "T_hot": 1.5,
        "T_cold": 0.05,
        "T_c": 1.0,
        "frozen_mobility": 0.0,
        "schedule": [2000, 1000, 200],
        "step_size": 0.6,
        "rotation_step": 0.8,
        "capture_radius": 1.5,
        "n_seeds": 4,
    },
}

# free-form lists whose items are checked by the experiment builders
OPAQUE = {"fdtd.punctures", "anneal.gates", "dispersion.mu", "topo.protected", "topo.control",
          "anneal.box", "anneal.schedule", "dispersion.k"}
NULLABLE = {"fdtd.dt", "experiment"}


def _typename(v) -> str:
    return type(v).__name__


def _check(value, default, path: str):
    if path in OPAQUE:
        if path == "dispersion.k" and isinstance(value, dict):
            return _merge(default, value, path)
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {_typename(value)}")
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {_typename(value)}")
        return _merge(default, value, path)
    if value is None:
        if path in NULLABLE:
            return None
        raise ConfigError(path, "must not be null")
    if default is None:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            if path != "experiment":
                raise ConfigError(path, f"expected a number, got {_typename(value)}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _merge(defaults: dict, user: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            raise ConfigError(path, "unknown field")
        out[key] = _check(value, defaults[key], path)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(item, "override must look like dotted.key=value")
    key, raw = item.split("=", 1)
    if not key:
        raise ConfigError(item, "empty override key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = yaml.safe_load(raw) if raw != "" else ""
    return key.split("."), value


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    out = copy.deepcopy(raw)
    for item in overrides:
        keys, value = parse_override(item)
        node = out
        for i, k in enumerate(keys[:-1]):
            nxt = node.get(k)
            if nxt is None:
                nxt = node[k] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(".".join(keys[:i + 1]), "cannot set a sub-field of a non-mapping")
            node = nxt
        node[keys[-1]] = value
    return out


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", "config root must be a mapping")
    return data


def resolve(raw: dict) -> dict:
    """Check required fields, merge over defaults and validate types."""
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(key, "missing required field")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {raw['schema_version']!r}, "
                                            f"expected {SCHEMA_VERSION}")
    if raw["experiment"] not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got "
                                        f"{raw['experiment']!r}")
    cfg = _merge(DEFAULTS, raw)
    seed = cfg["seed"]
    if not 0 <= seed <= SEED_MAX:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if cfg["workers"] < 1:
        raise ConfigError("workers", "must be >= 1")
    return cfg


def load(path: str | Path | None, overrides: Iterable[str] = (), seed: int | None = None,
         output_dir: str | None = None, workers: int | None = None) -> dict:
    raw = load_file(path) if path is not None else {}
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = output_dir
    if workers is not None:
        raw["workers"] = workers
    return resolve(raw)
