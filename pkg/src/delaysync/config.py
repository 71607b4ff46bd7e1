"""Loading of structured-text (YAML or JSON) configuration files."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .latency import EstimatorConfig
from .sim import NodeProfile, SimConfig


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping at top level")
    return data


def _check_keys(data: Mapping, allowed, what: str) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {what} field(s): {', '.join(sorted(unknown))}")


SIM_FIELDS = tuple(f.name for f in fields(SimConfig))
PROFILE_FIELDS = tuple(f.name for f in fields(NodeProfile))
ESTIMATOR_FIELDS = tuple(f.name for f in fields(EstimatorConfig))


def sim_config_from_dict(data: Mapping[str, Any]) -> SimConfig:
    """SimConfig from a mapping using exactly the dataclass field names."""
    _check_keys(data, SIM_FIELDS, "SimConfig")
    data = dict(data)
    profiles = []
    for p in data.pop("node_profiles", None) or []:
        _check_keys(p, PROFILE_FIELDS, "NodeProfile")
        profiles.append(NodeProfile(**p))
    try:
        cfg = SimConfig(node_profiles=profiles, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_sim_config(path: str | Path) -> SimConfig:
    """Read a SimConfig from a file, either top-level or under a ``sim`` key."""
    data = load_config(path)
    return sim_config_from_dict(data.get("sim", data))


def estimator_config_from_dict(data: Mapping[str, Any]) -> EstimatorConfig:
    _check_keys(data, ESTIMATOR_FIELDS, "EstimatorConfig")
    cfg = EstimatorConfig(**data)
    cfg.validate()
    return cfg
