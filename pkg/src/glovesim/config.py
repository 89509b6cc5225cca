"""Run configuration: YAML files layered over defaults, plus dotted overrides."""

from __future__ import annotations

import copy
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "name": "run",
    "method": None,
    "env": {"kind": "gridlake", "map": "source", "slip": 0.0, "snapshots": True, "success": "goal"},
    "drifts": [],
    "agent": {
        "kind": "planner",
        "explore": "systematic",
        "collect": True,
        "horizon": None,
        "lam": 0.1,
        "w_min": 0.05,
        "endpoint": None,
        "timeout": 30.0,
        "fallback": "explore",
        "template": None,
    },
    "glove": {
        "enabled": True,
        "epsilon_mode": "hoeffding",
        "epsilon": 0.05,
        "epsilon_min": 0.05,
        "delta": 0.05,
        "p_th": None,
        "deterministic": None,
        "K": None,
        "verify_epsilon": 0.1,
        "verify_delta": 0.05,
        "alpha_max": 1000,
        "alpha": None,
    },
    "bank": {"bins": None},
    "collection_episodes": 30,
    "episodes_per_phase": 30,
    "rounds": 20,
    "step_cap": None,
    "seeds": [0],
    "curve_window": 5,
}

# sections whose keys depend on the chosen kind and so are not checked against defaults
_OPEN_SECTIONS = ("env",)


def merge(base: Mapping[str, Any], over: Mapping[str, Any], path: str = "") -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in out and path.rstrip(".") not in _OPEN_SECTIONS:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            if k in _OPEN_SECTIONS and "kind" in v and v["kind"] != out[k].get("kind"):
                # a different environment kind brings its own option set
                out[k] = dict(copy.deepcopy(v))
            else:
                out[k] = merge(out[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | None = None, text: str | None = None) -> dict:
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    data: Any = {}
    if text is not None:
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping at top level")
    return merge(DEFAULTS, data)


def parse_value(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def set_dotted(cfg: dict, dotted: str, value: Any) -> None:
    """Override an existing key; unknown keys are an error."""
    parts = dotted.split(".")
    node: Any = cfg
    for i, p in enumerate(parts[:-1]):
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config key {'.'.join(parts[: i + 1])!r}")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like KEY=VALUE")
        key, _, raw = item.partition("=")
        set_dotted(cfg, key.strip(), parse_value(raw))
    return cfg


def get_dotted(cfg: Mapping, dotted: str) -> Any:
    node: Any = cfg
    for p in dotted.split("."):
        if not isinstance(node, Mapping) or p not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[p]
    return node
