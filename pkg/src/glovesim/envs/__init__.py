"""Drifting environments behind one reset/step/snapshot contract."""

from __future__ import annotations

from typing import Any, Mapping

from .base import DriftEvent, DriftSchedule, Environment, episode_rng
from .gridlake import GridLake, GridLakeSpec, load_map, parse_map
from .mountaincar import MountainCar, MountainCarSpec
from .shopgraph import ShopGraph, ShopGraphSpec
from .synthetic import CategoricalSpec, SyntheticCategorical

KINDS = ("gridlake", "mountaincar", "shopgraph", "synthetic")


def make_env(cfg: Mapping[str, Any], schedule: DriftSchedule | None = None) -> Environment:
    """Build an environment from its config section."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    snapshots = bool(cfg.pop("snapshots", True))
    if kind == "gridlake":
        slip = float(cfg.pop("slip", 0.0))
        success = cfg.pop("success", "goal")
        if "map_text" in cfg:
            spec = parse_map(cfg.pop("map_text"), slip)
        else:
            spec = load_map(cfg.pop("map", "source"), slip)
        _reject_extra(kind, cfg)
        return GridLake(spec, schedule, snapshots, success)
    if kind == "mountaincar":
        spec = MountainCarSpec(**cfg)
        return MountainCar(spec, schedule, snapshots)
    if kind == "shopgraph":
        return ShopGraph(ShopGraphSpec(**cfg), schedule, snapshots)
    if kind == "synthetic":
        spec = CategoricalSpec(dict(cfg.pop("support")), dict(cfg.pop("scores", {})))
        _reject_extra(kind, cfg)
        return SyntheticCategorical(spec, schedule, snapshots)
    raise ValueError(f"unknown environment kind {kind!r}; expected one of {KINDS}")


def _reject_extra(kind: str, cfg: Mapping[str, Any]) -> None:
    if cfg:
        raise ValueError(f"unknown {kind} option(s): {', '.join(sorted(cfg))}")


__all__ = [
    "DriftEvent",
    "DriftSchedule",
    "Environment",
    "GridLake",
    "GridLakeSpec",
    "MountainCar",
    "MountainCarSpec",
    "ShopGraph",
    "ShopGraphSpec",
    "SyntheticCategorical",
    "CategoricalSpec",
    "episode_rng",
    "load_map",
    "make_env",
    "parse_map",
]
