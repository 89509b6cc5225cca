from __future__ import annotations

import contextlib
import copy
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..bank import BankConfig, StateKey

_MASK64 = (1 << 64) - 1
_PROBE_BIT = 1 << 127


def episode_rng(seed: int, episode: int, probe: bool = False) -> np.random.Generator:
    """Counter-based stream for one (seed, episode); probes get a disjoint stream."""
    key = (seed & _MASK64) | ((episode & _MASK64) << 64)
    if probe:
        key |= _PROBE_BIT
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class DriftEvent:
    episode: int
    mutations: tuple[Mapping[str, Any], ...]


@dataclass(frozen=True)
class DriftSchedule:
    events: tuple[DriftEvent, ...] = ()

    def __post_init__(self):
        eps = [e.episode for e in self.events]
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError("drift episodes must be strictly increasing")
        if eps and eps[0] < 1:
            raise ValueError("drifts apply at episode boundaries after the source phase")

    @classmethod
    def from_list(cls, items: Sequence[tuple[int, Sequence[Mapping[str, Any]]]]) -> DriftSchedule:
        return cls(tuple(DriftEvent(int(ep), tuple(dict(m) for m in muts)) for ep, muts in items))

    def active(self, episode: int) -> int:
        """Number of events in force at ``episode``."""
        return sum(1 for e in self.events if e.episode <= episode)

    def boundaries(self) -> list[int]:
        return [e.episode for e in self.events]


class Environment:
    """Behavioral contract shared by every simulator.

    Subclasses keep their mutable world state in ``self._world`` (a dict of
    plain values) and their immutable-per-phase configuration in
    ``self.spec``.  Drift mutations rewrite ``self.spec``; ``reset`` rebuilds
    the spec from the base whenever the set of active drift events changes, so
    ``reset(seed, episode)`` is idempotent and order independent.
    """

    name = "env"
    max_score: float | None = None
    step_cap = 100
    supports_snapshot = True

    def __init__(self, spec, schedule: DriftSchedule | None = None, snapshots: bool = True):
        self.base_spec = spec
        self.spec = copy.deepcopy(spec)
        self.schedule = schedule or DriftSchedule()
        self.supports_snapshot = snapshots and type(self).supports_snapshot
        self._applied = 0
        self._world: dict[str, Any] = {}
        self._rng = episode_rng(0, 0)
        self._probe_rng = episode_rng(0, 0, probe=True)
        self._probing = False
        self.seed = 0
        self.episode = 0

    # -- contract ----------------------------------------------------------

    def reset(self, seed: int, episode: int, keep_probe_stream: bool = False) -> dict:
        self._configure(episode)
        self.seed, self.episode = seed, episode
        self._rng = episode_rng(seed, episode)
        if not keep_probe_stream:
            self._probe_rng = episode_rng(seed, episode, probe=True)
        self._world = self._initial_world(self._rng)
        return self.form_state()

    def step(self, action) -> tuple[dict, float, bool]:
        if action not in self.action_space():
            raise ValueError(f"invalid action {action!r} for {self.name}")
        if self._world.get("done"):
            raise RuntimeError("episode already finished; call reset()")
        rng = self._probe_rng if self._probing else self._rng
        score = self._transition(action, rng)
        return self.form_state(), score, bool(self._world["done"])

    def snapshot(self):
        if not self.supports_snapshot:
            return None
        return (copy.deepcopy(self._world), self._rng.bit_generator.state)

    def restore(self, token) -> None:
        if not self.supports_snapshot:
            raise RuntimeError(f"{self.name} does not support snapshots")
        world, rng_state = token
        self._world = copy.deepcopy(world)
        if not self._probing:
            self._rng.bit_generator.state = rng_state

    @contextlib.contextmanager
    def probing(self):
        """Route randomness to the probe stream so probes never perturb the episode."""
        prev, self._probing = self._probing, True
        try:
            yield self
        finally:
            self._probing = prev

    def action_space(self) -> list:
        raise NotImplementedError

    def is_deterministic(self) -> bool:
        raise NotImplementedError

    def form_state(self) -> dict:
        raise NotImplementedError

    def apply_drift(self, mutation: Mapping[str, Any]) -> None:
        raise NotImplementedError

    def default_bank_config(self) -> BankConfig:
        return BankConfig()

    def terminal_score(self, key: StateKey) -> float | None:
        """Score of a terminal outcome read off its key; None when non-terminal."""
        raise NotImplementedError

    def success(self, score: float, state: dict) -> bool:
        raise NotImplementedError

    def heuristic(self, state: dict):
        return None

    @property
    def done(self) -> bool:
        return bool(self._world.get("done"))

    # -- internals ---------------------------------------------------------

    def _configure(self, episode: int) -> None:
        target = self.schedule.active(episode)
        if target == self._applied:
            return
        self.spec = copy.deepcopy(self.base_spec)
        for event in self.schedule.events[:target]:
            for mutation in event.mutations:
                self.apply_drift(mutation)
        self._applied = target

    def _initial_world(self, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def _transition(self, action, rng: np.random.Generator) -> float:
        raise NotImplementedError


def mutation_kind(mutation: Mapping[str, Any], allowed: Sequence[str]) -> str:
    if not isinstance(mutation, Mapping) or "kind" not in mutation:
        raise ValueError(f"malformed mutation {mutation!r}")
    kind = mutation["kind"]
    if kind not in allowed:
        raise ValueError(f"mutation kind {kind!r} not supported here (allowed: {', '.join(allowed)})")
    return kind
