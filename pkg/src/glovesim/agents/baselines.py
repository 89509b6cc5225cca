"""Baseline memory policies: frozen memory, forgetting-curve decay, and no memory."""

from __future__ import annotations

import copy
import math
from typing import Any, Sequence

import numpy as np

from ..bank import ExperienceBank, StateKey
from .planner import BankView


class FrozenView(BankView):
    """Snapshot of a bank taken at freeze time; later inserts are invisible."""

    def __init__(self, bank: ExperienceBank):
        super().__init__(copy.deepcopy(bank))


def decay_weight(age: float, lam: float) -> float:
    return math.exp(-lam * age)


class DecayView:
    """Bank records weighted by ``exp(-lam * age)``, age in episodes since last seen.

    Records whose weight falls below ``w_min`` are dropped at retrieval.
    """

    def __init__(self, bank: ExperienceBank, lam: float = 0.1, w_min: float = 0.05):
        if lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0 <= w_min < 1:
            raise ValueError("w_min must lie in [0, 1)")
        self.bank = bank
        self.lam = lam
        self.w_min = w_min
        self.episode = 0

    @property
    def version(self):
        return (id(self.bank), self.bank.version, self.episode)

    def set_episode(self, episode: int) -> None:
        self.episode = episode

    def weight(self, rec) -> float:
        return decay_weight(self.episode - rec.meta.last_seen[0], self.lam)

    def keys(self):
        return self.bank.keys()

    def dist(self, state, action):
        mass: dict[StateKey, float] = {}
        for rec in self.bank.counterparts(state, action):
            w = self.weight(rec)
            if w < self.w_min:
                continue
            mass[rec.outcome] = mass.get(rec.outcome, 0.0) + w * rec.meta.exec_count
        summ = self.bank.summary(state, action)
        if summ is not None:
            for o, c in summ.counts.items():
                mass[o] = mass.get(o, 0.0) + c
        total = math.fsum(mass.values())
        if not total:
            return None
        return {o: m / total for o, m in mass.items()}


class NoMemoryAgent:
    """Ignores memory: uses the environment's heuristic when it has one, else a seeded coin."""

    name = "no_memory"

    def __init__(self, action_space: Sequence[Any], heuristic=None, seed: int = 0):
        self.action_space = list(action_space)
        self.heuristic = heuristic
        self.rng = np.random.default_rng(seed)

    def attach(self, view) -> None:
        pass

    def observe(self, key, at) -> None:
        pass

    def note_realignment(self, episode: int) -> None:
        pass

    def decide(self, state: StateKey, raw_state: dict | None = None):
        if self.heuristic is not None and raw_state is not None:
            a = self.heuristic(raw_state)
            if a is not None and a in self.action_space:
                return a
        return self.action_space[int(self.rng.integers(len(self.action_space)))]

