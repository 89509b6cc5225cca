"""One-state, one-action environment whose outcome is a categorical draw."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bank import BankConfig, StateKey
from .base import DriftSchedule, Environment, mutation_kind

IDLE = "-"


@dataclass
class CategoricalSpec:
    support: dict[str, float]
    scores: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.support:
            raise ValueError("support must be nonempty")
        if any(p <= 0 for p in self.support.values()):
            raise ValueError("probabilities must be positive")
        if abs(sum(self.support.values()) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        if IDLE in self.support:
            raise ValueError(f"{IDLE!r} is reserved")


class SyntheticCategorical(Environment):
    name = "synthetic"
    step_cap = 1

    @property
    def max_score(self) -> float:
        return max(self.spec.scores.values(), default=0.0)

    def action_space(self) -> list[int]:
        return [0]

    def is_deterministic(self) -> bool:
        return len(self.spec.support) == 1

    def default_bank_config(self) -> BankConfig:
        return BankConfig()

    def default_horizon(self) -> int:
        return 1

    def form_state(self) -> dict:
        return {"node": "s0", "outcome": self._world["outcome"]}

    def terminal_score(self, key: StateKey) -> float | None:
        outcome = key.fields().get("outcome", IDLE)
        if outcome == IDLE:
            return None
        return float(self.spec.scores.get(outcome, 0.0))

    def success(self, score: float, state: dict) -> bool:
        return state["outcome"] != IDLE and score >= self.max_score

    def apply_drift(self, mutation) -> None:
        mutation_kind(mutation, ("response_set",))
        self.spec = CategoricalSpec(dict(mutation["support"]), dict(self.spec.scores))

    def _initial_world(self, rng: np.random.Generator) -> dict:
        return {"outcome": IDLE, "done": False}

    def _transition(self, action, rng: np.random.Generator) -> float:
        labels = list(self.spec.support)
        cdf = np.cumsum([self.spec.support[k] for k in labels])
        j = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(labels) - 1)
        self._world.update(outcome=labels[j], done=True)
        return float(self.spec.scores.get(labels[j], 0.0))


def make(support: dict[str, float], scores: dict[str, float] | None = None,
         schedule: DriftSchedule | None = None) -> SyntheticCategorical:
    return SyntheticCategorical(CategoricalSpec(dict(support), dict(scores or {})), schedule)
