"""Dissonance detection: surprise predicate, persistence counter, thresholds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .bank import ExperienceBank, ExperienceRecord, Key, OutcomeDistribution, StateKey

FIXED = "fixed"
HOEFFDING = "hoeffding"


@dataclass(frozen=True)
class DetectorConfig:
    """Surprise threshold and persistence settings.

    Under ``hoeffding`` mode the threshold is the finite-sample deviation
    bound for the counterpart sample size, floored at ``epsilon_min``.
    """

    epsilon_mode: str = HOEFFDING
    epsilon: float = 0.05
    epsilon_min: float = 0.05
    delta: float = 0.05
    p_th: int = 2
    deterministic: bool = False

    def __post_init__(self):
        if self.epsilon_mode not in (FIXED, HOEFFDING):
            raise ValueError(f"epsilon_mode must be {FIXED!r} or {HOEFFDING!r}")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.epsilon_min < 1:
            raise ValueError("epsilon_min must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if int(self.p_th) != self.p_th or self.p_th < 1:
            raise ValueError("p_th must be a positive integer")


def hoeffding_epsilon(n: int, delta: float) -> float:
    """Deviation bound ``sqrt(ln(1/delta) / 2n)`` on one outcome's empirical mass."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


def surprise_threshold(n: int, cfg: DetectorConfig) -> float:
    if cfg.epsilon_mode == FIXED:
        return cfg.epsilon
    return max(hoeffding_epsilon(n, cfg.delta), cfg.epsilon_min)


def is_surprising(hist: OutcomeDistribution, outcome: StateKey, cfg: DetectorConfig) -> bool:
    if not hist:
        raise ValueError("surprise test needs a nonempty history")
    if cfg.deterministic:
        return outcome not in hist.counts
    return hist.mass(outcome) < surprise_threshold(hist.sample_size, cfg)


class Decision(enum.Enum):
    NONE = "none"
    TRIGGER = "trigger_verification"


@dataclass
class PersistenceState:
    counters: dict[Key, int] = field(default_factory=dict)

    def count(self, key: Key) -> int:
        return self.counters.get(key, 0)

    def reset(self, key: Key) -> None:
        self.counters.pop(key, None)


def observe(pstate: PersistenceState, key: Key, surprising: bool, cfg: DetectorConfig) -> Decision:
    if not surprising:
        pstate.reset(key)
        return Decision.NONE
    c = pstate.count(key) + 1
    if c >= cfg.p_th:
        pstate.reset(key)
        return Decision.TRIGGER
    pstate.counters[key] = c
    return Decision.NONE


@dataclass(frozen=True)
class Check:
    decision: Decision
    surprising: bool
    hist: OutcomeDistribution | None


def check_transition(bank: ExperienceBank, e_t: ExperienceRecord, cfg: DetectorConfig,
                     pstate: PersistenceState) -> Check:
    """Test a fresh transition against the bank's belief for its key.

    Keys with no history count as novel exploration and never trigger.
    """
    hist = bank.belief(e_t.state, e_t.action)
    if hist is None:
        return Check(Decision.NONE, False, None)
    surprising = is_surprising(hist, e_t.outcome, cfg)
    return Check(observe(pstate, e_t.key, surprising, cfg), surprising, hist)


def default_p_th(deterministic: bool) -> int:
    return 1 if deterministic else 2
