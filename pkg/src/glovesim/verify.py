"""Active probing, relative-truth construction and bank realignment."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

from .bank import (
    VERIFIED,
    BankConfig,
    ExperienceBank,
    ExperienceRecord,
    Key,
    OutcomeDistribution,
    StateKey,
    canonical_key,
)
from .detect import Decision, DetectorConfig, PersistenceState, check_transition

log = logging.getLogger(__name__)


class ProbeUnreachable(RuntimeError):
    """The probed state could not be reproduced in the current environment."""


@dataclass(frozen=True)
class VerifierConfig:
    """Probe budget settings.

    ``K`` caps the number of outcome modes; when None it is estimated per
    trigger.  ``alpha`` pins the budget outright (used by budget sweeps).
    """

    K: int | None = None
    epsilon: float = 0.1
    delta: float = 0.05
    alpha_max: int = 1000
    deterministic: bool = False
    alpha: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.alpha_max < 1:
            raise ValueError("alpha_max must be >= 1")
        if self.alpha is not None and self.alpha < 1:
            raise ValueError("alpha must be >= 1")


def weissman_budget(K: int, epsilon: float, delta: float) -> int:
    """Smallest integer probe count meeting the L1 concentration requirement."""
    return math.ceil(2.0 * (K * math.log(2.0) + math.log(1.0 / delta)) / epsilon**2)


def required_budget(cfg: VerifierConfig, K: int | None = None) -> int:
    if cfg.deterministic:
        return 1
    if cfg.alpha is not None:
        return cfg.alpha
    K = K if K is not None else cfg.K
    if K is None:
        raise ValueError("K is unknown; configure it or pass an estimate")
    alpha = weissman_budget(K, cfg.epsilon, cfg.delta)
    if alpha > cfg.alpha_max:
        log.warning("probe budget %d clamped to alpha_max=%d (K=%d, eps=%g, delta=%g)",
                    alpha, cfg.alpha_max, K, cfg.epsilon, cfg.delta)
        return cfg.alpha_max
    return alpha


@dataclass(frozen=True)
class ProbeAccess:
    """How to get the environment back to the state a transition started from.

    ``before`` is a snapshot taken just before the step (None when the
    environment cannot snapshot).  ``trajectory`` lists the (key, action)
    pairs from reset up to that state, for replay; ``after`` is the key the
    episode was in once the step completed.
    """

    before: Any = None
    seed: int = 0
    episode: int = 0
    trajectory: tuple[tuple[StateKey, Any], ...] = ()
    after: StateKey | None = None
    bank_cfg: BankConfig = field(default_factory=BankConfig)


@dataclass(frozen=True)
class ProbeBatch:
    key: Key
    outcomes: tuple[StateKey, ...]
    replay_cost: int = 0


def probe(env, key: Key, alpha: int, access: ProbeAccess) -> ProbeBatch:
    """Execute ``key``'s action ``alpha`` times from states matching ``key``'s state.

    The environment is left exactly where it was before probing.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    state, action = key
    outcomes = []
    if env.supports_snapshot and access.before is not None:
        here = env.snapshot()
        try:
            with env.probing():
                for _ in range(alpha):
                    env.restore(access.before)
                    if canonical_key(env.form_state(), access.bank_cfg) != state:
                        raise ProbeUnreachable("snapshot does not match the probed state")
                    raw, _, _ = env.step(action)
                    outcomes.append(canonical_key(raw, access.bank_cfg))
        finally:
            env.restore(here)
        return ProbeBatch(key, tuple(outcomes), 0)

    # replay fallback: the trajectory is re-driven on the episode stream and
    # each probed step draws from the probe stream, which keeps advancing
    cost = 0
    with env.probing():
        for _ in range(alpha):
            cost += _replay(env, access, state)
            raw, _, _ = env.step(action)
            outcomes.append(canonical_key(raw, access.bank_cfg))
    # return to the ongoing episode: same replay, original step on the episode stream
    cost += _replay(env, access, state)
    raw, _, _ = env.step(action)
    if access.after is not None and canonical_key(raw, access.bank_cfg) != access.after:
        raise ProbeUnreachable("episode state could not be restored after replay")
    return ProbeBatch(key, tuple(outcomes), cost)


def _replay(env, access: ProbeAccess, target: StateKey) -> int:
    prev, env._probing = env._probing, False
    try:
        raw = env.reset(access.seed, access.episode, keep_probe_stream=True)
        steps = 0
        for expected, action in access.trajectory:
            if canonical_key(raw, access.bank_cfg) != expected or env.done:
                raise ProbeUnreachable(f"replay diverged after {steps} steps")
            raw, _, _ = env.step(action)
            steps += 1
    finally:
        env._probing = prev
    if canonical_key(raw, access.bank_cfg) != target or env.done:
        raise ProbeUnreachable(f"replay ended away from the probed state after {steps} steps")
    return steps


def build_relative_truth(batch: ProbeBatch, built_at=(0, 0)) -> OutcomeDistribution:
    if not batch.outcomes:
        raise ValueError("probe batch is empty")
    return OutcomeDistribution.from_outcomes(batch.outcomes, built_at, VERIFIED)


NO_ACTION = "no_action"
REALIGNED = "realigned"
ABORTED = "aborted"


@dataclass(frozen=True)
class CycleReport:
    kind: str
    key: Key | None = None
    truth: OutcomeDistribution | None = None
    probes_used: int = 0
    replay_cost: int = 0
    surprising: bool = False
    reason: str = ""
    at: tuple[int, int] = (0, 0)

    @property
    def conflict(self) -> bool:
        return self.kind in (REALIGNED, ABORTED)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "episode": self.at[0], "step": self.at[1]}
        if self.key is not None:
            out["state"] = self.key[0].text
            out["action"] = self.key[1]
        if self.truth is not None:
            out["truth"] = {k.text: c for k, c in self.truth.counts.items()}
            out["n"] = self.truth.sample_size
        out["probes"] = self.probes_used
        out["replay_cost"] = self.replay_cost
        out["surprising"] = self.surprising
        if self.reason:
            out["reason"] = self.reason
        return out


def verify_cycle(bank: ExperienceBank, env, e_t: ExperienceRecord, detect_cfg: DetectorConfig,
                 verify_cfg: VerifierConfig, pstate: PersistenceState,
                 access: ProbeAccess | None = None) -> CycleReport:
    """Detect, probe, and realign for one fresh transition."""
    at = e_t.meta.recorded_at
    check = check_transition(bank, e_t, detect_cfg, pstate)
    if check.decision is Decision.NONE:
        return CycleReport(NO_ACTION, e_t.key, surprising=check.surprising, at=at)

    access = access or ProbeAccess()
    probes = 0
    cost = 0
    try:
        if verify_cfg.deterministic or verify_cfg.alpha is not None or verify_cfg.K is not None:
            alpha = required_budget(verify_cfg)
            batch = probe(env, e_t.key, alpha, access)
            outcomes, cost = batch.outcomes, batch.replay_cost
        else:
            first = probe(env, e_t.key, 1, access)
            modes = set(check.hist.counts) | set(first.outcomes)
            alpha = required_budget(verify_cfg, K=len(modes) + 1)
            rest = probe(env, e_t.key, alpha - 1, access) if alpha > 1 else None
            outcomes = first.outcomes + (rest.outcomes if rest else ())
            cost = first.replay_cost + (rest.replay_cost if rest else 0)
        probes = len(outcomes)
    except ProbeUnreachable as exc:
        pstate.reset(e_t.key)
        log.info("verification aborted at %s: %s", at, exc)
        return CycleReport(ABORTED, e_t.key, probes_used=probes, replay_cost=cost,
                           surprising=True, reason=str(exc), at=at)

    truth = build_relative_truth(ProbeBatch(e_t.key, outcomes, cost), built_at=at)
    bank.realign(e_t.key, truth)
    return CycleReport(REALIGNED, e_t.key, truth, probes, cost, True, at=at)
