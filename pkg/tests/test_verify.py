import logging
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from glovesim.bank import BankConfig, ExperienceBank, ExperienceRecord, Metadata, StateKey, canonical_key
from glovesim.detect import DetectorConfig, PersistenceState
from glovesim.envs import GridLake, load_map
from glovesim.envs import synthetic
from glovesim.envs.base import DriftSchedule
from glovesim.verify import (
    ABORTED,
    NO_ACTION,
    REALIGNED,
    ProbeAccess,
    ProbeBatch,
    ProbeUnreachable,
    VerifierConfig,
    build_relative_truth,
    probe,
    required_budget,
    verify_cycle,
    weissman_budget,
)


def oracle_budget(K, eps, delta):
    # smallest integer a with 2^K exp(-a eps^2 / 2) <= delta, searched directly
    a = 1
    while K * math.log(2) - a * eps * eps / 2 > math.log(delta):
        a += 1
    return a


@pytest.mark.parametrize("K,eps,delta,expected", [(2, 0.1, 0.05, 877), (4, 0.2, 0.1, 254)])
def test_budget_matches_oracle(K, eps, delta, expected):
    assert weissman_budget(K, eps, delta) == expected == oracle_budget(K, eps, delta)


def test_deterministic_budget_is_one():
    assert required_budget(VerifierConfig(deterministic=True)) == 1
    assert required_budget(VerifierConfig(deterministic=True, K=50, epsilon=0.01)) == 1


def test_fixed_alpha_and_clamp(caplog):
    assert required_budget(VerifierConfig(alpha=5)) == 5
    with caplog.at_level(logging.WARNING):
        assert required_budget(VerifierConfig(K=10, epsilon=0.05, alpha_max=1000)) == 1000
    assert "clamped" in caplog.text
    with pytest.raises(ValueError):
        required_budget(VerifierConfig())


@pytest.mark.invariant
@given(st.integers(1, 20), st.floats(0.05, 1.0), st.floats(0.001, 0.5))
def test_budget_is_smallest_sufficient(K, eps, delta):
    a = weissman_budget(K, eps, delta)
    bound = lambda n: K * math.log(2) - n * eps * eps / 2 - math.log(delta)  # noqa: E731
    assert bound(a) <= 1e-9
    assert a == 1 or bound(a - 1) > -1e-9


# -- probing -------------------------------------------------------------------

CFG = GridLake(load_map("source")).default_bank_config()


def slippery(snapshots=True):
    return GridLake(load_map("source", slip=0.3), snapshots=snapshots)


def play(env, actions, probe_at=None, alpha=3, seed=7, episode=2):
    """Run ``actions``; optionally probe the transition at index ``probe_at``."""
    raw = env.reset(seed, episode)
    keys, traj, batch = [canonical_key(raw, CFG)], [], None
    for i, a in enumerate(actions):
        if env.done:
            break
        before = env.snapshot()
        raw, _, _ = env.step(a)
        out = canonical_key(raw, CFG)
        if i == probe_at:
            access = ProbeAccess(before, seed, episode, tuple(traj), out, CFG)
            batch = probe(env, (keys[-1], a), alpha, access)
        traj.append((keys[-1], a))
        keys.append(out)
    return keys, batch


@pytest.mark.invariant
@given(st.lists(st.integers(0, 3), min_size=1, max_size=12), st.data())
def test_snapshot_soundness(actions, data):
    """Probing mid-episode never changes what happens next in the episode."""
    k = data.draw(st.integers(0, len(actions) - 1))
    plain, _ = play(slippery(), actions)
    if k >= len(plain) - 1:
        return
    for snapshots in (True, False):
        probed, batch = play(slippery(snapshots), actions, probe_at=k)
        assert probed == plain
        assert len(batch.outcomes) == 3


def test_snapshot_and_replay_probes_agree():
    actions = [1, 1, 2, 2]
    _, a = play(slippery(True), actions, probe_at=2, alpha=20)
    _, b = play(slippery(False), actions, probe_at=2, alpha=20)
    assert a.outcomes == b.outcomes
    assert a.replay_cost == 0 and b.replay_cost == 21 * 2


def test_replay_detects_unreachable_state():
    env = GridLake(load_map("source"), snapshots=False)
    raw = env.reset(0, 0)
    k = canonical_key(raw, CFG)
    env.step(1)
    bogus = ProbeAccess(None, 0, 0, ((k, 2),), None, CFG)  # claims a step that never happened
    with pytest.raises(ProbeUnreachable):
        probe(env, (k, 1), 2, bogus)


def test_relative_truth_is_verified():
    o = StateKey.of("x=1")
    t = build_relative_truth(ProbeBatch((o, 0), (o, o)), (3, 4))
    assert t.origin == "verified" and t.counts == {o: 2} and t.built_at == (3, 4)
    with pytest.raises(ValueError):
        build_relative_truth(ProbeBatch((o, 0), ()))


# -- full cycle ----------------------------------------------------------------


def synthetic_env(before, after):
    return synthetic.make(before, schedule=DriftSchedule.from_list([(1, [{"kind": "response_set", "support": after}])]))


def one_step(env, seed, ep):
    cfg = BankConfig()
    raw = env.reset(seed, ep)
    s = canonical_key(raw, cfg)
    before = env.snapshot()
    raw, score, _ = env.step(0)
    out = canonical_key(raw, cfg)
    rec = ExperienceRecord(s, 0, out, score, Metadata((ep, 0)))
    return rec, ProbeAccess(before, seed, ep, (), out, cfg)


def test_cycle_deterministic_realigns_with_one_probe():
    env = synthetic_env({"a": 1.0}, {"b": 1.0})
    bank = ExperienceBank()
    rec0, _ = one_step(env, 0, 0)
    bank.insert(rec0)
    rec1, access = one_step(env, 0, 1)
    det = DetectorConfig(p_th=1, deterministic=True)
    rep = verify_cycle(bank, env, rec1, det, VerifierConfig(deterministic=True), PersistenceState(), access)
    assert rep.kind == REALIGNED and rep.probes_used == 1
    assert list(bank.belief(*rec1.key).counts) == [rec1.outcome]
    # the same observation is no longer surprising
    again = verify_cycle(bank, env, rec1, det, VerifierConfig(deterministic=True), PersistenceState(), access)
    assert again.kind == NO_ACTION


def test_cycle_estimates_K_from_history_and_first_probe():
    env = synthetic_env({"a": 0.5, "b": 0.5}, {"c": 1.0})
    bank = ExperienceBank()
    for seed in range(20):
        bank.insert(one_step(env, seed, 0)[0])
    rec, access = one_step(env, 0, 1)
    vcfg = VerifierConfig(epsilon=0.2, delta=0.05)
    rep = verify_cycle(bank, env, rec, DetectorConfig(p_th=1), vcfg, PersistenceState(), access)
    # history {a, b} plus probe {c}, plus one slot for the unseen
    assert rep.probes_used == weissman_budget(4, 0.2, 0.05)
    assert rep.truth.sample_size == rep.probes_used
    assert rep.truth.support == {rec.outcome: 1.0}


def test_cycle_abort_resets_persistence():
    env = synthetic_env({"a": 1.0}, {"b": 1.0})
    bank = ExperienceBank()
    bank.insert(one_step(env, 0, 0)[0])
    rec, access = one_step(env, 0, 1)
    bad = ProbeAccess(None, 0, 1, (), StateKey.of("nowhere=1"), BankConfig())
    env.supports_snapshot = False
    ps = PersistenceState()
    rep = verify_cycle(bank, env, rec, DetectorConfig(p_th=1, deterministic=True),
                       VerifierConfig(deterministic=True), ps, bad)
    assert rep.kind == ABORTED and rep.conflict and "restored" in rep.reason
    assert ps.count(rec.key) == 0
    # the bank is untouched by an aborted cycle
    assert bank.summary(*rec.key) is None
