import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from glovesim.bank import ExperienceBank, ExperienceRecord, Metadata, OutcomeDistribution, StateKey
from glovesim.detect import (
    FIXED,
    Decision,
    DetectorConfig,
    PersistenceState,
    check_transition,
    default_p_th,
    hoeffding_epsilon,
    is_surprising,
    observe,
    surprise_threshold,
)

A, B, C = (StateKey.of(f"o={x}") for x in "abc")
S0 = StateKey.of("s=0")


def oracle_eps(n, delta):
    # independent restatement: solve exp(-2 n t^2) = delta for t
    return (math.log(1 / delta) / (2 * n)) ** 0.5


@pytest.mark.parametrize("n,expected", [(50, 0.173082), (200, 0.086541)])
def test_hoeffding_values(n, expected):
    assert hoeffding_epsilon(n, 0.05) == pytest.approx(expected, abs=5e-7)
    assert hoeffding_epsilon(n, 0.05) == pytest.approx(oracle_eps(n, 0.05), rel=1e-12)


@pytest.mark.parametrize("n,delta", [(0, 0.05), (1.5, 0.05), (10, 0.0), (10, 1.0)])
def test_hoeffding_rejects_bad_input(n, delta):
    with pytest.raises(ValueError):
        hoeffding_epsilon(n, delta)


def test_threshold_floor_and_fixed_mode():
    cfg = DetectorConfig(epsilon_min=0.05)
    assert surprise_threshold(10_000, cfg) == 0.05
    assert surprise_threshold(50, cfg) == pytest.approx(0.173082, abs=1e-6)
    assert surprise_threshold(50, DetectorConfig(epsilon_mode=FIXED, epsilon=0.2)) == 0.2


def test_deterministic_detection_is_exact_mismatch():
    cfg = DetectorConfig(deterministic=True, p_th=1)
    hist = OutcomeDistribution({A: 99, B: 1}, 100)
    # B has mass 0.01, far below any threshold, yet it was seen: not surprising
    assert not is_surprising(hist, B, cfg)
    assert is_surprising(hist, C, cfg)
    assert default_p_th(True) == 1 and default_p_th(False) == 2


def test_rare_outcome_is_surprising_when_stochastic():
    hist = OutcomeDistribution({A: 99, B: 1}, 100)
    assert is_surprising(hist, B, DetectorConfig())
    assert not is_surprising(hist, A, DetectorConfig())


def test_persistence_needs_consecutive_surprises():
    cfg = DetectorConfig(p_th=2)
    ps = PersistenceState()
    k = (S0, 0)
    assert observe(ps, k, True, cfg) is Decision.NONE
    assert observe(ps, k, False, cfg) is Decision.NONE  # streak broken
    assert observe(ps, k, True, cfg) is Decision.NONE
    assert observe(ps, k, True, cfg) is Decision.TRIGGER
    assert ps.count(k) == 0


def test_novel_keys_never_trigger():
    bank = ExperienceBank()
    e = ExperienceRecord(S0, 0, A, 0.0, Metadata((0, 0)))
    chk = check_transition(bank, e, DetectorConfig(p_th=1), PersistenceState())
    assert chk.decision is Decision.NONE and chk.hist is None


def test_check_transition_triggers_on_mismatch():
    bank = ExperienceBank()
    bank.insert(ExperienceRecord(S0, 0, A, 0.0, Metadata((0, 0))))
    e = ExperienceRecord(S0, 0, B, 0.0, Metadata((1, 0)))
    chk = check_transition(bank, e, DetectorConfig(p_th=1, deterministic=True), PersistenceState())
    assert chk.decision is Decision.TRIGGER and chk.surprising


@pytest.mark.invariant
@given(st.lists(st.booleans(), max_size=60), st.integers(1, 5))
def test_trigger_iff_streak_reaches_p_th(flags, p_th):
    cfg = DetectorConfig(p_th=p_th)
    ps = PersistenceState()
    streak = 0
    for f in flags:
        d = observe(ps, (S0, 0), f, cfg)
        streak = streak + 1 if f else 0
        if streak == p_th:
            assert d is Decision.TRIGGER
            streak = 0
        else:
            assert d is Decision.NONE
        assert ps.count((S0, 0)) == streak


@pytest.mark.invariant
@given(st.integers(1, 10_000), st.floats(0.001, 0.5))
def test_threshold_monotone_in_n(n, delta):
    cfg = DetectorConfig(delta=delta, epsilon_min=0.01)
    assert surprise_threshold(n + 1, cfg) <= surprise_threshold(n, cfg)
