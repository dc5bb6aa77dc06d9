"""History bookkeeping and the random/replay/hybrid proposers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpokit.proposers import (
    EmptyHistory,
    History,
    HybridProposer,
    RandomProposer,
    ReplayProposer,
    ScriptExhausted,
    Trial,
    best_so_far,
    random_propose,
    read_trial_log,
    trial_from_json,
    trial_to_json,
    write_trial_log,
)
from hpokit.space import builtin_space, sample, validate


def _trial(step, loss, **kw):
    space = builtin_space("svm")
    return Trial(step=step, config=validate(space, {"C": 1.0, "gamma": 0.1}), loss=loss, **kw)


def test_trial_rejects_step_zero():
    with pytest.raises(ValueError, match="step"):
        _trial(0, 1.0)


def test_history_enforces_consecutive_steps():
    h = History(budget=3)
    h.append(_trial(1, 0.5))
    with pytest.raises(ValueError, match="expected step 2"):
        h.append(_trial(3, 0.4))
    h.append(_trial(2, 0.4))
    assert h.losses == [0.5, 0.4]


def test_history_enforces_budget():
    h = History(budget=1)
    h.append(_trial(1, 0.5))
    with pytest.raises(ValueError, match="budget"):
        h.append(_trial(2, 0.4))


def test_best_so_far_tie_goes_to_earliest():
    h = History(budget=3)
    h.append(_trial(1, 0.4))
    h.append(_trial(2, 0.4))
    h.append(_trial(3, 0.9))
    assert best_so_far(h).step == 1
    assert h.best.step == 1


def test_best_so_far_empty():
    with pytest.raises(EmptyHistory):
        best_so_far(History(budget=5))


def test_random_proposer_seeded_and_in_range(svm_space):
    a = RandomProposer(42)
    b = RandomProposer(42)
    h = History(budget=5)
    for step in range(1, 4):
        ca = a.propose(svm_space, h, 5, step)
        cb = b.propose(svm_space, h, 5, step)
        assert ca.as_dict() == cb.as_dict()
        validate(svm_space, ca.as_dict())
    assert a.id == "random"


def test_random_proposer_accepts_generator(svm_space):
    rng = np.random.default_rng(7)
    p = RandomProposer(rng)
    assert p.rng is rng


@settings(max_examples=100)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_random_propose_always_valid(seed):
    space = builtin_space("nn")
    cfg = random_propose(space, np.random.default_rng(seed))
    validate(space, cfg.as_dict())


def test_replay_proposer_in_order_then_exhausts(svm_space):
    script = [sample(svm_space, [u, u]) for u in (0.1, 0.5, 0.9)]
    p = ReplayProposer(script)
    h = History(budget=4)
    assert p.propose(svm_space, h, 4, 2)["C"] == script[1]["C"]
    assert p.propose(svm_space, h, 4, 1)["C"] == script[0]["C"]
    with pytest.raises(ScriptExhausted):
        p.propose(svm_space, h, 4, 4)


def test_hybrid_switches_at_step(svm_space):
    first = ReplayProposer([sample(svm_space, [0.0, 0.0])] * 10, id="lo")
    second = ReplayProposer([sample(svm_space, [1.0, 1.0])] * 10, id="hi")
    p = HybridProposer(first, second, switch_step=2)
    h = History(budget=4)
    assert p.propose(svm_space, h, 4, 1)["C"] == svm_space["C"].lower
    assert p.propose(svm_space, h, 4, 2)["C"] == svm_space["C"].lower
    assert p.propose(svm_space, h, 4, 3)["C"] == svm_space["C"].upper
    assert p.id == "hybrid[lo->hi@2]"


def test_hybrid_rejects_negative_switch(svm_space):
    with pytest.raises(ValueError):
        HybridProposer(RandomProposer(), RandomProposer(), -1)


def test_trial_log_roundtrip(tmp_path, svm_space):
    trials = [
        _trial(1, 0.5, proposer_id="random", duration=0.01),
        _trial(2, 0.25, proposer_id="llm", annotations={"raw_response": "{}", "tokens_in": 10}),
    ]
    path = tmp_path / "trials.jsonl"
    write_trial_log(path, svm_space, trials)
    back = read_trial_log(path, svm_space)
    assert len(back) == 2
    assert back[0].loss == 0.5
    assert back[1].annotations["tokens_in"] == 10
    assert back[1].config.as_dict() == trials[1].config.as_dict()


def test_trial_json_keys_in_space_order(svm_space):
    line = trial_to_json(svm_space, _trial(1, 0.5))
    assert line.index('"C"') < line.index('"gamma"')
    t = trial_from_json(svm_space, line)
    assert t.step == 1 and t.loss == 0.5
