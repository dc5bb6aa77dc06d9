"""The proposer contract plus random, replay, and hybrid proposers.

A proposer maps (space, history, budget, step) to the next config to try.
Anything honoring that contract drops into the tuning loop and benchmark
harness: random search, replayed traces, Bayesian optimization, LLM loops,
or hybrids that switch between two of them mid-run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from hpokit.space import Config, SearchSpace, sample, validate

__all__ = [
    "Trial",
    "History",
    "Proposer",
    "RandomProposer",
    "ReplayProposer",
    "HybridProposer",
    "random_propose",
    "replay_propose",
    "hybrid_propose",
    "best_so_far",
    "ScriptExhausted",
    "EmptyHistory",
    "trial_to_json",
    "trial_from_json",
    "write_trial_log",
    "read_trial_log",
]


class ScriptExhausted(Exception):
    """A replay script has no config for the requested step."""


class EmptyHistory(Exception):
    """best_so_far asked of a history with no trials."""


@dataclass(frozen=True)
class Trial:
    """One completed evaluation: the proposed config and what it cost."""

    step: int
    config: Config
    loss: float
    proposer_id: str = ""
    duration: float = 0.0
    annotations: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        object.__setattr__(self, "annotations", dict(self.annotations))


@dataclass
class History:
    """Ordered record of trials within one run's budget.

    Steps are kept 1..N consecutive; append enforces it so a run loop can't
    silently skip or duplicate a step.
    """

    budget: int
    trials: list[Trial] = field(default_factory=list)

    def append(self, trial: Trial) -> None:
        expected = len(self.trials) + 1
        if trial.step != expected:
            raise ValueError(f"expected step {expected}, got {trial.step}")
        if expected > self.budget:
            raise ValueError(f"budget {self.budget} exhausted")
        self.trials.append(trial)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    @property
    def losses(self) -> list[float]:
        return [t.loss for t in self.trials]

    @property
    def best(self) -> Trial:
        return best_so_far(self)


def best_so_far(history: History) -> Trial:
    """Min-loss trial; ties go to the earliest step."""
    if not history.trials:
        raise EmptyHistory("history has no trials")
    best = history.trials[0]
    for t in history.trials[1:]:
        if t.loss < best.loss:
            best = t
    return best


class Proposer(Protocol):
    id: str

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config: ...


def random_propose(space: SearchSpace, rng: np.random.Generator) -> Config:
    """Independent uniform draw (log-scaled where the param says so)."""
    return sample(space, rng.random(len(space.params)))


def replay_propose(script: Sequence[Config], step: int) -> Config:
    """Return the scripted config for this 1-indexed step."""
    if not 1 <= step <= len(script):
        raise ScriptExhausted(f"step {step} beyond {len(script)}-entry script")
    return script[step - 1]


def hybrid_propose(
    first: "Proposer",
    second: "Proposer",
    switch_step: int,
    space: SearchSpace,
    history: History,
    budget: int,
    step: int,
) -> Config:
    """Delegate to `first` through switch_step, then to `second`.

    The second proposer's view includes every prior trial, so e.g. BO taking
    over at step 11 conditions on the first proposer's ten evaluations.
    """
    if step <= switch_step:
        return first.propose(space, history, budget, step)
    return second.propose(space, history, budget, step)


class RandomProposer:
    """Stateful wrapper over random_propose; the rng advances per call."""

    def __init__(self, seed: int | np.random.Generator = 0):
        self.id = "random"
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config:
        return random_propose(space, self.rng)


class ReplayProposer:
    """Plays back a fixed list of configs, one per step."""

    def __init__(self, script: Sequence[Config], id: str = "replay"):
        self.id = id
        self.script = list(script)

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config:
        return replay_propose(self.script, step)


class HybridProposer:
    def __init__(self, first: Proposer, second: Proposer, switch_step: int):
        if switch_step < 0:
            raise ValueError("switch_step must be >= 0")
        self.first = first
        self.second = second
        self.switch_step = switch_step
        self.id = f"hybrid[{first.id}->{second.id}@{switch_step}]"

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config:
        return hybrid_propose(self.first, self.second, self.switch_step, space, history, budget, step)


# ---------------------------------------------------------------------------
# Trial logs (JSONL, one line per trial)

_ANNOTATION_KEYS = ("raw_response", "tokens_in", "tokens_out")


def _config_obj(space: SearchSpace, config: Config) -> dict:
    return {p.name: config[p.name] for p in space.params}


def trial_to_json(space: SearchSpace, trial: Trial) -> str:
    rec = {
        "step": trial.step,
        "config": _config_obj(space, trial.config),
        "loss": trial.loss,
        "proposer_id": trial.proposer_id,
        "duration_s": trial.duration,
        "annotations": dict(trial.annotations),
    }
    return json.dumps(rec)


def trial_from_json(space: SearchSpace, line: str) -> Trial:
    rec = json.loads(line)
    return Trial(
        step=rec["step"],
        config=validate(space, rec["config"]),
        loss=rec["loss"],
        proposer_id=rec.get("proposer_id", ""),
        duration=rec.get("duration_s", 0.0),
        annotations=rec.get("annotations", {}),
    )


def write_trial_log(path, space: SearchSpace, trials: Iterable[Trial]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(trial_to_json(space, t) + "\n")


def read_trial_log(path, space: SearchSpace) -> list[Trial]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(trial_from_json(space, line))
    return out
