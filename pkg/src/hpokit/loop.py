"""Single-run orchestration: drive one proposer against one objective.

Also owns the on-disk run layout (run.json metadata + trials.jsonl) and the
replay verifier that re-executes a logged trajectory and checks the losses
still match.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable

from hpokit.objectives import (
    EvalResult,
    ExternalObjective,
    ShiftedObjective,
    TabularTask,
    ToyObjective,
    load_tabular_task,
    make_shifted,
    make_toy,
)
from hpokit.proposers import History, Proposer, Trial, read_trial_log, write_trial_log
from hpokit.space import SearchSpace, space_from_dict, space_to_dict

__all__ = [
    "run_tuning",
    "save_run",
    "load_run",
    "objective_descriptor",
    "objective_from_descriptor",
    "replay_run",
    "ReplayMismatch",
    "TOY_LOSS_TOLERANCE",
]

TOY_LOSS_TOLERANCE = 1e-12


def run_tuning(
    objective,
    space: SearchSpace,
    proposer: Proposer,
    budget: int,
    on_trial: Callable[[Trial], None] | None = None,
) -> History:
    """Propose-evaluate-record until the budget is exhausted."""
    history = History(budget=budget)
    for step in range(1, budget + 1):
        config = proposer.propose(space, history, budget, step)
        result: EvalResult = objective.evaluate(config)
        trial = Trial(
            step=step,
            config=config,
            loss=result.loss,
            proposer_id=proposer.id,
            duration=result.duration,
            annotations=dict(getattr(proposer, "last_annotations", {}) or {}),
        )
        history.append(trial)
        if on_trial is not None:
            on_trial(trial)
    return history


def objective_descriptor(objective) -> dict:
    """A JSON-able record sufficient to rebuild (or refuse to rebuild) it."""
    if isinstance(objective, ToyObjective):
        fn = objective.fn
        if isinstance(fn, ShiftedObjective):
            return {
                "kind": "toy",
                "name": fn.base.name,
                "shift_seed": fn.seed,
                "shift": list(fn.shift),
            }
        return {"kind": "toy", "name": fn.name}
    if isinstance(objective, TabularTask):
        desc = {"kind": "tabular", "metric_name": objective.metric_name}
        path = getattr(objective, "source_path", None)
        if path:
            desc["path"] = str(path)
        return desc
    if isinstance(objective, ExternalObjective):
        return {"kind": "external", "command": list(objective.command), "timeout": objective.timeout}
    return {"kind": "opaque", "repr": repr(objective)}


def objective_from_descriptor(desc: dict):
    kind = desc.get("kind")
    if kind == "toy":
        fn = make_toy(desc["name"])
        if "shift_seed" in desc:
            shifted = make_shifted(fn, int(desc["shift_seed"]))
            recorded = desc.get("shift")
            if recorded is not None and tuple(recorded) != shifted.shift:
                raise ValueError(
                    f"recorded shift {recorded} does not match seed {desc['shift_seed']}"
                )
            return ToyObjective(shifted)
        return ToyObjective(fn)
    if kind == "tabular":
        path = desc.get("path")
        if not path:
            raise ValueError("tabular run metadata lacks the task file path")
        task = load_tabular_task(path)
        task.source_path = path
        return task
    if kind == "external":
        return ExternalObjective(desc["command"], timeout=desc.get("timeout", 600.0))
    raise ValueError(f"cannot rebuild objective of kind {kind!r}")


def save_run(out_dir, space: SearchSpace, history: History, objective, meta: dict | None = None) -> None:
    """Write run.json + trials.jsonl; meta carries flags, seed, cost, etc."""
    os.makedirs(out_dir, exist_ok=True)
    run = {
        "space": space_to_dict(space),
        "objective": objective_descriptor(objective),
        "budget": history.budget,
    }
    if meta:
        run.update(meta)
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(run, fh, indent=2)
        fh.write("\n")
    write_trial_log(os.path.join(out_dir, "trials.jsonl"), space, history.trials)


def load_run(run_dir) -> tuple[dict, SearchSpace, list[Trial]]:
    with open(os.path.join(run_dir, "run.json"), "r", encoding="utf-8") as fh:
        run = json.load(fh)
    space = space_from_dict(run["space"])
    trials = read_trial_log(os.path.join(run_dir, "trials.jsonl"), space)
    return run, space, trials


@dataclass(frozen=True)
class ReplayMismatch:
    step: int
    logged_loss: float
    replayed_loss: float


def replay_run(run_dir, objective=None) -> list[ReplayMismatch]:
    """Re-evaluate a logged trajectory; empty result means it verified.

    Toy losses must match within TOY_LOSS_TOLERANCE; tabular losses exactly.
    """
    run, space, trials = load_run(run_dir)
    if objective is None:
        objective = objective_from_descriptor(run["objective"])
    exact = isinstance(objective, TabularTask)
    tol = 0.0 if exact else TOY_LOSS_TOLERANCE
    mismatches = []
    for trial in trials:
        result = objective.evaluate(trial.config)
        if abs(result.loss - trial.loss) > tol:
            mismatches.append(ReplayMismatch(trial.step, trial.loss, result.loss))
    return mismatches
