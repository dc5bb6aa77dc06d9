"""Benchmark harness: random pools, bootstrapped baselines, metrics, grids.

The random-search baseline is estimated the cheap way: evaluate a fixed pool
of 500 random configs once per task, then bootstrap best-of-k draws from the
pool instead of rerunning search. Methods are compared by how often they
strictly beat that estimate, by median/mean relative change against it, and
by mean rank across tasks.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from hpokit import bo as bo_mod
from hpokit.bo import Normalizer
from hpokit.loop import run_tuning
from hpokit.objectives import TabularTask, ToyObjective, load_tabular_task, make_shifted, make_toy
from hpokit.proposers import (
    History,
    HybridProposer,
    Proposer,
    RandomProposer,
    best_so_far,
    random_propose,
)
from hpokit.space import Config, SearchSpace, canonical_json

__all__ = [
    "RandomPool",
    "TaskSpec",
    "ProposerSpec",
    "ExperimentSpec",
    "MetricsReport",
    "ZeroBaseline",
    "MissingEntry",
    "build_random_pool",
    "bootstrap_best",
    "relative_change",
    "mean_rank",
    "run_experiment",
    "report_from_records",
    "SnapToGrid",
    "toy_task_suite",
    "TOY_TASK_IDS",
    "load_experiment_spec",
]

POOL_SIZE = 500
BOOTSTRAP_B = 1000

# Table-4-shaped toy grid: short ids in display order.
TOY_TASK_IDS = (
    "ack",
    "shifted_ack",
    "bran",
    "shifted_bran",
    "rosen",
    "shifted_rosen",
    "himmel",
    "shifted_himmel",
    "quad2d",
    "quad2d_illcond",
)

_TOY_SHORT_TO_FULL = {
    "ack": "ackley",
    "bran": "branin",
    "rosen": "rosenbrock",
    "himmel": "himmelblau",
    "quad2d": "quad2d",
    "quad2d_illcond": "quad2d_illcond",
}


class ZeroBaseline(ZeroDivisionError):
    pass


class MissingEntry(KeyError):
    pass


@dataclass(frozen=True)
class RandomPool:
    task_id: str
    losses: tuple[float, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(float(v) for v in self.losses))


@dataclass(frozen=True)
class TaskSpec:
    id: str
    objective: object  # anything with evaluate(config) -> EvalResult
    space: SearchSpace


@dataclass(frozen=True)
class ProposerSpec:
    id: str
    make: Callable[[int], Proposer]  # fresh, seeded instance per grid cell


@dataclass
class ExperimentSpec:
    tasks: list[TaskSpec]
    proposers: list[ProposerSpec]
    budget: int = 10
    seeds: Sequence[int] = (0, 1, 2)
    pool_size: int = POOL_SIZE
    bootstrap_B: int = BOOTSTRAP_B
    output_dir: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.tasks or not self.proposers or not len(self.seeds):
            raise ValueError("tasks, proposers, and seeds must be non-empty")


def build_random_pool(task: TaskSpec, n: int = POOL_SIZE, seed: int = 0) -> RandomPool:
    """Evaluate n independent random configs; deterministic per seed."""
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(n):
        config = random_propose(task.space, rng)
        losses.append(task.objective.evaluate(config).loss)
    return RandomPool(task_id=task.id, losses=tuple(losses), seed=seed)


def bootstrap_best(pool: RandomPool | Sequence[float], k: int, B: int = BOOTSTRAP_B, seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of best-of-k over B resamples of the pool."""
    if k < 1:
        raise ValueError("k must be >= 1")
    losses = np.asarray(pool.losses if isinstance(pool, RandomPool) else pool, dtype=float)
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(losses), size=(B, k))
    mins = losses[draws].min(axis=1)
    return float(mins.mean()), float(mins.std() / math.sqrt(B))


def relative_change(e_random: float, e_method: float) -> float:
    """Percent improvement over the random baseline (0.2 -> 0.1 is +50%)."""
    if e_random == 0:
        raise ZeroBaseline("random baseline error is zero")
    return 100.0 * (e_random - e_method) / e_random


def mean_rank(per_task_errors: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Average rank of each method across tasks; ties share the average rank."""
    methods = list(per_task_errors)
    lengths = {len(per_task_errors[m]) for m in methods}
    if len(lengths) != 1:
        raise MissingEntry(f"methods cover different task counts: { {m: len(v) for m, v in per_task_errors.items()} }")
    (n_tasks,) = lengths
    if n_tasks == 0:
        raise MissingEntry("no tasks")
    totals = {m: 0.0 for m in methods}
    for t in range(n_tasks):
        col = np.array([per_task_errors[m][t] for m in methods], dtype=float)
        if np.any(np.isnan(col)):
            raise MissingEntry(f"missing error for task index {t}")
        ranks = rankdata(col, method="average")
        for m, r in zip(methods, ranks):
            totals[m] += float(r)
    return {m: totals[m] / n_tasks for m in methods}


# ---------------------------------------------------------------------------
# Grid snapping for tabular tasks


class SnapToGrid:
    """Wraps a proposer so its proposals land on the tabulated grid.

    The nearest grid point in normalized space is used, and the pre-snap
    config is recorded in the trial annotations.
    """

    def __init__(self, inner: Proposer, task: TabularTask):
        self.inner = inner
        self.task = task
        self.id = inner.id
        self._norm = Normalizer(task.space)
        self._grid = task.configs()
        self._units = np.stack([self._norm.to_unit(c) for c in self._grid])
        self.last_annotations: dict = {}

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config:
        raw = self.inner.propose(space, history, budget, step)
        u = self._norm.to_unit(raw)
        j = int(np.argmin(((self._units - u) ** 2).sum(axis=1)))
        snapped = self._grid[j]
        self.last_annotations = dict(getattr(self.inner, "last_annotations", {}) or {})
        before = canonical_json(space, raw)
        after = canonical_json(space, snapped)
        if before != after:
            self.last_annotations["snapped_from"] = before
        return snapped


# ---------------------------------------------------------------------------
# Task and experiment construction


def toy_task_suite(shift_seed: int = 0) -> list[TaskSpec]:
    """The ten-row toy grid: each function unshifted and shifted."""
    tasks = []
    for tid in TOY_TASK_IDS:
        shifted = tid.startswith("shifted_")
        short = tid[len("shifted_") :] if shifted else tid
        fn = make_toy(_TOY_SHORT_TO_FULL[short])
        obj = ToyObjective(make_shifted(fn, shift_seed)) if shifted else ToyObjective(fn)
        tasks.append(TaskSpec(id=tid, objective=obj, space=obj.space))
    return tasks


def _make_toy_task(entry: Mapping) -> list[TaskSpec]:
    kind = entry.get("kind")
    if kind == "toy_suite":
        return toy_task_suite(shift_seed=int(entry.get("shift_seed", 0)))
    if kind == "toy":
        name = entry["name"]
        fn = make_toy(name)
        if "shift_seed" in entry:
            obj = ToyObjective(make_shifted(fn, int(entry["shift_seed"])))
            tid = entry.get("id", f"shifted_{name}")
        else:
            obj = ToyObjective(fn)
            tid = entry.get("id", name)
        return [TaskSpec(id=tid, objective=obj, space=obj.space)]
    if kind == "tabular":
        task = load_tabular_task(entry["path"])
        return [TaskSpec(id=entry.get("id", task.name), objective=task, space=task.space)]
    raise ValueError(f"unknown task kind {kind!r}")


def _make_proposer_spec(entry: Mapping) -> ProposerSpec:
    kind = entry.get("kind")
    if kind == "random":
        return ProposerSpec("random_search", lambda seed: RandomProposer(seed))
    if kind == "bo":
        acq = bo_mod.AcquisitionConfig(
            xi=float(entry.get("xi", 0.01)),
            candidate_count=int(entry.get("candidates", 2048)),
            initial_design_size=int(entry.get("init", 3)),
        )
        return ProposerSpec("bo", lambda seed: bo_mod.BOProposer(seed, acq))
    if kind == "hybrid":
        first = _make_proposer_spec(entry["first"])
        second = _make_proposer_spec(entry["second"])
        switch = int(entry["switch_step"])
        return ProposerSpec(
            f"hybrid[{first.id}->{second.id}@{switch}]",
            lambda seed: HybridProposer(first.make(seed), second.make(seed + 1), switch),
        )
    if kind == "llm":
        from hpokit.llm_client import client_from_env
        from hpokit.llm_proposer import LLMProposer

        def make(seed: int) -> Proposer:
            client, model = client_from_env()
            return LLMProposer(
                client,
                entry.get("model", model),
                mode=entry.get("mode", "chat"),
                reasoning=entry.get("reasoning", "plain"),
                expert=bool(entry.get("expert", False)),
                temperature=float(entry.get("temperature", 0.0)),
                random_fallback=bool(entry.get("random_fallback", False)),
                fallback_rng=np.random.default_rng(seed),
            )

        return ProposerSpec(entry.get("id", "llm"), make)
    raise ValueError(f"unknown proposer kind {kind!r}")


def load_experiment_spec(path) -> ExperimentSpec:
    """Spec file: {tasks, proposers, budget, seeds, pool_size, bootstrap_B, output_dir}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    tasks: list[TaskSpec] = []
    for entry in data["tasks"]:
        tasks.extend(_make_toy_task(entry))
    proposers = [_make_proposer_spec(e) for e in data["proposers"]]
    return ExperimentSpec(
        tasks=tasks,
        proposers=proposers,
        budget=int(data.get("budget", 10)),
        seeds=list(data.get("seeds", [0, 1, 2])),
        pool_size=int(data.get("pool_size", POOL_SIZE)),
        bootstrap_B=int(data.get("bootstrap_B", BOOTSTRAP_B)),
        output_dir=data.get("output_dir"),
    )


# ---------------------------------------------------------------------------
# The grid


@dataclass
class MetricsReport:
    methods: list[str]
    task_ids: list[str]
    random_estimates: dict  # task -> (mean, stderr)
    per_task_errors: dict  # method -> list aligned with task_ids
    beats_random: dict  # method -> fraction
    median_change: dict
    mean_change: dict
    mean_ranks: dict

    def to_markdown(self) -> str:
        lines = [
            "| Method | Beats Random | Median Change | Mean Change | Mean Rank |",
            "|---|---|---|---|---|",
        ]
        for m in self.methods:
            lines.append(
                f"| {m} | {100.0 * self.beats_random[m]:.2f}% "
                f"| {self.median_change[m]:.2f}% | {self.mean_change[m]:.2f}% "
                f"| {self.mean_ranks[m]:.2f} |"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        header = ["task", "random_mean", "random_stderr"] + [f"{m}_mean_best" for m in self.methods]
        rows = [",".join(header)]
        for t_idx, tid in enumerate(self.task_ids):
            mean, stderr = self.random_estimates[tid]
            cells = [tid, repr(mean), repr(stderr)]
            cells += [repr(self.per_task_errors[m][t_idx]) for m in self.methods]
            rows.append(",".join(cells))
        return "\n".join(rows) + "\n"


def _run_cell(task: TaskSpec, pspec: ProposerSpec, seed: int, budget: int) -> dict:
    proposer = pspec.make(seed)
    if isinstance(task.objective, TabularTask):
        proposer = SnapToGrid(proposer, task.objective)
    history = run_tuning(task.objective, task.space, proposer, budget)
    best = best_so_far(history)
    return {
        "kind": "run",
        "task": task.id,
        "proposer_id": pspec.id,
        "seed": seed,
        "budget": budget,
        "best_loss": best.loss,
        "best_step": best.step,
        "best_config": json.loads(canonical_json(task.space, best.config)),
        "losses": history.losses,
    }


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], MetricsReport]:
    """Execute tasks x proposers x seeds; write records + reports if asked."""
    records: list[dict] = []
    estimates: dict[str, tuple[float, float]] = {}
    for t_idx, task in enumerate(spec.tasks):
        pool = build_random_pool(task, n=spec.pool_size, seed=1_000_003 + t_idx)
        est = bootstrap_best(pool, k=spec.budget, B=spec.bootstrap_B, seed=7 + t_idx)
        estimates[task.id] = est
        records.append(
            {
                "kind": "baseline",
                "task": task.id,
                "proposer_id": "random",
                "pool_size": spec.pool_size,
                "bootstrap_B": spec.bootstrap_B,
                "budget": spec.budget,
                "mean": est[0],
                "stderr": est[1],
            }
        )

    cells = [(task, pspec, seed) for task in spec.tasks for pspec in spec.proposers for seed in spec.seeds]
    if spec.jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            run_records = list(pool.map(lambda c: _run_cell(c[0], c[1], c[2], spec.budget), cells))
    else:
        run_records = [_run_cell(t, p, s, spec.budget) for t, p, s in cells]
    records.extend(run_records)

    report = report_from_records(records)
    if spec.output_dir:
        os.makedirs(spec.output_dir, exist_ok=True)
        with open(os.path.join(spec.output_dir, "records.jsonl"), "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        with open(os.path.join(spec.output_dir, "report.csv"), "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        with open(os.path.join(spec.output_dir, "report.md"), "w", encoding="utf-8") as fh:
            fh.write(report.to_markdown())
    return records, report


def report_from_records(records: Sequence[Mapping]) -> MetricsReport:
    """Aggregate run + baseline records into the comparison metrics.

    A method's per-task error is its mean best loss over seeds; "beats
    random" is a strict improvement on the bootstrap mean; ranks include the
    random baseline as a method.
    """
    estimates: dict[str, tuple[float, float]] = {}
    by_cell: dict[tuple[str, str], list[float]] = {}
    task_ids: list[str] = []
    methods: list[str] = []
    for rec in records:
        if rec.get("kind") == "baseline":
            if rec["task"] not in task_ids:
                task_ids.append(rec["task"])
            estimates[rec["task"]] = (float(rec["mean"]), float(rec["stderr"]))
        elif rec.get("kind") == "run":
            if rec["task"] not in task_ids:
                task_ids.append(rec["task"])
            if rec["proposer_id"] not in methods:
                methods.append(rec["proposer_id"])
            by_cell.setdefault((rec["task"], rec["proposer_id"]), []).append(float(rec["best_loss"]))
    missing = [t for t in task_ids if t not in estimates]
    if missing:
        raise MissingEntry(f"no random baseline for tasks {missing}")

    per_task_errors: dict[str, list[float]] = {m: [] for m in methods}
    for tid in task_ids:
        for m in methods:
            losses = by_cell.get((tid, m))
            if not losses:
                raise MissingEntry(f"no runs for ({tid}, {m})")
            per_task_errors[m].append(float(np.mean(losses)))

    beats = {}
    med_change = {}
    mean_change = {}
    for m in methods:
        wins = 0
        changes = []
        for t_idx, tid in enumerate(task_ids):
            e_rand = estimates[tid][0]
            e_meth = per_task_errors[m][t_idx]
            if e_meth < e_rand:
                wins += 1
            changes.append(relative_change(e_rand, e_meth))
        beats[m] = wins / len(task_ids)
        med_change[m] = float(np.median(changes))
        mean_change[m] = float(np.mean(changes))

    rank_table = dict(per_task_errors)
    rank_table["random"] = [estimates[tid][0] for tid in task_ids]
    ranks = mean_rank(rank_table)

    return MetricsReport(
        methods=methods,
        task_ids=task_ids,
        random_estimates=estimates,
        per_task_errors=per_task_errors,
        beats_random=beats,
        median_change=med_change,
        mean_change=mean_change,
        mean_ranks={m: ranks[m] for m in methods + ["random"]},
    )
