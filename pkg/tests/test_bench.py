"""Benchmark harness: bootstrap baseline, comparison metrics, grid runs."""

import json
import math

import pytest

from hpokit.bench import (
    BOOTSTRAP_B,
    ExperimentSpec,
    MetricsReport,
    MissingEntry,
    POOL_SIZE,
    ProposerSpec,
    RandomPool,
    SnapToGrid,
    TOY_TASK_IDS,
    TaskSpec,
    ZeroBaseline,
    bootstrap_best,
    build_random_pool,
    load_experiment_spec,
    mean_rank,
    relative_change,
    report_from_records,
    run_experiment,
    toy_task_suite,
)
from hpokit.bo import BOProposer
from hpokit.objectives import TabularTask, ToyObjective, make_toy
from hpokit.proposers import History, RandomProposer, ReplayProposer
from hpokit.space import builtin_space, canonical_json, validate

# Pool of the ten values 0.1 .. 1.0. Exact best-of-k expectations (draws
# with replacement): E[min of 1] = 0.55, E[min of 2] = 0.385.
TEN_POOL = tuple((i + 1) / 10.0 for i in range(10))


def test_bootstrap_best_of_two_matches_exact_expectation():
    mean, stderr = bootstrap_best(TEN_POOL, k=2, seed=0)
    assert stderr > 0
    assert abs(mean - 0.385) <= 3 * stderr


def test_bootstrap_best_of_one_matches_pool_mean():
    mean, stderr = bootstrap_best(TEN_POOL, k=1, seed=0)
    assert abs(mean - 0.55) <= 3 * stderr


def test_bootstrap_constant_pool_is_exact():
    assert bootstrap_best((0.25,) * 8, k=3, seed=1) == (0.25, 0.0)


def test_bootstrap_rejects_k_below_one():
    with pytest.raises(ValueError):
        bootstrap_best(TEN_POOL, k=0)


def test_bootstrap_deterministic_per_seed():
    assert bootstrap_best(TEN_POOL, k=4, seed=9) == bootstrap_best(TEN_POOL, k=4, seed=9)
    assert bootstrap_best(TEN_POOL, k=4, seed=9) != bootstrap_best(TEN_POOL, k=4, seed=10)


def test_bootstrap_accepts_random_pool_object():
    pool = RandomPool(task_id="ack", losses=TEN_POOL, seed=0)
    assert bootstrap_best(pool, k=2, seed=0) == bootstrap_best(TEN_POOL, k=2, seed=0)


def test_default_pool_and_resample_sizes():
    assert POOL_SIZE == 500
    assert BOOTSTRAP_B == 1000


def test_build_random_pool_deterministic():
    obj = ToyObjective(make_toy("ackley"))
    task = TaskSpec(id="ack", objective=obj, space=obj.space)
    a = build_random_pool(task, n=25, seed=3)
    b = build_random_pool(task, n=25, seed=3)
    c = build_random_pool(task, n=25, seed=4)
    assert a.losses == b.losses and len(a.losses) == 25
    assert a.losses != c.losses
    assert a.task_id == "ack"
    assert all(v >= 0.0 for v in a.losses)


# -- comparison metrics


def test_relative_change_oracle():
    assert relative_change(0.2, 0.1) == pytest.approx(50.0)
    assert relative_change(0.1, 0.2) == pytest.approx(-100.0)
    assert relative_change(1.0, 1.0) == 0.0


def test_relative_change_zero_baseline():
    with pytest.raises(ZeroBaseline):
        relative_change(0.0, 0.1)


def test_mean_rank_simple_ordering():
    ranks = mean_rank({"a": [0.1, 0.2], "b": [0.3, 0.4]})
    assert ranks == {"a": 1.0, "b": 2.0}


def test_mean_rank_ties_share_average():
    ranks = mean_rank({"a": [0.1], "b": [0.1], "c": [0.5]})
    assert ranks == {"a": 1.5, "b": 1.5, "c": 3.0}


def test_mean_rank_six_identical_methods():
    table = {f"m{i}": [0.3, 0.7] for i in range(6)}
    ranks = mean_rank(table)
    assert all(r == 3.5 for r in ranks.values())


def test_mean_rank_rejects_uneven_coverage():
    with pytest.raises(MissingEntry):
        mean_rank({"a": [0.1, 0.2], "b": [0.3]})
    with pytest.raises(MissingEntry):
        mean_rank({"a": [], "b": []})
    with pytest.raises(MissingEntry):
        mean_rank({"a": [0.1], "b": [math.nan]})


# -- grid snapping


def _grid_task():
    space = builtin_space("svm")
    rows = {}
    for c in (0.001953125, 1.0, 512.0):
        cfg = validate(space, {"C": c, "gamma": 0.1})
        rows[canonical_json(space, cfg)] = c / 1000.0
    return TabularTask(space, rows)


def test_snap_to_grid_moves_to_nearest_row():
    task = _grid_task()
    off_grid = validate(task.space, {"C": 1.5, "gamma": 0.1})
    snap = SnapToGrid(ReplayProposer([off_grid]), task)
    cfg = snap.propose(task.space, History(budget=3), 3, 1)
    assert cfg["C"] == 1.0 and cfg["gamma"] == 0.1
    assert snap.last_annotations["snapped_from"] == canonical_json(task.space, off_grid)
    task.lookup(cfg)  # lands on the table


def test_snap_to_grid_leaves_grid_points_alone():
    task = _grid_task()
    on_grid = validate(task.space, {"C": 512.0, "gamma": 0.1})
    snap = SnapToGrid(ReplayProposer([on_grid]), task)
    cfg = snap.propose(task.space, History(budget=3), 3, 1)
    assert cfg["C"] == 512.0
    assert "snapped_from" not in snap.last_annotations


def test_snap_to_grid_keeps_inner_id():
    task = _grid_task()
    snap = SnapToGrid(RandomProposer(0), task)
    assert snap.id == "random"


# -- task suite and experiment spec


def test_toy_task_suite_shape():
    tasks = toy_task_suite()
    assert [t.id for t in tasks] == list(TOY_TASK_IDS)
    assert len(tasks) == 10
    by_id = {t.id: t for t in tasks}
    assert by_id["shifted_bran"].objective.fn.name == "shifted_branin"
    assert by_id["bran"].objective.fn.name == "branin"
    assert all(t.space.names == ("x1", "x2") for t in tasks)


def test_toy_task_suite_shift_seed_changes_objective():
    a = toy_task_suite(shift_seed=0)
    b = toy_task_suite(shift_seed=1)
    probe = validate(a[1].space, {"x1": 0.5, "x2": 0.5})
    assert a[1].objective.evaluate(probe).loss != b[1].objective.evaluate(probe).loss


def test_experiment_spec_rejects_empty_axes():
    obj = ToyObjective(make_toy("ackley"))
    task = TaskSpec(id="ack", objective=obj, space=obj.space)
    with pytest.raises(ValueError):
        ExperimentSpec(tasks=[], proposers=[ProposerSpec("r", RandomProposer)])
    with pytest.raises(ValueError):
        ExperimentSpec(tasks=[task], proposers=[])
    with pytest.raises(ValueError):
        ExperimentSpec(tasks=[task], proposers=[ProposerSpec("r", RandomProposer)], seeds=())


def _tiny_spec(out_dir=None, jobs=1):
    objs = [ToyObjective(make_toy("ackley")), ToyObjective(make_toy("quad2d"))]
    tasks = [TaskSpec(id=t, objective=o, space=o.space) for t, o in zip(("ack", "quad2d"), objs)]
    return ExperimentSpec(
        tasks=tasks,
        proposers=[ProposerSpec("random_search", lambda seed: RandomProposer(seed))],
        budget=3,
        seeds=(0, 1),
        pool_size=40,
        bootstrap_B=200,
        output_dir=str(out_dir) if out_dir else None,
        jobs=jobs,
    )


def test_run_experiment_records_and_report(tmp_path):
    records, report = run_experiment(_tiny_spec(tmp_path / "out"))
    baselines = [r for r in records if r["kind"] == "baseline"]
    runs = [r for r in records if r["kind"] == "run"]
    assert len(baselines) == 2 and len(runs) == 2 * 1 * 2
    assert {r["seed"] for r in runs} == {0, 1}
    assert all(len(r["losses"]) == 3 for r in runs)
    assert report.methods == ["random_search"]
    assert report.task_ids == ["ack", "quad2d"]
    assert set(report.mean_ranks) == {"random_search", "random"}
    for name in ("records.jsonl", "report.csv", "report.md"):
        assert (tmp_path / "out" / name).exists()
    md = (tmp_path / "out" / "report.md").read_text()
    assert md.startswith("| Method | Beats Random | Median Change | Mean Change | Mean Rank |")


def test_run_experiment_deterministic_bytes(tmp_path):
    run_experiment(_tiny_spec(tmp_path / "a"))
    run_experiment(_tiny_spec(tmp_path / "b"))
    for name in ("records.jsonl", "report.csv", "report.md"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_experiment_parallel_matches_serial(tmp_path):
    serial, _ = run_experiment(_tiny_spec(tmp_path / "s", jobs=1))
    parallel, _ = run_experiment(_tiny_spec(tmp_path / "p", jobs=3))
    assert serial == parallel


def test_report_matches_rerun_from_records(tmp_path):
    records, report = run_experiment(_tiny_spec())
    again = report_from_records(records)
    assert again.to_markdown() == report.to_markdown()
    assert again.to_csv() == report.to_csv()


def test_report_from_records_requires_baseline():
    run = {"kind": "run", "task": "ack", "proposer_id": "r", "best_loss": 1.0}
    with pytest.raises(MissingEntry):
        report_from_records([run])


def test_report_from_records_requires_all_cells():
    records = [
        {"kind": "baseline", "task": "ack", "mean": 1.0, "stderr": 0.1},
        {"kind": "baseline", "task": "bran", "mean": 1.0, "stderr": 0.1},
        {"kind": "run", "task": "ack", "proposer_id": "r", "best_loss": 0.5},
    ]
    with pytest.raises(MissingEntry):
        report_from_records(records)


def test_report_beats_and_changes():
    records = [
        {"kind": "baseline", "task": "t1", "mean": 0.2, "stderr": 0.01},
        {"kind": "baseline", "task": "t2", "mean": 1.0, "stderr": 0.01},
        {"kind": "run", "task": "t1", "proposer_id": "m", "best_loss": 0.1},
        {"kind": "run", "task": "t2", "proposer_id": "m", "best_loss": 2.0},
    ]
    report = report_from_records(records)
    assert report.beats_random["m"] == 0.5
    assert report.mean_change["m"] == pytest.approx((50.0 + -100.0) / 2)
    assert report.median_change["m"] == pytest.approx(-25.0)
    # wins one task, loses the other: tied mean rank with the baseline
    assert report.mean_ranks["m"] == 1.5 and report.mean_ranks["random"] == 1.5


def test_report_averages_over_seeds():
    records = [
        {"kind": "baseline", "task": "t1", "mean": 0.4, "stderr": 0.01},
        {"kind": "run", "task": "t1", "proposer_id": "m", "seed": 0, "best_loss": 0.1},
        {"kind": "run", "task": "t1", "proposer_id": "m", "seed": 1, "best_loss": 0.3},
    ]
    report = report_from_records(records)
    assert report.per_task_errors["m"] == [pytest.approx(0.2)]


def test_markdown_formatting():
    report = MetricsReport(
        methods=["m"],
        task_ids=["t1"],
        random_estimates={"t1": (0.2, 0.01)},
        per_task_errors={"m": [0.1]},
        beats_random={"m": 1.0},
        median_change={"m": 50.0},
        mean_change={"m": 50.0},
        mean_ranks={"m": 1.0, "random": 2.0},
    )
    assert "| m | 100.00% | 50.00% | 50.00% | 1.00 |" in report.to_markdown()
    csv = report.to_csv()
    assert csv.splitlines()[0] == "task,random_mean,random_stderr,m_mean_best"


def test_load_experiment_spec(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(
        json.dumps(
            {
                "tasks": [
                    {"kind": "toy_suite", "shift_seed": 0},
                    {"kind": "toy", "name": "branin", "id": "extra_bran"},
                ],
                "proposers": [
                    {"kind": "random"},
                    {"kind": "bo", "init": 2},
                    {
                        "kind": "hybrid",
                        "first": {"kind": "random"},
                        "second": {"kind": "bo"},
                        "switch_step": 4,
                    },
                ],
                "budget": 6,
                "seeds": [0, 1],
                "pool_size": 50,
                "bootstrap_B": 100,
            }
        )
    )
    spec = load_experiment_spec(path)
    assert [t.id for t in spec.tasks] == list(TOY_TASK_IDS) + ["extra_bran"]
    assert [p.id for p in spec.proposers] == ["random_search", "bo", "hybrid[random_search->bo@4]"]
    assert isinstance(spec.proposers[1].make(0), BOProposer)
    assert spec.budget == 6 and spec.seeds == [0, 1]
    assert spec.pool_size == 50 and spec.bootstrap_B == 100


def test_load_experiment_spec_rejects_unknown_kind(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"tasks": [{"kind": "mystery"}], "proposers": [{"kind": "random"}]}))
    with pytest.raises(ValueError):
        load_experiment_spec(path)
