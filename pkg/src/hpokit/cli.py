"""Command-line surface: tune, bench, codegen, replay, report.

Exit codes: 0 ok, 2 configuration error, 3 evaluation error, 4 LLM or
protocol error. Typed error names go to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import shlex
import sys

import numpy as np

from hpokit import bench as bench_mod
from hpokit import bo as bo_mod
from hpokit import codegen as codegen_mod
from hpokit.llm_client import AuthError, CostLedger, LLMError, client_from_env
from hpokit.llm_proposer import LLMProposer, ProposalFailed, build_toy_prompt
from hpokit.loop import load_run, replay_run, run_tuning, save_run
from hpokit.objectives import (
    ExternalError,
    ExternalObjective,
    MissingRow,
    ProtocolError,
    TOY_FUNCTIONS,
    ToyObjective,
    load_tabular_task,
    make_shifted,
    make_toy,
)
from hpokit.proposers import (
    HybridProposer,
    RandomProposer,
    ReplayProposer,
    ScriptExhausted,
    best_so_far,
)
from hpokit.space import BUILTIN_SPACES, ValidationErrors, builtin_space, canonical_json, load_space, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVAL = 3
EXIT_LLM = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        self.code = code
        super().__init__(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpokit", description="Hyperparameter tuning with pluggable proposers")
    sub = parser.add_subparsers(dest="command", required=True)

    tune = sub.add_parser("tune", help="run one tuning loop")
    tune.add_argument("--space", help=f"space JSON file or builtin name {BUILTIN_SPACES}")
    tune.add_argument("--objective", help="toy function name, shifted_<name>, or tabular task JSON file")
    tune.add_argument("--external", help="external trainer command (one NDJSON request per evaluation)")
    tune.add_argument("--timeout", type=float, default=600.0, help="external evaluation timeout (s)")
    tune.add_argument("--shift-seed", type=int, default=0, help="seed for the shifted-toy offset")
    tune.add_argument(
        "--proposer", default="random", choices=["random", "bo", "llm", "replay", "hybrid"]
    )
    tune.add_argument("--budget", type=int, default=10)
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--mode", default="chat", choices=["chat", "compressed"])
    tune.add_argument("--reasoning", default="plain", choices=["plain", "cot"])
    tune.add_argument("--expert", action="store_true", help="send the expert system prompt")
    tune.add_argument("--temperature", type=float, default=0.0)
    tune.add_argument("--model", help="override LLM_MODEL")
    tune.add_argument("--toy-prompt", type=int, choices=[0, 1, 2, 3], default=2,
                      help="initial-prompt variant for toy objectives with --proposer llm")
    tune.add_argument("--clamp", action="store_true", help="clamp out-of-range LLM proposals instead of re-asking")
    tune.add_argument("--fallback-random", action="store_true",
                      help="fall back to a random config when LLM proposals keep failing")
    tune.add_argument("--script", help="JSON file with a list of config objects (replay proposer)")
    tune.add_argument("--switch-step", type=int, default=10, help="hybrid: last step served by the first proposer")
    tune.add_argument("--first", default="llm", choices=["random", "bo", "llm", "replay"])
    tune.add_argument("--second", default="bo", choices=["random", "bo", "llm", "replay"])
    tune.add_argument("--out", help="directory for run.json + trials.jsonl")

    bench = sub.add_parser("bench", help="run an experiment grid from a spec file")
    bench.add_argument("--spec", required=True)
    bench.add_argument("--out", help="override the spec's output_dir")
    bench.add_argument("--jobs", type=int, default=1)

    replay = sub.add_parser("replay", help="re-execute a logged run and verify losses")
    replay.add_argument("--trace", required=True, help="run directory (run.json + trials.jsonl)")

    codegen = sub.add_parser("codegen", help="LLM-generated model/optimizer tuning session")
    codegen.add_argument("--dataset", required=True, help="dataset descriptor JSON")
    codegen.add_argument("--budget", type=int, default=5)
    codegen.add_argument("--runner", help="trainer-runner command (default: trainer-runner --dataset <data_path>)")
    codegen.add_argument("--timeout", type=float, default=600.0)
    codegen.add_argument("--epochs", type=int, default=10)
    codegen.add_argument("--seed", type=int, default=0)
    codegen.add_argument("--model", help="override LLM_MODEL")
    codegen.add_argument("--temperature", type=float, default=0.0)
    codegen.add_argument("--out", help="directory for the session transcript and trials")

    report = sub.add_parser("report", help="recompute metrics from a records file")
    report.add_argument("--records", required=True)
    report.add_argument("--out", help="directory for report.csv + report.md")

    return parser


def _resolve_objective(args):
    if args.external:
        if not args.space:
            raise CliError("--external requires --space", EXIT_CONFIG)
        space = _resolve_space(args.space)
        return ExternalObjective(shlex.split(args.external), timeout=args.timeout), space
    name = args.objective
    if not name:
        raise CliError("one of --objective or --external is required", EXIT_CONFIG)
    base = name[len("shifted_") :] if name.startswith("shifted_") else name
    if base in TOY_FUNCTIONS:
        fn = make_toy(base)
        obj = ToyObjective(make_shifted(fn, args.shift_seed)) if name.startswith("shifted_") else ToyObjective(fn)
        return obj, obj.space
    if os.path.exists(name):
        task = load_tabular_task(name)
        return task, task.space
    raise CliError(
        f"unknown objective {name!r}: not a toy function ({sorted(TOY_FUNCTIONS)}) and not a file",
        EXIT_CONFIG,
    )


def _resolve_space(spec: str):
    if spec in BUILTIN_SPACES:
        return builtin_space(spec)
    if os.path.exists(spec):
        return load_space(spec)
    raise CliError(f"unknown space {spec!r}: not builtin {BUILTIN_SPACES} and not a file", EXIT_CONFIG)


def _load_script(path, space):
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    return [validate(space, e) for e in entries]


def _make_llm_proposer(args, space, objective, ledger: CostLedger):
    try:
        client, env_model = client_from_env()
    except AuthError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    initial_prompt = None
    if isinstance(objective, ToyObjective):
        initial_prompt = build_toy_prompt(args.toy_prompt, objective.fn.domain, args.budget)
    return LLMProposer(
        client,
        args.model or env_model,
        mode=args.mode,
        reasoning=args.reasoning,
        expert=args.expert,
        temperature=args.temperature,
        initial_prompt=initial_prompt,
        clamp=args.clamp,
        random_fallback=args.fallback_random,
        fallback_rng=np.random.default_rng(args.seed),
        ledger=ledger,
    )


def _make_proposer(kind: str, args, space, objective, ledger: CostLedger):
    if kind == "random":
        return RandomProposer(args.seed)
    if kind == "bo":
        return bo_mod.BOProposer(args.seed)
    if kind == "llm":
        return _make_llm_proposer(args, space, objective, ledger)
    if kind == "replay":
        if not args.script:
            raise CliError("--proposer replay requires --script", EXIT_CONFIG)
        return ReplayProposer(_load_script(args.script, space))
    if kind == "hybrid":
        first = _make_proposer(args.first, args, space, objective, ledger)
        second = _make_proposer(args.second, args, space, objective, ledger)
        return HybridProposer(first, second, args.switch_step)
    raise CliError(f"unknown proposer {kind!r}", EXIT_CONFIG)


def _cmd_tune(args) -> int:
    objective, space = _resolve_objective(args)
    ledger = CostLedger()
    proposer = _make_proposer(args.proposer, args, space, objective, ledger)
    if hasattr(objective, "rows"):  # tabular: keep proposals on the grid
        proposer = bench_mod.SnapToGrid(proposer, objective)
    ctx = objective if isinstance(objective, ExternalObjective) else contextlib.nullcontext()
    with ctx:
        history = run_tuning(objective, space, proposer, args.budget)
    best = best_so_far(history)
    if args.out:
        meta = {
            "proposer_id": proposer.id,
            "seed": args.seed,
            "flags": {
                "proposer": args.proposer,
                "mode": args.mode,
                "reasoning": args.reasoning,
                "expert": args.expert,
                "temperature": args.temperature,
            },
            "cost": {"tokens_in": ledger.tokens_in, "tokens_out": ledger.tokens_out, "usd": ledger.total},
        }
        save_run(args.out, space, history, objective, meta)
    print(f"best step: {best.step}")
    print(f"best config: {canonical_json(space, best.config)}")
    print(f"best loss: {best.loss:.10g}")
    if ledger.tokens_in or ledger.tokens_out:
        print(f"tokens: {ledger.tokens_in} in / {ledger.tokens_out} out (est. ${ledger.total:.4f})")
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = bench_mod.load_experiment_spec(args.spec)
    if args.out:
        spec.output_dir = args.out
    spec.jobs = max(1, args.jobs)
    records, report = bench_mod.run_experiment(spec)
    sys.stdout.write(report.to_markdown())
    if spec.output_dir:
        print(f"records: {os.path.join(spec.output_dir, 'records.jsonl')}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    mismatches = replay_run(args.trace)
    if mismatches:
        for m in mismatches:
            print(
                f"step {m.step}: logged loss {m.logged_loss!r} != replayed {m.replayed_loss!r}",
                file=sys.stderr,
            )
        raise CliError(f"{len(mismatches)} trial(s) failed to verify", EXIT_EVAL)
    run, _, trials = load_run(args.trace)
    print(f"verified {len(trials)} trials")
    return EXIT_OK


def _cmd_codegen(args) -> int:
    dataset = codegen_mod.load_dataset_descriptor(args.dataset)
    try:
        client, env_model = client_from_env()
    except AuthError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    runner_cmd = shlex.split(args.runner) if args.runner else ["trainer-runner", "--dataset", dataset.data_path]
    with ExternalObjective(runner_cmd, timeout=args.timeout) as runner:
        session = codegen_mod.run_codegen_session(
            client,
            runner,
            dataset,
            args.budget,
            model=args.model or env_model,
            temperature=args.temperature,
            epochs=args.epochs,
            seed=args.seed,
        )
    best = session.best_trial
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "transcript.json"), "w", encoding="utf-8") as fh:
            json.dump([{"role": m.role, "content": m.content} for m in session.transcript], fh, indent=2)
        with open(os.path.join(args.out, "trials.jsonl"), "w", encoding="utf-8") as fh:
            for t in session.trials:
                fh.write(
                    json.dumps(
                        {
                            "index": t.index,
                            "arguments": dict(t.tool_call.arguments),
                            "val_loss": t.feedback.val_loss if t.feedback else None,
                            "train_losses": list(t.feedback.train_losses) if t.feedback else None,
                            "error": t.error,
                        }
                    )
                    + "\n"
                )
    if best is None:
        raise CliError("no tuning run produced a result", EXIT_EVAL)
    print(f"best trial: {best.index}")
    print(f"best arguments: {json.dumps(dict(best.tool_call.arguments))}")
    print(f"best val loss: {best.feedback.val_loss:.6f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    records = []
    with open(args.records, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    report = bench_mod.report_from_records(records)
    sys.stdout.write(report.to_markdown())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        with open(os.path.join(args.out, "report.md"), "w", encoding="utf-8") as fh:
            fh.write(report.to_markdown())
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "tune": _cmd_tune,
        "bench": _cmd_bench,
        "replay": _cmd_replay,
        "codegen": _cmd_codegen,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.code
    except (LLMError, ProposalFailed, ProtocolError, ScriptExhausted, codegen_mod.SessionFailed) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_LLM
    except (MissingRow, ExternalError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (ValidationErrors, FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
