"""Save a seeded tuning run, then re-execute it and verify every logged loss.

Demonstrates the audit trail: run.json captures the space, objective
descriptor, and proposer metadata; trials.jsonl captures each step. Replay
re-evaluates the logged configs and compares losses.
"""

import argparse

from hpokit.bo import BOProposer
from hpokit.loop import replay_run, run_tuning, save_run
from hpokit.objectives import ToyObjective, make_shifted, make_toy
from hpokit.proposers import best_so_far


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--objective", default="branin", help="toy function to shift and tune")
    parser.add_argument("--shift-seed", type=int, default=0)
    parser.add_argument("--budget", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results/replay_demo", help="run directory")
    args = parser.parse_args()

    objective = ToyObjective(make_shifted(make_toy(args.objective), args.shift_seed))
    proposer = BOProposer(args.seed)
    history = run_tuning(objective, objective.space, proposer, args.budget)
    best = best_so_far(history)
    save_run(args.out, objective.space, history, objective, {"proposer_id": proposer.id, "seed": args.seed})
    print(f"ran {len(history.trials)} trials; best loss {best.loss:.6g} at step {best.step}")

    mismatches = replay_run(args.out)
    if mismatches:
        for m in mismatches:
            print(f"step {m.step}: logged {m.logged_loss!r} != replayed {m.replayed_loss!r}")
        return 1
    print(f"replay verified all {len(history.trials)} trials from {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
