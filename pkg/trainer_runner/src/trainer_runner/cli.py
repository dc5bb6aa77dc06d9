"""Entry point: parse flags, build the server, serve stdin until EOF."""

from __future__ import annotations

import argparse
import logging
import sys

from trainer_runner.data import bundled_dataset_path
from trainer_runner.server import DEFAULT_TIMEOUT, RunnerConfig, Server
from trainer_runner.tasks import TASKS


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trainer-runner",
        description="NDJSON worker: define/run generated training code, eval sklearn tasks",
    )
    parser.add_argument("--dataset", help="CSV with feature columns then a final target column (default: bundled two-blob toy set)")
    parser.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="per-request wall-clock limit (s)")
    parser.add_argument("--seed", type=int, default=0, help="split shuffle and default run seed")
    parser.add_argument("--task", choices=TASKS, help="serve bare run-with-config requests as this sklearn task")
    parser.add_argument("--train-frac", type=float, default=0.8, help="training split fraction")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="trainer-runner: %(message)s")
    args = _build_parser().parse_args(argv)
    dataset = args.dataset or str(bundled_dataset_path())
    try:
        config = RunnerConfig(
            dataset_path=dataset,
            fractions=(args.train_frac, 1.0 - args.train_frac),
            timeout=args.timeout,
            seed=args.seed,
            task=args.task,
        )
        server = Server(config)
    except (OSError, ValueError) as exc:
        print(f"trainer-runner: {exc}", file=sys.stderr)
        return 2
    server.serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
