"""Request loop: one JSON line in, exactly one JSON line out.

The loop never dies on bad input: malformed JSON and unknown request types
come back as error{stage:"protocol"}, handler exceptions as their mapped
stage, and anything unforeseen as stage "runtime". Generated code runs
under a wall-clock alarm so an infinite loop ends the run, not the worker.
"""

from __future__ import annotations

import contextlib
import json
import logging
import signal
import sys
from dataclasses import dataclass, field

import torch

from trainer_runner import tasks as tasks_mod
from trainer_runner.data import Split, load_dataset, split_dataset
from trainer_runner.generated import DefineFailure, Program, define_program
from trainer_runner.training import train, unpack_model_output

log = logging.getLogger("trainer_runner")

DEFAULT_EPOCHS = 10
DEFAULT_TIMEOUT = 600.0


class RunTimeout(Exception):
    pass


@contextlib.contextmanager
def time_limit(seconds: float):
    if seconds <= 0 or not hasattr(signal, "SIGALRM"):
        yield
        return

    def _alarm(signum, frame):
        raise RunTimeout()

    previous = signal.signal(signal.SIGALRM, _alarm)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)


@dataclass(frozen=True)
class RunnerConfig:
    dataset_path: str
    fractions: tuple[float, float] = (0.8, 0.2)
    timeout: float = DEFAULT_TIMEOUT
    seed: int = 0
    task: str | None = None

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.fractions}")
        if not 0.0 < self.fractions[0] < 1.0:
            raise ValueError(f"train fraction must be in (0, 1), got {self.fractions[0]}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.task is not None and self.task not in tasks_mod.TASKS:
            raise ValueError(f"unknown task {self.task!r}, expected one of {tasks_mod.TASKS}")


def _error(stage: str, message: str) -> dict:
    return {"type": "error", "stage": stage, "message": message}


@dataclass
class Server:
    config: RunnerConfig
    split: Split = field(init=False)
    program: Program | None = field(init=False, default=None)

    def __post_init__(self):
        dataset = load_dataset(self.config.dataset_path)
        self.split = split_dataset(dataset, self.config.fractions[0], self.config.seed)
        log.info(
            "dataset %s: %d train / %d val rows, features %s, target %s",
            self.config.dataset_path,
            len(self.split.X_train),
            len(self.split.X_val),
            dataset.feature_names,
            dataset.target_name,
        )

    # -- handlers

    def handle_define(self, request: dict) -> dict:
        code = request.get("code")
        if not isinstance(code, str) or not code.strip():
            return _error("parse", "define request carries no code")
        try:
            with time_limit(self.config.timeout):
                program = define_program(code)
        except DefineFailure as exc:
            self.program = None
            return _error(exc.stage, exc.message)
        except RunTimeout:
            self.program = None
            return _error("timeout", f"define exceeded {self.config.timeout:g}s")
        self.program = program
        return {"type": "defined", "arg_specs": [dict(s) for s in program.arg_specs]}

    def handle_run(self, request: dict) -> dict:
        arguments = request.get("arguments")
        if arguments is None and "config" in request:
            # the generic external-objective spelling: route to the named
            # task when one is configured, else feed the defined program
            if self.config.task is not None:
                return self.handle_eval({"task": self.config.task, "config": request["config"]})
            arguments = request["config"]
        if arguments is None:
            return _error("runtime", "run request carries no arguments")
        if self.program is None:
            return _error("runtime", "no program defined")
        if not isinstance(arguments, dict):
            return _error("runtime", f"arguments must be an object, got {type(arguments).__name__}")

        if "epochs" in request:
            epochs = request["epochs"]
        else:
            epochs = DEFAULT_EPOCHS
            log.info("run request without epochs; defaulting to %d", DEFAULT_EPOCHS)
        seed = request.get("seed", self.config.seed)
        try:
            with time_limit(self.config.timeout):
                torch.manual_seed(seed)
                returned = self.program.function(**arguments)
                model, optimizer, loss_fn = unpack_model_output(returned)
                result = train(model, optimizer, loss_fn, self.split, int(epochs), int(seed))
        except RunTimeout:
            return _error("timeout", f"run exceeded {self.config.timeout:g}s")
        except Exception as exc:
            return _error("runtime", str(exc))
        return {
            "type": "result",
            "train_losses": list(result.train_losses),
            "val_loss": result.val_loss,
        }

    def handle_eval(self, request: dict) -> dict:
        task = request.get("task", self.config.task)
        if task is None:
            return _error("task", "no task named in the request or the runner config")
        if task not in tasks_mod.TASKS:
            return _error("task", f"unknown task {task!r}, expected one of {tasks_mod.TASKS}")
        config = request.get("config")
        if not isinstance(config, dict):
            return _error("runtime", "eval request carries no config object")
        try:
            with time_limit(self.config.timeout):
                val_loss = tasks_mod.eval_task(task, config, self.split, self.config.seed)
        except RunTimeout:
            return _error("timeout", f"eval exceeded {self.config.timeout:g}s")
        except Exception as exc:
            return _error("runtime", str(exc))
        return {"type": "result", "train_losses": [], "val_loss": val_loss}

    # -- the loop

    def handle_request(self, request: dict) -> dict:
        kind = request.get("type")
        try:
            if kind == "ping":
                return {"type": "pong"}
            if kind == "define":
                return self.handle_define(request)
            if kind == "run":
                return self.handle_run(request)
            if kind == "eval":
                return self.handle_eval(request)
        except Exception as exc:  # totality: a handler bug must not kill the loop
            log.exception("handler failed")
            return _error("runtime", str(exc))
        return _error("protocol", f"unknown request type {kind!r}")

    def serve(self, stdin=None, stdout=None) -> None:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line)
            except json.JSONDecodeError as exc:
                response = _error("protocol", f"malformed JSON: {exc}")
            else:
                if isinstance(request, dict):
                    response = self.handle_request(request)
                else:
                    response = _error("protocol", "request must be a JSON object")
            stdout.write(json.dumps(response) + "\n")
            stdout.flush()
