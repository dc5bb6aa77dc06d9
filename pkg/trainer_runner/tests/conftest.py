import json
import subprocess
import sys

import pytest


class Runner:
    """One runner subprocess with a synchronous ask/answer helper."""

    def __init__(self, *flags: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "trainer_runner", *flags],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )

    def send_raw(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        assert reply, "runner produced no response line"
        return json.loads(reply)

    def ask(self, request: dict) -> dict:
        return self.send_raw(json.dumps(request))

    def close(self) -> str:
        self.proc.stdin.close()
        self.proc.wait(timeout=10)
        return self.proc.stderr.read()


@pytest.fixture
def runner():
    r = Runner("--timeout", "10")
    yield r
    r.close()


SIMPLE_PROGRAM = """def make_model_and_optimizer(a: float, b: int = 2):
    return None
"""

TORCH_PROGRAM = """import torch


def make_model_and_optimizer(learning_rate: float, width: int = 8):
    model = torch.nn.Sequential(
        torch.nn.Linear(2, width),
        torch.nn.ReLU(),
        torch.nn.Linear(width, 1),
    )
    optimizer = torch.optim.SGD(model.parameters(), lr=learning_rate)
    return model, optimizer
"""

CUSTOM_LOSS_PROGRAM = """import torch


def make_model_and_optimizer(learning_rate: float):
    model = torch.nn.Linear(2, 1)
    optimizer = torch.optim.SGD(model.parameters(), lr=learning_rate)

    def l1(pred, target):
        return torch.nn.functional.l1_loss(pred.reshape(-1), target.reshape(-1))

    return model, optimizer, l1
"""

HANG_PROGRAM = """def make_model_and_optimizer(x: float):
    while True:
        pass
"""
