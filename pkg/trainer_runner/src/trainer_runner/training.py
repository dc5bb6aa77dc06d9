"""Torch training loop for the defined model/optimizer pair.

`make_model_and_optimizer` may return (model, optimizer) or
(model, optimizer, loss_fn). Without a loss_fn, targets are treated as a
regression problem under mean-squared error. Seeding covers both weight
init (the caller seeds torch before constructing the model) and the
per-epoch batch order here, so one seed pins the whole trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from trainer_runner.data import Split

DEFAULT_BATCH_SIZE = 32


@dataclass(frozen=True)
class TrainResult:
    train_losses: tuple[float, ...]
    val_loss: float


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.mse_loss(pred.reshape(-1), target.reshape(-1))


def unpack_model_output(returned) -> tuple:
    if isinstance(returned, (tuple, list)) and len(returned) == 2:
        model, optimizer = returned
        return model, optimizer, mse_loss
    if isinstance(returned, (tuple, list)) and len(returned) == 3:
        return tuple(returned)
    raise TypeError(
        "make_model_and_optimizer must return (model, optimizer) or (model, optimizer, loss_fn), "
        f"got {type(returned).__name__}"
    )


def train(model, optimizer, loss_fn, split: Split, epochs: int, seed: int,
          batch_size: int = DEFAULT_BATCH_SIZE) -> TrainResult:
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    X_train = torch.as_tensor(split.X_train, dtype=torch.float32)
    y_train = torch.as_tensor(split.y_train, dtype=torch.float32).reshape(-1, 1)
    X_val = torch.as_tensor(split.X_val, dtype=torch.float32)
    y_val = torch.as_tensor(split.y_val, dtype=torch.float32).reshape(-1, 1)

    rng = np.random.default_rng(seed)
    n = len(X_train)
    losses = []
    model.train()
    for _ in range(epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            optimizer.zero_grad()
            loss = loss_fn(model(X_train[idx]), y_train[idx])
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1
        losses.append(total / batches)

    model.eval()
    with torch.no_grad():
        val_loss = float(loss_fn(model(X_val), y_val))
    if not all(math.isfinite(v) for v in losses) or not math.isfinite(val_loss):
        raise ValueError("training produced a non-finite loss")
    return TrainResult(train_losses=tuple(losses), val_loss=val_loss)
