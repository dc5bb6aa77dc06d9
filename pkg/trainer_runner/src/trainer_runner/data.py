"""Dataset loading and the train/validation split.

Convention: the last CSV column is the target, everything before it is a
feature. The split shuffle is seeded so a runner config maps to one fixed
partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

BUNDLED_DATASET = "two_blobs.csv"


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    target_name: str

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("X must be 2-d and aligned with y")
        if len(self.X) == 0:
            raise ValueError("dataset is empty")


@dataclass(frozen=True)
class Split:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray


def bundled_dataset_path() -> Path:
    with resources.as_file(resources.files("trainer_runner") / "assets" / BUNDLED_DATASET) as p:
        return p


def load_dataset(path) -> Dataset:
    frame = pd.read_csv(path)
    if frame.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and one target column")
    target = frame.columns[-1]
    features = tuple(frame.columns[:-1])
    X = frame[list(features)].to_numpy(dtype=np.float64)
    y = frame[target].to_numpy(dtype=np.float64)
    return Dataset(X=X, y=y, feature_names=features, target_name=target)


def split_dataset(dataset: Dataset, train_frac: float, seed: int) -> Split:
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train fraction must be in (0, 1), got {train_frac}")
    n = len(dataset.X)
    n_train = max(1, min(n - 1, int(round(n * train_frac))))
    order = np.random.default_rng(seed).permutation(n)
    train, val = order[:n_train], order[n_train:]
    return Split(
        X_train=dataset.X[train],
        y_train=dataset.y[train],
        X_val=dataset.X[val],
        y_val=dataset.y[val],
    )
