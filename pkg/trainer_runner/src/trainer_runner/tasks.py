"""Named sklearn model families served as an evaluation objective.

Each task maps a fixed hyperparameter set onto one estimator; the returned
loss is the validation error rate (1 - accuracy). Estimators are built
fresh per request with a fixed random_state, so repeated requests are
deterministic for a given runner seed.
"""

from __future__ import annotations

import warnings
from typing import Mapping

from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import SGDClassifier
from sklearn.neural_network import MLPClassifier
from sklearn.svm import SVC

from trainer_runner.data import Split

TASKS = ("svm", "logreg", "rf", "nn")

_TASK_KEYS = {
    "svm": ("C", "gamma"),
    "logreg": ("alpha", "eta0"),
    "rf": ("max_depth", "max_features", "min_samples_leaf", "min_samples_split"),
    "nn": ("alpha", "batch_size", "depth", "learning_rate_init", "width"),
}
# sklearn gives float values of these fraction semantics, so ints must stay ints
_INT_KEYS = {
    "rf": ("max_depth", "min_samples_leaf", "min_samples_split"),
    "nn": ("batch_size", "depth", "width"),
}


class UnknownTask(KeyError):
    pass


def _as_int(name: str, value) -> int:
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise ValueError(f"{name} must be an integer, got {value!r}")


def _checked(task: str, config: Mapping) -> dict:
    keys = _TASK_KEYS[task]
    missing = [k for k in keys if k not in config]
    extra = [k for k in config if k not in keys]
    if missing or extra:
        raise ValueError(f"{task} config mismatch: missing {missing}, unexpected {extra}")
    values = dict(config)
    for k in _INT_KEYS.get(task, ()):
        values[k] = _as_int(k, values[k])
    return values


def build_estimator(task: str, config: Mapping, seed: int):
    if task not in TASKS:
        raise UnknownTask(task)
    v = _checked(task, config)
    if task == "svm":
        return SVC(C=v["C"], gamma=v["gamma"], random_state=seed)
    if task == "logreg":
        return SGDClassifier(
            loss="log_loss",
            alpha=v["alpha"],
            eta0=v["eta0"],
            learning_rate="adaptive",
            random_state=seed,
        )
    if task == "rf":
        return RandomForestClassifier(
            max_depth=v["max_depth"],
            max_features=v["max_features"],
            min_samples_leaf=v["min_samples_leaf"],
            min_samples_split=v["min_samples_split"],
            random_state=seed,
        )
    return MLPClassifier(
        hidden_layer_sizes=(v["width"],) * v["depth"],
        alpha=v["alpha"],
        batch_size=v["batch_size"],
        learning_rate_init=v["learning_rate_init"],
        random_state=seed,
        max_iter=200,
    )


def eval_task(task: str, config: Mapping, split: Split, seed: int) -> float:
    estimator = build_estimator(task, config, seed)
    y_train = split.y_train.astype(int)
    y_val = split.y_val.astype(int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # MLP convergence chatter on tiny datasets
        estimator.fit(split.X_train, y_train)
        accuracy = float(estimator.score(split.X_val, y_val))
    return 1.0 - accuracy
