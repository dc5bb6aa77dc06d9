import json
import pathlib
import sys

import pytest

from hpokit.llm_client import scripted_client
from hpokit.space import builtin_space, canonical_json, toy_space

TESTS_DIR = pathlib.Path(__file__).parent
GOLDEN_DIR = TESTS_DIR / "fixtures" / "golden"
STUB_RUNNER = [sys.executable, str(TESTS_DIR / "stub_runner.py")]


def golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")


def stub_command(*extra: str) -> list:
    return STUB_RUNNER + list(extra)


@pytest.fixture
def svm_space():
    return builtin_space("svm")


@pytest.fixture
def xy_space():
    return toy_space("toy", ((-5.0, 5.0), (-5.0, 5.0)))


def config_script_client(space, points):
    """Scripted client that answers with one JSON config per call."""
    texts = [json.dumps(dict(zip(space.names, p))) for p in points]
    return scripted_client(texts)


def canonical(space, config) -> str:
    return canonical_json(space, config)
