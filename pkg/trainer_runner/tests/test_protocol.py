"""Protocol totality: every line in yields exactly one typed line out."""

import json

from conftest import SIMPLE_PROGRAM


def test_ping_pong(runner):
    assert runner.ask({"type": "ping"}) == {"type": "pong"}


def test_malformed_json_keeps_process_alive(runner):
    resp = runner.send_raw("this is not json")
    assert resp["type"] == "error" and resp["stage"] == "protocol"
    assert runner.ask({"type": "ping"}) == {"type": "pong"}


def test_non_object_request_is_protocol_error(runner):
    resp = runner.send_raw("[1, 2, 3]")
    assert resp["type"] == "error" and resp["stage"] == "protocol"


def test_unknown_type_is_protocol_error(runner):
    resp = runner.ask({"type": "mystery"})
    assert resp["type"] == "error" and resp["stage"] == "protocol"
    assert "mystery" in resp["message"]


def test_define_introspects_signature(runner):
    resp = runner.ask({"type": "define", "code": SIMPLE_PROGRAM})
    assert resp["type"] == "defined"
    assert resp["arg_specs"] == [
        {"name": "a", "type": "float"},
        {"name": "b", "type": "int", "default": 2},
    ]


def test_define_accepts_string_annotations(runner):
    code = 'def make_model_and_optimizer(lr: "float", n: "int"):\n    return None\n'
    resp = runner.ask({"type": "define", "code": code})
    assert [s["type"] for s in resp["arg_specs"]] == ["float", "int"]


def test_define_with_deferred_annotations(runner):
    code = (
        "from __future__ import annotations\n\n\n"
        "def make_model_and_optimizer(lr: float, n: int = 3):\n    return None\n"
    )
    resp = runner.ask({"type": "define", "code": code})
    assert resp["type"] == "defined"
    assert [s["type"] for s in resp["arg_specs"]] == ["float", "int"]


def test_define_unannotated_defaults_to_float(runner):
    resp = runner.ask({"type": "define", "code": "def make_model_and_optimizer(lr):\n    return None\n"})
    assert resp["arg_specs"] == [{"name": "lr", "type": "float"}]


def test_define_without_code_is_parse_error(runner):
    resp = runner.ask({"type": "define"})
    assert resp["type"] == "error" and resp["stage"] == "parse"


def test_syntax_error_is_parse_stage(runner):
    resp = runner.ask({"type": "define", "code": "def make_model_and_optimizer(:\n    pass"})
    assert resp["type"] == "error" and resp["stage"] == "parse"
    assert "invalid syntax" in resp["message"]


def test_missing_function_is_signature_stage(runner):
    resp = runner.ask({"type": "define", "code": "def build():\n    return None\n"})
    assert resp["type"] == "error" and resp["stage"] == "signature"
    assert "make_model_and_optimizer is not defined" in resp["message"]


def test_callable_annotation_is_signature_stage(runner):
    code = "def make_model_and_optimizer(factory: callable):\n    return None\n"
    resp = runner.ask({"type": "define", "code": code})
    assert resp["type"] == "error" and resp["stage"] == "signature"
    assert "non-primitive argument" in resp["message"]


def test_variadic_parameters_are_rejected(runner):
    resp = runner.ask({"type": "define", "code": "def make_model_and_optimizer(*args):\n    return None\n"})
    assert resp["type"] == "error" and resp["stage"] == "signature"
    assert "variadic" in resp["message"]


def test_module_level_exception_is_runtime_stage(runner):
    resp = runner.ask({"type": "define", "code": "1 / 0\ndef make_model_and_optimizer(x: float):\n    return None\n"})
    assert resp["type"] == "error" and resp["stage"] == "runtime"
    assert "division by zero" in resp["message"]


def test_run_before_define_is_runtime_error(runner):
    resp = runner.ask({"type": "run", "arguments": {"a": 1.0}, "epochs": 1, "seed": 0})
    assert resp["type"] == "error" and resp["stage"] == "runtime"
    assert "no program defined" in resp["message"]


def test_failed_define_clears_previous_program(runner):
    assert runner.ask({"type": "define", "code": SIMPLE_PROGRAM})["type"] == "defined"
    assert runner.ask({"type": "define", "code": "def ("})["stage"] == "parse"
    resp = runner.ask({"type": "run", "arguments": {"a": 1.0}, "epochs": 1, "seed": 0})
    assert "no program defined" in resp["message"]


def test_redefine_replaces_namespace_entirely(runner):
    first = 'TOKEN = "alpha"\n\n\ndef make_model_and_optimizer(x: float):\n    raise RuntimeError(TOKEN)\n'
    second = "def make_model_and_optimizer(x: float):\n    raise RuntimeError(TOKEN)\n"
    runner.ask({"type": "define", "code": first})
    resp = runner.ask({"type": "run", "arguments": {"x": 1.0}, "epochs": 1, "seed": 0})
    assert resp["stage"] == "runtime" and resp["message"] == "alpha"
    runner.ask({"type": "define", "code": second})
    resp = runner.ask({"type": "run", "arguments": {"x": 1.0}, "epochs": 1, "seed": 0})
    assert resp["stage"] == "runtime"
    assert "TOKEN" in resp["message"] and "not defined" in resp["message"]


def test_requests_answered_in_order(runner):
    runner.proc.stdin.write('{"type": "ping"}\nnot json\n{"type": "ping"}\n')
    runner.proc.stdin.flush()
    replies = [json.loads(runner.proc.stdout.readline()) for _ in range(3)]
    assert replies[0] == {"type": "pong"}
    assert replies[1]["stage"] == "protocol"
    assert replies[2] == {"type": "pong"}


def test_stdout_carries_only_protocol_lines(runner):
    runner.ask({"type": "define", "code": SIMPLE_PROGRAM})
    runner.ask({"type": "ping"})
    stderr = runner.close()
    assert "trainer-runner:" in stderr  # startup log landed on stderr
