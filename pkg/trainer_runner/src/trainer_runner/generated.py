"""Compile and introspect generated `make_model_and_optimizer` code.

Each define executes in a brand-new namespace so nothing survives a
redefinition. Signatures are restricted to primitive argument types; the
introspected specs are what the orchestrator turns into a tool schema.
"""

from __future__ import annotations

import inspect
import json
from dataclasses import dataclass

FUNCTION_NAME = "make_model_and_optimizer"

_PRIMITIVES = {int: "int", float: "float", str: "str", bool: "bool"}
_PRIMITIVE_NAMES = frozenset(t.__name__ for t in _PRIMITIVES)


class DefineFailure(Exception):
    """stage is one of parse | runtime | signature | timeout."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        self.message = message
        super().__init__(f"{stage}: {message}")


@dataclass(frozen=True)
class Program:
    namespace: dict
    arg_specs: tuple[dict, ...]

    @property
    def function(self):
        return self.namespace[FUNCTION_NAME]


def _spec_for(param: inspect.Parameter) -> dict:
    if param.kind in (inspect.Parameter.VAR_POSITIONAL, inspect.Parameter.VAR_KEYWORD):
        raise DefineFailure("signature", f"variadic parameter {param.name!r} is not supported")
    ann = param.annotation
    # stringified annotations may still carry literal quotes when the
    # generated code itself defers annotation evaluation
    text = ann.strip("'\"") if isinstance(ann, str) else None
    if ann is inspect.Parameter.empty:
        type_name = "float"
    elif ann in _PRIMITIVES:
        type_name = _PRIMITIVES[ann]
    elif text in _PRIMITIVE_NAMES:
        type_name = text
    else:
        raise DefineFailure("signature", f"non-primitive argument {param.name!r}: {ann!r}")
    spec = {"name": param.name, "type": type_name}
    if param.default is not inspect.Parameter.empty:
        try:
            json.dumps(param.default)
            spec["default"] = param.default
        except TypeError:
            pass  # unserializable default: report the arg as required
    return spec


def define_program(code: str) -> Program:
    try:
        # dont_inherit: this module's own __future__ flags must not leak
        # into the generated code's compilation
        compiled = compile(code, "<generated>", "exec", dont_inherit=True)
    except SyntaxError as exc:
        raise DefineFailure("parse", str(exc)) from exc
    namespace: dict = {"__name__": "__generated__"}
    try:
        exec(compiled, namespace)
    except Exception as exc:
        raise DefineFailure("runtime", str(exc)) from exc
    fn = namespace.get(FUNCTION_NAME)
    if not callable(fn):
        raise DefineFailure("signature", f"{FUNCTION_NAME} is not defined")
    try:
        signature = inspect.signature(fn)
    except (TypeError, ValueError) as exc:
        raise DefineFailure("signature", str(exc)) from exc
    specs = tuple(_spec_for(p) for p in signature.parameters.values())
    return Program(namespace=namespace, arg_specs=specs)
