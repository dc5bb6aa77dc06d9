"""Code-generation tuning: the model's source code is the hyperparameter.

The LLM first writes a `make_model_and_optimizer` function; the trainer
runner defines it, introspects the signature, and reports the tunable
arguments. The LLM then proposes concrete argument values as tool calls for
a fixed number of training runs, seeing per-epoch train losses (or the
verbatim error text) after each one.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

from hpokit.llm_client import CompletionRequest, CompletionResponse, Message
from hpokit.llm_proposer import _balanced_blocks
from hpokit.objectives import ExternalError, ExternalObjective

__all__ = [
    "DatasetDescriptor",
    "GeneratedProgram",
    "ToolCall",
    "TrainFeedback",
    "CodegenTrial",
    "CodegenSession",
    "NoCodeBlock",
    "WrongFunctionName",
    "DefineError",
    "SessionFailed",
    "FUNCTION_NAME",
    "load_dataset_descriptor",
    "build_codegen_initial_prompt",
    "build_tuning_prompt",
    "build_feedback",
    "extract_program",
    "validate_program",
    "tool_schema",
    "parse_tool_call",
    "run_codegen_session",
]

FUNCTION_NAME = "make_model_and_optimizer"
MAX_REGEN = 3
DEFAULT_EPOCHS = 10


def _read_template(name: str) -> str:
    text = resources.files("hpokit.assets.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


@dataclass(frozen=True)
class DatasetDescriptor:
    problem_description: str
    in_features: int
    X_columns: tuple[str, ...]
    y_columns: tuple[str, ...]
    data_path: str = ""

    def __post_init__(self):
        object.__setattr__(self, "X_columns", tuple(self.X_columns))
        object.__setattr__(self, "y_columns", tuple(self.y_columns))
        if self.in_features != len(self.X_columns):
            raise ValueError(f"in_features={self.in_features} != len(X_columns)={len(self.X_columns)}")
        if not self.y_columns:
            raise ValueError("y_columns must be non-empty")


def load_dataset_descriptor(path) -> DatasetDescriptor:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return DatasetDescriptor(
        problem_description=data["problem_description"],
        in_features=data["in_features"],
        X_columns=tuple(data["X_columns"]),
        y_columns=tuple(data["y_columns"]),
        data_path=data.get("data_path", ""),
    )


@dataclass(frozen=True)
class GeneratedProgram:
    reasoning: str
    code: str
    function_name: str = FUNCTION_NAME
    arg_specs: tuple[dict, ...] = ()

    def __post_init__(self):
        if not self.code.strip():
            raise ValueError("code must be non-empty")
        names = [a["name"] for a in self.arg_specs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate argument names: {names}")
        object.__setattr__(self, "arg_specs", tuple(dict(a) for a in self.arg_specs))


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Mapping[str, object]

    def __post_init__(self):
        object.__setattr__(self, "arguments", dict(self.arguments))


@dataclass(frozen=True)
class TrainFeedback:
    train_losses: tuple[float, ...]
    val_loss: float

    def __post_init__(self):
        object.__setattr__(self, "train_losses", tuple(float(v) for v in self.train_losses))
        if not all(math.isfinite(v) for v in self.train_losses) or not math.isfinite(self.val_loss):
            raise ValueError("feedback losses must be finite")


@dataclass
class CodegenTrial:
    index: int
    tool_call: ToolCall
    feedback: TrainFeedback | None = None
    error: str | None = None


class NoCodeBlock(Exception):
    pass


class WrongFunctionName(Exception):
    pass


class DefineError(Exception):
    """The runner rejected the code; message is the runner's, verbatim."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        self.message = message
        super().__init__(message)


class SessionFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# Prompt building


def build_codegen_initial_prompt(dataset: DatasetDescriptor) -> str:
    text = _read_template("codegen_initial")
    text = text.replace("{dataset.problem_description}", dataset.problem_description)
    text = text.replace("{dataset.in_features}", str(dataset.in_features))
    text = text.replace("{dataset.X_columns}", repr(list(dataset.X_columns)))
    text = text.replace("{dataset.y_columns[0]}", dataset.y_columns[0])
    return text


def build_tuning_prompt(search_budget: int) -> str:
    return _read_template("codegen_tuning").replace("{search_budget}", str(search_budget))


def build_feedback(fb: TrainFeedback) -> str:
    text = _read_template("codegen_feedback")
    text = text.replace("{train_losses}", ", ".join(f"{l:.3f}" for l in fb.train_losses))
    return text.replace("{val_loss:.3f}", f"{fb.val_loss:.3f}")


# ---------------------------------------------------------------------------
# Program extraction and validation

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


def extract_program(response_text: str) -> GeneratedProgram:
    """Split a reply into reasoning and the first fenced code block."""
    lower = response_text
    reasoning = ""
    m = re.search(r"reasoning:\s*", lower)
    if m:
        rest = lower[m.end() :]
        cut = rest.find("code:")
        reasoning = (rest[:cut] if cut >= 0 else rest).strip()
    fence = _FENCE_RE.search(response_text)
    if not fence:
        raise NoCodeBlock("response contains no fenced code block")
    code = fence.group(1)
    if FUNCTION_NAME not in code:
        raise WrongFunctionName(f"code must define `{FUNCTION_NAME}`")
    return GeneratedProgram(reasoning=reasoning, code=code)


def validate_program(program: GeneratedProgram, runner: ExternalObjective) -> GeneratedProgram:
    """Ask the runner to define the code; returns the program with arg_specs."""
    resp = runner.request({"type": "define", "code": program.code})
    if resp.get("type") == "error":
        raise DefineError(str(resp.get("stage", "unknown")), str(resp.get("message", "")))
    if resp.get("type") != "defined":
        raise DefineError("protocol", f"unexpected response {json.dumps(resp)}")
    return GeneratedProgram(
        reasoning=program.reasoning,
        code=program.code,
        arg_specs=tuple(dict(a) for a in resp.get("arg_specs", [])),
    )


_JSON_TYPES = {"int": "integer", "float": "number", "str": "string", "bool": "boolean"}


def tool_schema(program: GeneratedProgram, dataset: DatasetDescriptor | None = None) -> dict:
    """OpenAI-style function schema generated from the introspected signature."""
    properties = {}
    required = []
    for spec in program.arg_specs:
        properties[spec["name"]] = {"type": _JSON_TYPES.get(spec.get("type", "float"), "number")}
        if "default" not in spec:
            required.append(spec["name"])
    return {
        "type": "function",
        "function": {
            "name": FUNCTION_NAME,
            "description": "Construct the model and optimizer with the given hyperparameters.",
            "parameters": {"type": "object", "properties": properties, "required": required},
        },
    }


def parse_tool_call(resp: CompletionResponse, program: GeneratedProgram) -> ToolCall:
    """Read the proposed call from the native tool field or a JSON fallback.

    The fallback accepts a {"name": ..., "arguments": {...}} object or a bare
    arguments object in the reply text.
    """
    allowed = {a["name"] for a in program.arg_specs}
    if resp.tool_call is not None:
        call = ToolCall(resp.tool_call.name, resp.tool_call.arguments)
    else:
        blocks = _balanced_blocks(resp.text)
        call = None
        for block in reversed(blocks):
            try:
                obj = json.loads(block)
            except json.JSONDecodeError:
                continue
            if not isinstance(obj, dict):
                continue
            if "name" in obj and isinstance(obj.get("arguments"), dict):
                call = ToolCall(str(obj["name"]), obj["arguments"])
                break
            if obj and set(obj) <= allowed:
                call = ToolCall(FUNCTION_NAME, obj)
                break
        if call is None:
            raise ValueError("no tool call found in response")
    if call.name != FUNCTION_NAME:
        raise ValueError(f"tool call names {call.name!r}, expected {FUNCTION_NAME!r}")
    extra = set(call.arguments) - allowed
    if extra:
        raise ValueError(f"unknown arguments: {sorted(extra)}")
    return call


# ---------------------------------------------------------------------------
# The session


@dataclass
class CodegenSession:
    dataset: DatasetDescriptor
    budget: int
    program: GeneratedProgram | None = None
    trials: list[CodegenTrial] = field(default_factory=list)
    transcript: list[Message] = field(default_factory=list)
    max_regen: int = MAX_REGEN
    regen_count: int = 0

    @property
    def best_trial(self) -> CodegenTrial | None:
        done = [t for t in self.trials if t.feedback is not None]
        if not done:
            return None
        return min(done, key=lambda t: t.feedback.val_loss)


def _complete(client, model: str, session: CodegenSession, temperature: float, tools=None) -> CompletionResponse:
    req = CompletionRequest(
        model=model, messages=tuple(session.transcript), temperature=temperature, tools=tools
    )
    return client.complete(req)


def _reply_text(resp: CompletionResponse) -> str:
    if resp.text:
        return resp.text
    if resp.tool_call is not None:
        return json.dumps({"name": resp.tool_call.name, "arguments": dict(resp.tool_call.arguments)})
    return ""


def run_codegen_session(
    client,
    runner: ExternalObjective,
    dataset: DatasetDescriptor,
    budget: int,
    *,
    model: str = "",
    temperature: float = 0.0,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    max_regen: int = MAX_REGEN,
) -> CodegenSession:
    """Generate the program, validate it, then run `budget` tuning calls.

    Definition errors consume the regeneration budget; runtime and timeout
    errors during training runs do not, they are fed back as feedback text
    and the session moves on.
    """
    session = CodegenSession(dataset=dataset, budget=budget, max_regen=max_regen)
    session.transcript.append(Message("user", build_codegen_initial_prompt(dataset)))

    # Generate until the runner accepts a definition.
    program: GeneratedProgram | None = None
    while program is None:
        resp = _complete(client, model, session, temperature)
        session.transcript.append(Message("assistant", resp.text))
        try:
            candidate = extract_program(resp.text)
            program = validate_program(candidate, runner)
        except (NoCodeBlock, WrongFunctionName, DefineError) as exc:
            session.regen_count += 1
            if session.regen_count > session.max_regen:
                raise SessionFailed(f"program never validated: {exc}") from exc
            session.transcript.append(
                Message(
                    "user",
                    "Your code failed validation with the following error:\n"
                    f"{exc}\n"
                    "Please regenerate the code in the same format.",
                )
            )
    session.program = program

    tools = (tool_schema(program, dataset),)
    session.transcript.append(Message("user", build_tuning_prompt(budget)))
    for i in range(1, budget + 1):
        resp = _complete(client, model, session, temperature, tools=tools)
        session.transcript.append(Message("assistant", _reply_text(resp)))
        try:
            call = parse_tool_call(resp, program)
        except ValueError as exc:
            # one corrective re-ask; the bad call never reaches the runner
            session.transcript.append(
                Message("user", f"Invalid call: {exc}. Make one valid call to `{FUNCTION_NAME}`.")
            )
            resp = _complete(client, model, session, temperature, tools=tools)
            session.transcript.append(Message("assistant", _reply_text(resp)))
            call = parse_tool_call(resp, program)  # second failure aborts the session

        trial = CodegenTrial(index=i, tool_call=call)
        redefine = False
        try:
            result = runner.request(
                {"type": "run", "arguments": dict(call.arguments), "epochs": epochs, "seed": seed}
            )
        except ExternalError as exc:
            # transport-level failure: the runner process is gone; its state
            # must be rebuilt before the next run
            result = {"type": "error", "stage": getattr(exc, "stage", "transport"), "message": str(exc)}
            redefine = True
        if result.get("type") == "result":
            trial.feedback = TrainFeedback(
                train_losses=tuple(result.get("train_losses", ())),
                val_loss=float(result["val_loss"] if "val_loss" in result else result["loss"]),
            )
            feedback_text = build_feedback(trial.feedback)
        else:
            trial.error = str(result.get("message", ""))
            feedback_text = (
                "Your code failed to run with the following error:\n"
                f"{trial.error}\n"
                f"Based on this, make a new call to `{FUNCTION_NAME}` that avoids the error."
            )
        session.trials.append(trial)
        session.transcript.append(Message("user", feedback_text))
        if redefine:
            try:
                runner.request({"type": "define", "code": program.code})
            except ExternalError:
                pass  # surfaced on the next run attempt instead
    return session
