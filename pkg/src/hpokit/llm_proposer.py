"""Prompt construction, reply parsing, and the LLM-backed proposer.

The templates are stored as plain-text assets and rendered by literal slot
substitution, so the built prompts are byte-reproducible and the golden
fixtures in the test suite pin them exactly. Two prompting modes exist:

- chat: resend the whole dialogue each step (two more messages per step);
- compressed: one user message holding the problem plus a one-line-per-trial
  history.

Replies are parsed leniently (a "Config:" line, or the last balanced JSON
object anywhere in the text); a parse or validation failure triggers a
corrective re-ask a bounded number of times.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from hpokit.llm_client import CompletionRequest, CostLedger, Message, UnknownModel
from hpokit.proposers import History, random_propose
from hpokit.space import Config, SearchSpace, ValidationErrors, canonical_json, describe, validate

__all__ = [
    "PromptTemplateSet",
    "ParsedProposal",
    "NoJson",
    "BadJson",
    "ProposalFailed",
    "load_templates",
    "build_initial_prompt",
    "build_transition",
    "build_compressed",
    "build_toy_prompt",
    "build_messages",
    "parse_response",
    "adapt_raw_config",
    "llm_propose",
    "LLMProposer",
    "MAX_RETRIES",
]

MAX_RETRIES = 3  # corrective re-asks after the first completion


@dataclass(frozen=True)
class PromptTemplateSet:
    """All text the proposer ever sends, loaded verbatim from assets."""

    beginning: str  # {model} slot
    end_template: str  # {budget}, {example} slots
    transition_plain: str  # {loss:.4e} slot
    transition_cot: str
    last_try_preface: str
    system_prompt: str
    compressed_intro: str
    compressed_line: str  # {n}, {config}, {loss:.4e} slots
    compressed_ask: str
    retry_ask: str
    toy_prompts: tuple[str, str, str, str]  # {search_space['x1']}, {budget} slots


def _read_template(name: str) -> str:
    ref = resources.files("hpokit.assets.templates").joinpath(f"{name}.txt")
    text = ref.read_text(encoding="utf-8")
    # Assets end with a POSIX newline that is not part of the template;
    # templates whose content ends in a real newline store a blank last line.
    if text.endswith("\n"):
        text = text[:-1]
    return text


def load_templates() -> PromptTemplateSet:
    return PromptTemplateSet(
        beginning=_read_template("beginning"),
        end_template=_read_template("end"),
        transition_plain=_read_template("transition_plain"),
        transition_cot=_read_template("transition_cot"),
        last_try_preface=_read_template("last_try"),
        system_prompt=_read_template("expert_system"),
        compressed_intro=_read_template("compressed_intro"),
        compressed_line=_read_template("compressed_line"),
        compressed_ask=_read_template("compressed_ask"),
        retry_ask=_read_template("retry_ask"),
        toy_prompts=tuple(_read_template(f"toy_prompt_{i}") for i in range(4)),
    )


_DEFAULT: PromptTemplateSet | None = None


def _templates(t: PromptTemplateSet | None) -> PromptTemplateSet:
    global _DEFAULT
    if t is not None:
        return t
    if _DEFAULT is None:
        _DEFAULT = load_templates()
    return _DEFAULT


def build_initial_prompt(space: SearchSpace, budget: int, templates: PromptTemplateSet | None = None) -> str:
    t = _templates(templates)
    head = t.beginning.replace("{model}", space.model_name)
    tail = t.end_template.replace("{budget}", str(budget)).replace("{example}", space.example_config_text)
    return head + "\n" + describe(space) + "\n" + tail


def build_transition(
    loss: float,
    reasoning: str = "plain",
    is_last: bool = False,
    templates: PromptTemplateSet | None = None,
) -> str:
    t = _templates(templates)
    base = t.transition_cot if reasoning == "cot" else t.transition_plain
    text = base.replace("{loss:.4e}", f"{loss:.4e}")
    return t.last_try_preface + text if is_last else text


def _compressed_history_lines(space: SearchSpace, history: History, t: PromptTemplateSet) -> list[str]:
    lines = []
    for i, trial in enumerate(history.trials, start=1):
        lines.append(
            t.compressed_line.replace("{n}", str(i))
            .replace("{config}", canonical_json(space, trial.config))
            .replace("{loss:.4e}", f"{trial.loss:.4e}")
        )
    return lines


def build_compressed(
    space: SearchSpace,
    history: History,
    budget: int,
    templates: PromptTemplateSet | None = None,
    initial_prompt: str | None = None,
) -> str:
    """The single-message layout: problem text, trial lines, final ask.

    With no history this is exactly the initial prompt, so step 1 of the two
    modes coincides.
    """
    t = _templates(templates)
    head = initial_prompt if initial_prompt is not None else build_initial_prompt(space, budget, t)
    if not history.trials:
        return head
    lines = _compressed_history_lines(space, history, t)
    return head + "\n" + t.compressed_intro + "\n" + "\n".join(lines) + "\n" + t.compressed_ask


def _num_text(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


def _range_text(bounds: Sequence[float]) -> str:
    return f"[{_num_text(bounds[0])}, {_num_text(bounds[1])}]"


def build_toy_prompt(
    index: int,
    domain: Sequence[Sequence[float]],
    budget: int,
    templates: PromptTemplateSet | None = None,
) -> str:
    """Render toy prompt 0..3 for a 2D domain ((lo1,hi1),(lo2,hi2))."""
    t = _templates(templates)
    text = t.toy_prompts[index]
    text = text.replace("{search_space['x1']}", _range_text(domain[0]))
    text = text.replace("{search_space['x2']}", _range_text(domain[1]))
    text = text.replace("{budget}", str(budget))
    return text.replace("{{", "{").replace("}}", "}")


# ---------------------------------------------------------------------------
# Reply parsing


class NoJson(Exception):
    def __init__(self, raw: str):
        self.raw = raw
        super().__init__("no JSON object found in response")


class BadJson(Exception):
    def __init__(self, raw: str, message: str):
        self.raw = raw
        super().__init__(f"malformed JSON in response: {message}")


@dataclass(frozen=True)
class ParsedProposal:
    config_raw: Mapping[str, object]
    raw_response: str
    analysis: str | None = None


def _balanced_blocks(text: str) -> list[str]:
    """Top-level {...} substrings, respecting strings and escapes inside."""
    blocks = []
    depth = 0
    start = -1
    in_str = False
    esc = False
    for i, ch in enumerate(text):
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"' and depth > 0:
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                blocks.append(text[start : i + 1])
    return blocks


def _parse_block(block: str, raw: str) -> dict:
    try:
        obj = json.loads(block)
    except json.JSONDecodeError as exc:
        raise BadJson(raw, str(exc)) from None
    if not isinstance(obj, dict):
        raise BadJson(raw, "top-level JSON value is not an object")
    return obj


def parse_response(text: str) -> ParsedProposal:
    """Extract a config object (and any Analysis line) from a reply.

    Rule 1: if some line starts with "Config:", parse from the remainder of
    that line onwards (the last such line wins). Rule 2: otherwise take the
    last balanced {...} block anywhere in the text.
    """
    analysis = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("Analysis:"):
            analysis = stripped[len("Analysis:") :].strip()
            break

    config_pos = -1
    lines = text.splitlines(keepends=True)
    offset = 0
    for line in lines:
        if line.lstrip().startswith("Config:"):
            config_pos = offset + line.find("Config:") + len("Config:")
        offset += len(line)

    if config_pos >= 0:
        remainder = text[config_pos:]
        blocks = _balanced_blocks(remainder)
        if blocks:
            return ParsedProposal(_parse_block(blocks[0], text), text, analysis)
        if "{" in remainder:
            # an opened-but-unclosed object: surface the json error text
            _parse_block(remainder[remainder.find("{") :], text)
        raise NoJson(text)

    blocks = _balanced_blocks(text)
    if blocks:
        return ParsedProposal(_parse_block(blocks[-1], text), text, analysis)
    if "{" in text:
        _parse_block(text[text.find("{") :], text)
    raise NoJson(text)


def adapt_raw_config(space: SearchSpace, raw: Mapping[str, object]) -> Mapping[str, object]:
    """Map the toy reply shape {"x": [a, b]} onto the x1/x2 config keys."""
    if (
        space.names == ("x1", "x2")
        and set(raw) == {"x"}
        and isinstance(raw["x"], (list, tuple))
        and len(raw["x"]) == 2
    ):
        return {"x1": raw["x"][0], "x2": raw["x"][1]}
    return raw


# ---------------------------------------------------------------------------
# The proposer


class ProposalFailed(Exception):
    def __init__(self, attempts: int, last_error: Exception):
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"no parsable valid config after {attempts} completions: {last_error}")


def build_messages(
    space: SearchSpace,
    history: History,
    budget: int,
    *,
    mode: str = "chat",
    reasoning: str = "plain",
    expert: bool = False,
    templates: PromptTemplateSet | None = None,
    initial_prompt: str | None = None,
) -> list[Message]:
    """The request messages for proposing the next step (no retries applied)."""
    t = _templates(templates)
    msgs: list[Message] = []
    if expert:
        msgs.append(Message("system", t.system_prompt))
    head = initial_prompt if initial_prompt is not None else build_initial_prompt(space, budget, t)
    if mode == "compressed":
        msgs.append(Message("user", build_compressed(space, history, budget, t, initial_prompt=head)))
        return msgs
    if mode != "chat":
        raise ValueError(f"unknown mode {mode!r}")
    msgs.append(Message("user", head))
    for i, trial in enumerate(history.trials):
        reply = trial.annotations.get("raw_response") or canonical_json(space, trial.config)
        msgs.append(Message("assistant", str(reply)))
        is_last = i + 2 == budget  # this transition asks for the final config
        msgs.append(Message("user", build_transition(trial.loss, reasoning, is_last, t)))
    return msgs


def _retry_messages(mode: str, msgs: list[Message], bad_text: str, t: PromptTemplateSet) -> list[Message]:
    if mode == "chat":
        return msgs + [Message("assistant", bad_text), Message("user", t.retry_ask)]
    # compressed stays a single user message: re-send it with the corrective
    # ask appended
    base = msgs[:-1]
    return base + [Message("user", msgs[-1].content + "\n" + t.retry_ask)]


def llm_propose(
    client,
    model: str,
    space: SearchSpace,
    history: History,
    budget: int,
    step: int,
    *,
    mode: str = "chat",
    reasoning: str = "plain",
    expert: bool = False,
    temperature: float = 0.0,
    templates: PromptTemplateSet | None = None,
    initial_prompt: str | None = None,
    max_retries: int = MAX_RETRIES,
    clamp: bool = False,
    random_fallback: bool = False,
    fallback_rng: np.random.Generator | None = None,
    ledger: CostLedger | None = None,
) -> tuple[Config, dict]:
    """Ask for the next config; returns (config, annotations).

    On a parse or validation failure the model is re-asked with a corrective
    message up to max_retries times (max_retries+1 completions in total).
    After that: random fallback if enabled, else ProposalFailed.
    """
    t = _templates(templates)
    msgs = build_messages(
        space, history, budget,
        mode=mode, reasoning=reasoning, expert=expert,
        templates=t, initial_prompt=initial_prompt,
    )
    attempts = 0
    last_error: Exception | None = None
    tokens_in = tokens_out = 0
    while attempts <= max_retries:
        resp = client.complete(CompletionRequest(model=model, messages=tuple(msgs), temperature=temperature))
        attempts += 1
        tokens_in += resp.tokens_in
        tokens_out += resp.tokens_out
        if ledger is not None:
            try:
                ledger.record(model, resp.tokens_in, resp.tokens_out)
            except UnknownModel:
                pass
        try:
            proposal = parse_response(resp.text)
            config = validate(space, adapt_raw_config(space, proposal.config_raw), clamp=clamp)
        except (NoJson, BadJson, ValidationErrors) as exc:
            last_error = exc
            msgs = _retry_messages(mode, msgs, resp.text, t)
            continue
        annotations = {
            "raw_response": resp.text,
            "tokens_in": tokens_in,
            "tokens_out": tokens_out,
        }
        if proposal.analysis is not None:
            annotations["analysis"] = proposal.analysis
        if attempts > 1:
            annotations["retries"] = attempts - 1
        return config, annotations
    if random_fallback:
        rng = fallback_rng if fallback_rng is not None else np.random.default_rng(0)
        config = random_propose(space, rng)
        return config, {
            "raw_response": "",
            "tokens_in": tokens_in,
            "tokens_out": tokens_out,
            "fallback": True,
            "retries": attempts - 1,
        }
    assert last_error is not None
    raise ProposalFailed(attempts, last_error)


class LLMProposer:
    """Proposer-contract wrapper; per-step annotations land in last_annotations."""

    def __init__(
        self,
        client,
        model: str,
        *,
        mode: str = "chat",
        reasoning: str = "plain",
        expert: bool = False,
        temperature: float = 0.0,
        templates: PromptTemplateSet | None = None,
        initial_prompt: str | None = None,
        max_retries: int = MAX_RETRIES,
        clamp: bool = False,
        random_fallback: bool = False,
        fallback_rng: np.random.Generator | None = None,
        ledger: CostLedger | None = None,
        id: str = "llm",
    ):
        self.client = client
        self.model = model
        self.mode = mode
        self.reasoning = reasoning
        self.expert = expert
        self.temperature = temperature
        self.templates = _templates(templates)
        self.initial_prompt = initial_prompt
        self.max_retries = max_retries
        self.clamp = clamp
        self.random_fallback = random_fallback
        self.fallback_rng = fallback_rng
        self.ledger = ledger if ledger is not None else CostLedger()
        self.id = id
        self.last_annotations: dict = {}

    def propose(self, space: SearchSpace, history: History, budget: int, step: int) -> Config:
        config, annotations = llm_propose(
            self.client,
            self.model,
            space,
            history,
            budget,
            step,
            mode=self.mode,
            reasoning=self.reasoning,
            expert=self.expert,
            temperature=self.temperature,
            templates=self.templates,
            initial_prompt=self.initial_prompt,
            max_retries=self.max_retries,
            clamp=self.clamp,
            random_fallback=self.random_fallback,
            fallback_rng=self.fallback_rng,
            ledger=self.ledger,
        )
        self.last_annotations = annotations
        return config
