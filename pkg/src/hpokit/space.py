"""Hyperparameter search spaces: definition, validation, sampling, serialization.

A ``SearchSpace`` is an ordered list of ``ParamSpec``s. The order is canonical:
it fixes the key order of serialized configs and the line order of the prompt
description. Description lines are stored verbatim on each spec (not generated
from the numeric fields) so that prompts are byte-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

__all__ = [
    "ParamSpec",
    "SearchSpace",
    "Config",
    "FieldError",
    "ValidationErrors",
    "validate",
    "sample",
    "describe",
    "canonical_json",
    "load_space",
    "builtin_space",
    "toy_space",
    "BUILTIN_SPACES",
]


@dataclass(frozen=True)
class ParamSpec:
    """One tunable parameter: numeric domain plus its verbatim prompt line."""

    name: str
    kind: str  # "float" | "integer"
    lower: float
    upper: float
    log_scale: bool = False
    default: float = 0.0
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("float", "integer"):
            raise ValueError(f"unknown param kind {self.kind!r}")
        if not self.lower <= self.default <= self.upper:
            raise ValueError(
                f"{self.name}: default {self.default} outside [{self.lower}, {self.upper}]"
            )
        if self.log_scale and self.lower <= 0:
            raise ValueError(f"{self.name}: log-scale requires lower > 0")
        if self.kind == "integer":
            for label, v in (("lower", self.lower), ("upper", self.upper), ("default", self.default)):
                if v != int(v):
                    raise ValueError(f"{self.name}: integer param has non-integral {label} {v}")

    @property
    def is_integer(self) -> bool:
        return self.kind == "integer"


@dataclass(frozen=True)
class SearchSpace:
    """Ordered, immutable collection of parameter specs."""

    model_name: str
    params: tuple[ParamSpec, ...]
    example_config_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate param names: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class Config:
    """A validated point in a search space. Values keyed by param name."""

    values: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)


@dataclass(frozen=True)
class FieldError:
    kind: str  # "missing" | "extra" | "out_of_range" | "non_integral" | "non_numeric"
    param: str
    message: str


class ValidationErrors(Exception):
    """Carries every violation found while validating a raw config."""

    def __init__(self, errors: Sequence[FieldError]):
        self.errors = list(errors)
        super().__init__("; ".join(e.message for e in self.errors))


def validate(space: SearchSpace, raw: Mapping[str, object], clamp: bool = False) -> Config:
    """Check a raw name->value map against the space.

    Collects all violations (missing keys, extra keys, out-of-range values,
    non-integral values for integer params) and raises ``ValidationErrors``
    carrying the full list. With ``clamp=True``, out-of-range numeric values
    are clamped to the bounds instead of rejected; other violations still
    raise.
    """
    errors: list[FieldError] = []
    values: dict[str, float] = {}
    names = set(space.names)
    for key in raw:
        if key not in names:
            errors.append(FieldError("extra", key, f"unexpected parameter {key!r}"))
    for spec in space.params:
        if spec.name not in raw:
            errors.append(FieldError("missing", spec.name, f"missing parameter {spec.name!r}"))
            continue
        v = raw[spec.name]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            errors.append(
                FieldError("non_numeric", spec.name, f"{spec.name}={v!r} is not a finite number")
            )
            continue
        v = float(v)
        if not spec.lower <= v <= spec.upper:
            if clamp:
                v = min(max(v, spec.lower), spec.upper)
            else:
                errors.append(
                    FieldError(
                        "out_of_range",
                        spec.name,
                        f"{spec.name}={v} outside [{spec.lower}, {spec.upper}]",
                    )
                )
                continue
        if spec.is_integer and v != int(v):
            errors.append(
                FieldError("non_integral", spec.name, f"{spec.name}={v} must be an integer")
            )
            continue
        values[spec.name] = int(v) if spec.is_integer else v
    if errors:
        raise ValidationErrors(errors)
    return Config(values)


def _map_unit(spec: ParamSpec, u: float) -> float:
    """Inverse-CDF map of u in [0,1] onto the param's domain.

    Endpoints map to the bounds exactly. Integer params round half-up after
    the continuous map, then clamp (the rounding choice is fixed so runs are
    reproducible).
    """
    if u <= 0.0:
        v = float(spec.lower)
    elif u >= 1.0:
        v = float(spec.upper)
    elif spec.log_scale:
        lo, hi = math.log(spec.lower), math.log(spec.upper)
        v = math.exp(lo + u * (hi - lo))
    else:
        v = spec.lower + u * (spec.upper - spec.lower)
    # exp/log round-trip error can land a hair outside the bounds
    v = min(max(v, spec.lower), spec.upper)
    if spec.is_integer:
        v = math.floor(v + 0.5)  # round half-up
        v = min(max(v, spec.lower), spec.upper)
        return int(v)
    return v


def sample(space: SearchSpace, unit: Sequence[float]) -> Config:
    """Map one uniform [0,1] draw per param onto a valid config."""
    if len(unit) != len(space.params):
        raise ValueError(f"expected {len(space.params)} unit values, got {len(unit)}")
    return Config({p.name: _map_unit(p, u) for p, u in zip(space.params, unit)})


def describe(space: SearchSpace) -> str:
    """Newline-joined verbatim description lines, in param order."""
    return "\n".join(p.description for p in space.params)


def _render_value(spec: ParamSpec, v: float) -> str:
    if spec.is_integer:
        return str(int(v))
    return repr(float(v))


def canonical_json(space: SearchSpace, config: Config) -> str:
    """Single-line JSON with keys in space order.

    Integers render without a decimal point; floats use the shortest
    round-trip representation. Used as the lookup key for tabular tasks and
    as the config text in logs and prompts, so it must be deterministic.
    """
    parts = [f'"{p.name}": {_render_value(p, config[p.name])}' for p in space.params]
    return "{" + ", ".join(parts) + "}"


def parse_config_json(space: SearchSpace, text: str) -> Config:
    """Parse a canonical-json string back into a validated config."""
    return validate(space, json.loads(text))


def space_to_dict(space: SearchSpace) -> dict:
    return {
        "model_name": space.model_name,
        "params": [
            {
                "name": p.name,
                "kind": p.kind,
                "lower": p.lower,
                "upper": p.upper,
                "log_scale": p.log_scale,
                "default": p.default,
                "description": p.description,
            }
            for p in space.params
        ],
        "example_config_text": space.example_config_text,
    }


def space_from_dict(data: Mapping) -> SearchSpace:
    params = tuple(
        ParamSpec(
            name=p["name"],
            kind=p["kind"],
            lower=p["lower"],
            upper=p["upper"],
            log_scale=p.get("log_scale", False),
            default=p["default"],
            description=p.get("description", ""),
        )
        for p in data["params"]
    )
    return SearchSpace(
        model_name=data["model_name"],
        params=params,
        example_config_text=data.get("example_config_text", ""),
    )


def load_space(path) -> SearchSpace:
    """Load a space definition from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return space_from_dict(json.load(fh))


BUILTIN_SPACES = ("svm", "logreg", "rf", "nn")


def builtin_space(name: str) -> SearchSpace:
    """Load one of the bundled benchmark spaces (svm, logreg, rf, nn)."""
    if name not in BUILTIN_SPACES:
        raise KeyError(f"unknown builtin space {name!r}; have {BUILTIN_SPACES}")
    ref = resources.files("hpokit.assets.spaces").joinpath(f"{name}.json")
    return space_from_dict(json.loads(ref.read_text(encoding="utf-8")))


def _bound_text(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(float(v))


def toy_space(name: str, domain: Sequence[Sequence[float]]) -> SearchSpace:
    """Build the 2-vector space (params x1, x2) for a toy landscape.

    Configs use keys x1/x2 internally; prompt-side replies use the
    ``{"x": [x1, x2]}`` shape and are adapted in the proposal parser.
    """
    (lo1, hi1), (lo2, hi2) = domain
    params = []
    for pname, lo, hi in (("x1", lo1, hi1), ("x2", lo2, hi2)):
        params.append(
            ParamSpec(
                name=pname,
                kind="float",
                lower=float(lo),
                upper=float(hi),
                log_scale=False,
                default=(float(lo) + float(hi)) / 2.0,
                description=(
                    f"{pname}, Type: UniformFloat, "
                    f"Range: [{_bound_text(lo)}, {_bound_text(hi)}], "
                    f"Default: {_bound_text((float(lo) + float(hi)) / 2.0)}"
                ),
            )
        )
    return SearchSpace(model_name=name, params=tuple(params), example_config_text='{"x": [x1, x2]}')
