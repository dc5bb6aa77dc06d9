"""Space definition, validation, sampling, and canonical serialization."""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpokit.space import (
    BUILTIN_SPACES,
    Config,
    ParamSpec,
    SearchSpace,
    ValidationErrors,
    builtin_space,
    canonical_json,
    describe,
    load_space,
    parse_config_json,
    sample,
    space_from_dict,
    space_to_dict,
    toy_space,
    validate,
)


def test_param_spec_rejects_bad_kind():
    with pytest.raises(ValueError, match="kind"):
        ParamSpec("p", "categorical", 0.0, 1.0)


def test_param_spec_rejects_default_outside_bounds():
    with pytest.raises(ValueError, match="outside"):
        ParamSpec("p", "float", 0.0, 1.0, default=2.0)


def test_param_spec_rejects_log_scale_with_nonpositive_lower():
    with pytest.raises(ValueError, match="log-scale"):
        ParamSpec("p", "float", 0.0, 1.0, log_scale=True, default=0.5)


def test_param_spec_rejects_non_integral_integer_bounds():
    with pytest.raises(ValueError, match="non-integral"):
        ParamSpec("p", "integer", 1.0, 10.5, default=2.0)


def test_search_space_rejects_duplicate_names():
    p = ParamSpec("p", "float", 0.0, 1.0, default=0.5)
    with pytest.raises(ValueError, match="duplicate"):
        SearchSpace("m", (p, p))


def test_validate_accepts_in_range(svm_space):
    cfg = validate(svm_space, {"C": 1.0, "gamma": 0.1})
    assert cfg["C"] == 1.0
    assert cfg["gamma"] == 0.1


def test_validate_collects_every_violation(svm_space):
    # one missing, one extra, nothing silently dropped
    with pytest.raises(ValidationErrors) as exc:
        validate(svm_space, {"gamma": 1e9, "kernel": "rbf"})
    kinds = sorted(e.kind for e in exc.value.errors)
    assert kinds == ["extra", "missing", "out_of_range"]


def test_validate_rejects_bool_as_numeric(svm_space):
    with pytest.raises(ValidationErrors) as exc:
        validate(svm_space, {"C": True, "gamma": 0.1})
    assert exc.value.errors[0].kind == "non_numeric"


def test_validate_rejects_non_finite(svm_space):
    with pytest.raises(ValidationErrors) as exc:
        validate(svm_space, {"C": float("nan"), "gamma": float("inf")})
    assert all(e.kind == "non_numeric" for e in exc.value.errors)


def test_validate_rejects_non_integral_integer_value():
    rf = builtin_space("rf")
    raw = {"max_depth": 10.5, "max_features": 0.5, "min_samples_leaf": 1, "min_samples_split": 32}
    with pytest.raises(ValidationErrors) as exc:
        validate(rf, raw)
    assert [e.kind for e in exc.value.errors] == ["non_integral"]


def test_validate_clamp_mode_clamps_range_only(svm_space):
    cfg = validate(svm_space, {"C": 1e9, "gamma": 1e-9}, clamp=True)
    assert cfg["C"] == svm_space["C"].upper
    assert cfg["gamma"] == svm_space["gamma"].lower
    # clamp does not excuse a missing key
    with pytest.raises(ValidationErrors):
        validate(svm_space, {"C": 1e9}, clamp=True)


def test_sample_endpoints_hit_bounds_exactly(svm_space):
    lo = sample(svm_space, [0.0, 0.0])
    hi = sample(svm_space, [1.0, 1.0])
    assert lo["C"] == svm_space["C"].lower
    assert hi["C"] == svm_space["C"].upper
    assert lo["gamma"] == svm_space["gamma"].lower
    assert hi["gamma"] == svm_space["gamma"].upper


def test_sample_log_scale_midpoint_is_geometric_mean(svm_space):
    cfg = sample(svm_space, [0.5, 0.5])
    spec = svm_space["C"]
    assert cfg["C"] == pytest.approx(math.sqrt(spec.lower * spec.upper))


def test_sample_integer_rounds_half_up():
    space = SearchSpace(
        "m", (ParamSpec("k", "integer", 0.0, 10.0, default=0.0),)
    )
    # continuous value 5.5 -> 6 under round-half-up
    cfg = sample(space, [0.55])
    assert cfg["k"] == 6
    assert isinstance(cfg["k"], int)


def test_sample_wrong_arity(svm_space):
    with pytest.raises(ValueError, match="expected 2"):
        sample(svm_space, [0.5])


def test_describe_joins_description_lines(svm_space):
    lines = describe(svm_space).split("\n")
    assert len(lines) == 2
    assert lines[0].startswith("C, regularization parameter.")
    assert lines[1].startswith("gamma, Kernel coefficient for rbf")


def test_canonical_json_key_order_and_rendering():
    rf = builtin_space("rf")
    cfg = validate(
        rf, {"min_samples_split": 32, "max_depth": 10, "max_features": 0.5, "min_samples_leaf": 1}
    )
    text = canonical_json(rf, cfg)
    assert text == (
        '{"max_depth": 10, "max_features": 0.5, "min_samples_leaf": 1, "min_samples_split": 32}'
    )


def test_canonical_json_roundtrip(svm_space):
    cfg = validate(svm_space, {"C": 0.0009765625 * 7, "gamma": 2.0})
    again = parse_config_json(svm_space, canonical_json(svm_space, cfg))
    assert again.as_dict() == cfg.as_dict()


def test_builtin_spaces_load():
    for name in BUILTIN_SPACES:
        space = builtin_space(name)
        assert len(space) >= 2
        assert space.example_config_text.startswith("{")
    with pytest.raises(KeyError):
        builtin_space("xgboost")


def test_builtin_space_shapes():
    assert builtin_space("svm").names == ("C", "gamma")
    assert builtin_space("logreg").names == ("alpha", "eta0")
    assert builtin_space("rf").names == (
        "max_depth",
        "max_features",
        "min_samples_leaf",
        "min_samples_split",
    )
    assert builtin_space("nn").names == (
        "alpha",
        "batch_size",
        "depth",
        "learning_rate_init",
        "width",
    )


def test_space_dict_roundtrip(svm_space):
    assert space_from_dict(space_to_dict(svm_space)) == svm_space


def test_load_space_from_file(tmp_path, svm_space):
    path = tmp_path / "space.json"
    path.write_text(json.dumps(space_to_dict(svm_space)))
    assert load_space(path) == svm_space


def test_toy_space_description_lines():
    space = toy_space("toy", ((-5.0, 5.0), (0.0, 15.0)))
    assert describe(space) == (
        "x1, Type: UniformFloat, Range: [-5, 5], Default: 0\n"
        "x2, Type: UniformFloat, Range: [0, 15], Default: 7.5"
    )
    assert space.example_config_text == '{"x": [x1, x2]}'


# -- properties


unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@settings(max_examples=200)
@given(u1=unit, u2=unit)
def test_sample_always_validates_svm(u1, u2):
    space = builtin_space("svm")
    cfg = sample(space, [u1, u2])
    validate(space, cfg.as_dict())  # must not raise


@settings(max_examples=200)
@given(us=st.lists(unit, min_size=4, max_size=4))
def test_sample_always_validates_rf(us):
    space = builtin_space("rf")
    cfg = sample(space, us)
    validate(space, cfg.as_dict())
    for name in ("max_depth", "min_samples_leaf", "min_samples_split"):
        assert float(cfg[name]) == int(cfg[name])


@settings(max_examples=100)
@given(us=st.lists(unit, min_size=2, max_size=2))
def test_canonical_json_deterministic(us):
    space = builtin_space("svm")
    cfg = sample(space, us)
    a = canonical_json(space, cfg)
    b = canonical_json(space, Config(dict(reversed(list(cfg.as_dict().items())))))
    assert a == b  # key order comes from the space, not the dict


@settings(max_examples=100)
@given(us=st.lists(unit, min_size=2, max_size=2))
def test_parse_after_render_is_identity(us):
    space = builtin_space("logreg")
    cfg = sample(space, us)
    again = parse_config_json(space, canonical_json(space, cfg))
    assert again.as_dict() == cfg.as_dict()
