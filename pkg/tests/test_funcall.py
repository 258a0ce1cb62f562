"""Function-calling synthesis tests: parsing, validation, seeded uniformity."""

from __future__ import annotations

import json
from collections import Counter

import pytest

from prosemill.errors import ParseFailure, SampleRejected
from prosemill.funcall import (
    PARAM_TYPES,
    FunctionCallSample,
    ParamSpec,
    ToolEnvironment,
    ToolSpec,
    pick_tool,
    synth_dataset,
    synth_environment,
    synth_sample,
    validate_call,
)
from prosemill.gateway import MockBackend

WEATHER_TOOLS = [
    {
        "name": "get_forecast",
        "description": "fetch the forecast",
        "params": [
            {"name": "city", "type": "string", "required": True},
            {"name": "days", "type": "int", "required": False},
        ],
    },
    {
        "name": "get_alerts",
        "description": "active weather alerts",
        "params": [
            {"name": "region", "type": "string", "required": True},
            {"name": "severity", "type": "enum", "required": False,
             "values": ["low", "medium", "high"]},
        ],
    },
    {
        "name": "compare_history",
        "description": "compare with historical data",
        "params": [{"name": "year", "type": "int", "required": True}],
    },
]


def env_backend(tools=WEATHER_TOOLS, theme="weather desk") -> MockBackend:
    return MockBackend(seed=0, script={
        "funcall_environment": json.dumps({"theme": theme, "tools": tools})})


def forecast_tool() -> ToolSpec:
    return ToolSpec.from_dict(WEATHER_TOOLS[0])


def alerts_tool() -> ToolSpec:
    return ToolSpec.from_dict(WEATHER_TOOLS[1])


# --- specs and validation -------------------------------------------------------

def test_param_spec_rejects_unknown_type():
    with pytest.raises(ValueError):
        ParamSpec(name="x", type="tuple", required=True)
    with pytest.raises(ValueError):
        ParamSpec(name="x", type="enum", required=True, values=())
    assert set(PARAM_TYPES) == {"string", "int", "float", "bool", "enum"}


def test_tool_spec_unique_params_and_identifier():
    with pytest.raises(ValueError):
        ToolSpec(name="ok_tool", description="d", params=(
            ParamSpec("a", "string", True), ParamSpec("a", "int", False)))
    with pytest.raises(ValueError):
        ToolSpec(name="not an identifier!", description="d", params=())


def test_environment_rejects_duplicate_tool_names():
    tool = forecast_tool()
    with pytest.raises(ValueError):
        ToolEnvironment(id="e", theme="t", tools=(tool, tool))
    with pytest.raises(ValueError):
        ToolEnvironment(id="e", theme="t", tools=())


def test_validate_call_ok():
    call = ("get_forecast", {"city": "Oslo", "days": 3})
    assert validate_call(call, forecast_tool()) == []


def test_validate_call_each_violation_kind():
    tool = alerts_tool()
    assert validate_call(("other_tool", {"region": "north"}), tool) == \
        ["wrong_tool:other_tool"]
    assert validate_call(("get_alerts", {"region": "north", "radius": 5}),
                         tool) == ["unknown_argument:radius"]
    assert validate_call(("get_alerts", {}), tool) == ["missing_required:region"]
    assert validate_call(("get_alerts", {"region": "north",
                                         "severity": "extreme"}), tool) == \
        ["enum_violation:severity"]


def test_validate_call_type_rules():
    tool = forecast_tool()
    assert validate_call(("get_forecast", {"city": "Oslo", "days": "abc"}),
                         tool) == ["type_mismatch:days"]
    # bool is not an int, despite Python's subclassing
    assert validate_call(("get_forecast", {"city": "Oslo", "days": True}),
                         tool) != []
    float_tool = ToolSpec(name="t", description="", params=(
        ParamSpec("ratio", "float", True),))
    assert validate_call(("t", {"ratio": 2}), float_tool) == []  # int ok as float
    assert validate_call(("t", {"ratio": "2.0"}), float_tool) != []


def test_validate_call_reports_all_violations_at_once():
    tool = alerts_tool()
    violations = validate_call(
        ("get_alerts", {"severity": "extreme", "radius": 1}), tool)
    kinds = {v.split(":")[0] for v in violations}
    assert kinds == {"missing_required", "enum_violation", "unknown_argument"}


def lookup(env: ToolEnvironment, name: str) -> ToolSpec:
    return next(t for t in env.tools if t.name == name)


# --- environment synthesis ---------------------------------------------------------

def test_synth_environment_scripted_three_tools():
    env = synth_environment("weather desk", env_backend())
    assert len(env.tools) == 3
    assert env.theme == "weather desk"
    assert env.id.startswith("env-")
    assert lookup(env, "get_alerts").params[1].values == ("low", "medium", "high")


def test_synth_environment_duplicate_tools_is_parse_failure():
    tools = [WEATHER_TOOLS[0], WEATHER_TOOLS[0]]
    with pytest.raises(ParseFailure) as err:
        synth_environment("weather desk", env_backend(tools))
    assert err.value.raw_output


def test_synth_environment_missing_params_is_parse_failure():
    tools = [{"name": "bare_tool", "description": "no params key"}]
    with pytest.raises(ParseFailure, match="params"):
        synth_environment("weather desk", env_backend(tools))


def test_synth_environment_non_json_is_parse_failure():
    backend = MockBackend(seed=0, script={"funcall_environment": "not json"})
    with pytest.raises(ParseFailure):
        synth_environment("weather desk", backend)


def test_synth_environment_default_handler_valid():
    env = synth_environment("orbital logistics", MockBackend(seed=4))
    assert 3 <= len(env.tools) <= 5
    for tool in env.tools:
        assert tool.params
        assert any(p.required for p in tool.params)


# --- sample synthesis -----------------------------------------------------------------

def test_pick_tool_single_tool_always_chosen():
    env = ToolEnvironment(id="e1", theme="t", tools=(forecast_tool(),))
    assert all(pick_tool(env, s).name == "get_forecast" for s in range(50))


def test_pick_tool_uniform_over_10k_seeds():
    env = synth_environment("weather desk", env_backend(
        WEATHER_TOOLS + [{"name": "fourth_tool", "description": "d",
                          "params": [{"name": "q", "type": "string",
                                      "required": True}]}]))
    assert len(env.tools) == 4
    counts = Counter(pick_tool(env, seed).name for seed in range(10_000))
    for tool_name, count in counts.items():
        assert 0.22 <= count / 10_000 <= 0.28, f"{tool_name}: {count}"


def test_synth_sample_happy_path_validates():
    env = synth_environment("harbor master", MockBackend(seed=1))
    sample = synth_sample(env, seed=3, backend=MockBackend(seed=1))
    assert sample.environment_id == env.id
    assert sample.situation and sample.instruction
    tool_name, arguments = sample.gold_call
    assert validate_call((tool_name, arguments), lookup(env, tool_name)) == []
    again = synth_sample(env, seed=3, backend=MockBackend(seed=1))
    assert again.to_dict() == sample.to_dict()


def test_synth_sample_bad_arguments_rejected_after_retry():
    env = synth_environment("weather desk", env_backend())
    backend = MockBackend(seed=0, script={
        "funcall_situation": "a situation",
        "funcall_arguments": json.dumps({"days": "abc"}),  # missing city, bad type
        "funcall_instruction": "an instruction",
    })
    with pytest.raises(SampleRejected) as err:
        synth_sample(env, seed=0, backend=backend)
    assert "missing_required" in str(err.value) or "type_mismatch" in str(err.value)
    argument_calls = [c for c in backend.calls
                      if c.template_id == "funcall_arguments"]
    assert len(argument_calls) == 2


def test_synth_sample_retry_succeeds_on_second_attempt():
    env = synth_environment("weather desk", env_backend())
    tool = pick_tool(env, 0)
    replies = iter(["{}", json.dumps(
        {p.name: ("x" if p.type == "string" else 2021) for p in tool.params
         if p.required})])
    backend = MockBackend(seed=0, script={
        "funcall_situation": "a situation",
        "funcall_arguments": lambda req: next(replies),
        "funcall_instruction": "an instruction",
    })
    sample = synth_sample(env, seed=0, backend=backend)
    assert validate_call(sample.gold_call, tool) == []


def test_synth_dataset_counts_and_reports():
    themes = ["alpha station", "beta port"]
    envs, samples, report = synth_dataset(themes, per_env=3,
                                          backend=MockBackend(seed=2), seed=0)
    assert len(envs) == 2
    assert report.environments == 2
    assert len(samples) == 6
    assert report.samples == 6
    assert len({s.id for s in samples}) == 6
    env_by_id = {e.id: e for e in envs}
    for s in samples:
        tool = lookup(env_by_id[s.environment_id], s.gold_call[0])
        assert validate_call(s.gold_call, tool) == []


def test_function_call_sample_round_trip():
    sample = FunctionCallSample(
        id="fc-1", environment_id="env-1", situation="s", instruction="i",
        gold_call=("tool_a", {"x": 1}))
    data = sample.to_dict()
    assert data["gold_call"] == {"tool_name": "tool_a", "arguments": {"x": 1}}
    assert FunctionCallSample.from_dict(data) == sample
