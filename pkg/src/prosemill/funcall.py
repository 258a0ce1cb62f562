"""Synthetic function-calling data: imagined tool environments, situations,
instructions, and schema-valid gold calls."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from . import prompts
from .errors import ParseFailure, SampleRejected
from .gateway import Backend, ChatRequest, Gateway, complete
from .jsonl import sha256_text, stable_int

PARAM_TYPES = ("string", "int", "float", "bool", "enum")
_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool
    description: str = ""
    values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.type not in PARAM_TYPES:
            raise ValueError(f"param {self.name!r} has unknown type {self.type!r}")
        if self.type == "enum" and not self.values:
            raise ValueError(f"enum param {self.name!r} needs a non-empty value list")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "type": self.type,
            "required": self.required,
            "description": self.description,
        }
        if self.type == "enum":
            out["values"] = list(self.values)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ParamSpec":
        return cls(
            name=raw["name"],
            type=raw["type"],
            required=bool(raw.get("required", False)),
            description=raw.get("description", ""),
            values=tuple(raw.get("values") or ()),
        )


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[ParamSpec, ...]

    def __post_init__(self) -> None:
        if not _IDENTIFIER.match(self.name):
            raise ValueError(f"tool name {self.name!r} is not an identifier")
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"tool {self.name!r} has duplicate param names")

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ToolSpec":
        if "params" not in raw:
            raise ValueError(f"tool {raw.get('name')!r} is missing its params array")
        return cls(
            name=raw["name"],
            description=raw.get("description", ""),
            params=tuple(ParamSpec.from_dict(p) for p in raw["params"]),
        )


@dataclass(frozen=True)
class ToolEnvironment:
    id: str
    theme: str
    tools: tuple[ToolSpec, ...]

    def __post_init__(self) -> None:
        if not self.tools:
            raise ValueError("environment must define at least one tool")
        names = [t.name for t in self.tools]
        if len(names) != len(set(names)):
            raise ValueError(f"environment {self.id!r} has duplicate tool names")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "theme": self.theme,
            "tools": [t.to_dict() for t in self.tools],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ToolEnvironment":
        return cls(
            id=raw["id"],
            theme=raw["theme"],
            tools=tuple(ToolSpec.from_dict(t) for t in raw["tools"]),
        )


@dataclass(frozen=True)
class FunctionCallSample:
    id: str
    environment_id: str
    situation: str
    instruction: str
    gold_call: tuple[str, dict[str, Any]]

    def to_dict(self) -> dict:
        tool_name, arguments = self.gold_call
        return {
            "id": self.id,
            "environment_id": self.environment_id,
            "situation": self.situation,
            "instruction": self.instruction,
            "gold_call": {"tool_name": tool_name, "arguments": arguments},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FunctionCallSample":
        call = raw["gold_call"]
        return cls(
            id=raw["id"],
            environment_id=raw["environment_id"],
            situation=raw["situation"],
            instruction=raw["instruction"],
            gold_call=(call["tool_name"], dict(call["arguments"])),
        )


# -- validation -----------------------------------------------------------------

def _type_ok(value: Any, param: ParamSpec) -> bool:
    if param.type == "string":
        return isinstance(value, str)
    if param.type == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if param.type == "float":
        return (isinstance(value, (int, float))
                and not isinstance(value, bool))
    if param.type == "bool":
        return isinstance(value, bool)
    if param.type == "enum":
        return isinstance(value, str)
    return False


def validate_call(call: tuple[str, dict[str, Any]], spec: ToolSpec) -> list[str]:
    """Every violation as data; an empty list means the call is valid."""
    tool_name, arguments = call
    violations = []
    if tool_name != spec.name:
        violations.append(f"wrong_tool:{tool_name}")
    for name in arguments:
        if spec.param(name) is None:
            violations.append(f"unknown_argument:{name}")
    for param in spec.params:
        if param.required and param.name not in arguments:
            violations.append(f"missing_required:{param.name}")
    for name, value in arguments.items():
        param = spec.param(name)
        if param is None:
            continue
        if not _type_ok(value, param):
            violations.append(f"type_mismatch:{name}")
        elif param.type == "enum" and value not in param.values:
            violations.append(f"enum_violation:{name}")
    return violations


# -- synthesis --------------------------------------------------------------------

_FENCE = re.compile(r"^```[a-z]*\n|\n```$")


def _parse_json_reply(raw: str, what: str) -> Any:
    cleaned = _FENCE.sub("", raw.strip())
    try:
        return json.loads(cleaned)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"unparsable {what} JSON: {exc}", raw_output=raw) from exc


def synth_environment(theme: str, backend: Backend | Gateway) -> ToolEnvironment:
    rendered = prompts.render("funcall_environment", theme=theme)
    request = ChatRequest.build(
        "", rendered, seed=stable_int("env", theme) % 2**31,
        template_id="funcall_environment",
    )
    raw = complete(request, backend).content
    payload = _parse_json_reply(raw, "environment")
    env_id = "env-" + sha256_text(theme)[:12]
    try:
        return ToolEnvironment.from_dict(
            {"id": env_id, "theme": payload.get("theme", theme),
             "tools": payload.get("tools", [])}
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseFailure(f"invalid environment: {exc}", raw_output=raw) from exc


def pick_tool(env: ToolEnvironment, seed: int) -> ToolSpec:
    """Seeded uniform choice, stable across processes."""
    return env.tools[stable_int(env.id, seed, "tool") % len(env.tools)]


def synth_sample(
    env: ToolEnvironment, seed: int, backend: Backend | Gateway
) -> FunctionCallSample:
    """Situation → arguments → instruction, with one retry on invalid args."""
    tool = pick_tool(env, seed)

    situation = complete(
        ChatRequest.build(
            "",
            prompts.render(
                "funcall_situation",
                environment_theme=env.theme,
                tool_name=tool.name,
                tool_description=tool.description,
            ),
            seed=stable_int(env.id, seed, "situation") % 2**31,
            template_id="funcall_situation",
        ),
        backend,
    ).content.strip()

    arguments = None
    problems: list[str] = []
    for attempt in range(2):
        raw = complete(
            ChatRequest.build(
                "",
                prompts.render(
                    "funcall_arguments",
                    situation=situation,
                    tool_json=json.dumps(tool.to_dict(), ensure_ascii=False, indent=2),
                ),
                seed=stable_int(env.id, seed, "arguments", attempt) % 2**31,
                template_id="funcall_arguments",
            ),
            backend,
        ).content
        try:
            candidate = _parse_json_reply(raw, "arguments")
        except ParseFailure as exc:
            problems = [str(exc)]
            continue
        if not isinstance(candidate, dict):
            problems = ["arguments reply is not a JSON object"]
            continue
        problems = validate_call((tool.name, candidate), tool)
        if not problems:
            arguments = candidate
            break
    if arguments is None:
        raise SampleRejected(
            f"environment {env.id!r} tool {tool.name!r}: arguments invalid twice "
            f"({'; '.join(problems)})"
        )

    instruction = complete(
        ChatRequest.build(
            "",
            prompts.render(
                "funcall_instruction",
                situation=situation,
                tool_name=tool.name,
                arguments_json=json.dumps(arguments, ensure_ascii=False),
            ),
            seed=stable_int(env.id, seed, "instruction") % 2**31,
            template_id="funcall_instruction",
        ),
        backend,
    ).content.strip()

    sample_id = "fc-" + sha256_text(f"{env.id}|{seed}")[:16]
    return FunctionCallSample(
        id=sample_id,
        environment_id=env.id,
        situation=situation,
        instruction=instruction,
        gold_call=(tool.name, arguments),
    )


@dataclass
class FuncallReport:
    environments: int = 0
    samples: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)


def synth_dataset(
    themes: Sequence[str],
    per_env: int,
    backend: Backend | Gateway,
    seed: int = 0,
) -> tuple[list[ToolEnvironment], list[FunctionCallSample], FuncallReport]:
    report = FuncallReport()
    environments: list[ToolEnvironment] = []
    samples: list[FunctionCallSample] = []
    for theme in themes:
        try:
            env = synth_environment(theme, backend)
        except ParseFailure as exc:
            report.rejected.append((theme, f"ParseFailure: {exc}"))
            continue
        environments.append(env)
        report.environments += 1
        for k in range(per_env):
            try:
                samples.append(synth_sample(env, seed + k, backend))
                report.samples += 1
            except (SampleRejected, ParseFailure) as exc:
                report.rejected.append((env.id, f"{type(exc).__name__}: {exc}"))
    return environments, samples, report
