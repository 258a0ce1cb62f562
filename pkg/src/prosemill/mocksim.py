"""Template-aware response simulators for the mock backend.

Each handler fabricates a deterministic, well-formed reply for one template
id, good enough for the real parsers and grounding checks downstream. The
goal is an offline pipeline whose outputs are a pure function of (seed,
request), not realistic prose.
"""

from __future__ import annotations

import json
import re
from typing import TYPE_CHECKING, Callable

if TYPE_CHECKING:
    from .gateway import ChatRequest, MockBackend

_SPAN = re.compile(r"<<<SPAN\n(.*?)\nSPAN>>>", re.DOTALL)
_TEXT = re.compile(r"<<<TEXT\n(.*?)\nTEXT>>>", re.DOTALL)
_TOOL = re.compile(r"<<<TOOL\n(.*?)\nTOOL>>>", re.DOTALL)
_THEME = re.compile(r"^THEME: (.*)$", re.MULTILINE)
_CANDIDATES = re.compile(r"^CANDIDATE IDS: (.*)$", re.MULTILINE)
_TOOL_NAME = re.compile(r"^TOOL: (.*)$", re.MULTILINE)
_SITUATION = re.compile(r"^SITUATION:\n(.*?)(?:\n\n|$)", re.DOTALL | re.MULTILINE)
_HAN = re.compile(r"[㐀-䶿一-鿿豈-﫿]")

_FILLERS = ("somewhat", "rather", "notably", "plainly", "arguably", "broadly")


def _block(pattern: re.Pattern[str], req: "ChatRequest", label: str) -> str:
    m = pattern.search(req.joined_content())
    if not m:
        raise AssertionError(f"mock handler expected a {label} block in the prompt")
    return m.group(1)


def _num(digest: str, lo: float, hi: float, slot: int) -> float:
    # 4 hex chars per slot → uniform-ish in [lo, hi], 1 decimal place
    raw = int(digest[4 * slot : 4 * slot + 4], 16) / 0xFFFF
    return round(lo + raw * (hi - lo), 1)


def _mostly_cjk(text: str) -> bool:
    sample = text[:400]
    return len(_HAN.findall(sample)) > 0.2 * max(1, len(sample.replace(" ", "")))


def degrade(text: str, digest: str, cadence: int = 6) -> str:
    """Deterministic light corruption: small, spread-out substitutions.

    Keeps normalized edit distance well under 0.5 and length ratio near 1,
    which is what the preference-pair constraints demand. Always changes at
    least one character.
    """
    offset = int(digest[:4], 16)
    if _mostly_cjk(text):
        chars = list(text)
        step = max(4, cadence * 2)
        for i in range(offset % step, len(chars), step):
            if not chars[i].isspace():
                chars[i] = "某" if chars[i] != "某" else "其"
        out = "".join(chars)
        return out if out != text else text + "草"
    words = text.split(" ")
    if len(words) >= 3 and len(text) >= 24:
        for i in range(offset % cadence, len(words), cadence):
            if words[i].strip():
                words[i] = _FILLERS[(offset + i) % len(_FILLERS)]
        out = " ".join(words)
        if out != text:
            return out
    # too short for word swaps: a single-char edit keeps both the edit
    # distance and the length ratio inside the preference-pair bounds
    if len(text) >= 8:
        mid = len(text) // 2
        swap = "~" if text[mid] != "~" else "_"
        return text[:mid] + swap + text[mid + 1 :]
    return text + "~"


def _topic(span: str, limit: int = 48) -> str:
    head = " ".join(span.split())[:limit]
    return head if head else "the given text"


def _lead_units(span: str, count: int) -> list[str]:
    if _mostly_cjk(span):
        parts = [p.strip() for p in re.split(r"[。！？\n]", span) if p.strip()]
    else:
        parts = [p.strip() for p in re.split(r"(?<=[.!?])\s+|\n", span) if p.strip()]
    return parts[:count] if parts else [span[:40]]


def _reply(rationale: str, context: str, instruction: str, response: str) -> str:
    return (
        f"[RATIONALE]\n{rationale}\n[/RATIONALE]\n"
        f"[CONTEXT]\n{context}\n[/CONTEXT]\n"
        f"[INSTRUCTION]\n{instruction}\n[/INSTRUCTION]\n"
        f"[RESPONSE]\n{response}\n[/RESPONSE]"
    )


# -- backtranslation ---------------------------------------------------------

def _bt_content_writing(backend: "MockBackend", req: "ChatRequest") -> str:
    span = _block(_SPAN, req, "SPAN")
    return _reply(
        f"The span reads like a finished piece about {_topic(span)!r}; I inferred "
        "the request that would have produced exactly this text.",
        "",
        f"Write a piece that covers: {_topic(span)}.",
        span,
    )


def _bt_polishing(backend: "MockBackend", req: "ChatRequest") -> str:
    span = _block(_SPAN, req, "SPAN")
    draft = degrade(span, backend.digest("draft", span))
    return _reply(
        "I drafted a weaker variant with flat word choices so the span itself "
        "stands as the polished result.",
        draft,
        "Polish this draft: tighten the wording and smooth the transitions "
        "without changing its meaning.",
        span,
    )


def _bt_span_as_context(verb: str) -> Callable[["MockBackend", "ChatRequest"], str]:
    def handler(backend: "MockBackend", req: "ChatRequest") -> str:
        span = _block(_SPAN, req, "SPAN")
        reworked = degrade(span, backend.digest(verb, span), cadence=4)
        return _reply(
            f"The span is carried as context; the response {verb}s it.",
            span,
            f"Please {verb} the provided text, keeping its substance.",
            f"Here is the {verb}ed version. {reworked}",
        )

    return handler


def _bt_outlining(backend: "MockBackend", req: "ChatRequest") -> str:
    span = _block(_SPAN, req, "SPAN")
    lines = [f"{i + 1}. {part[:60]}" for i, part in enumerate(_lead_units(span, 4))]
    return _reply(
        "I reduced the span to the outline a writer would have started from.",
        "",
        f"Draft an outline for a piece about: {_topic(span)}.",
        "Outline:\n" + "\n".join(lines),
    )


def _bt_brainstorming(backend: "MockBackend", req: "ChatRequest") -> str:
    span = _block(_SPAN, req, "SPAN")
    ideas = [f"- angle {i + 1}: {part[:50]}" for i, part in enumerate(_lead_units(span, 3))]
    return _reply(
        "The span suggests a topic; the response lists fresh angles on it.",
        "",
        f"Brainstorm ideas related to: {_topic(span)}.",
        "Ideas:\n" + "\n".join(ideas),
    )


def _bt_reviewing(backend: "MockBackend", req: "ChatRequest") -> str:
    span = _block(_SPAN, req, "SPAN")
    return _reply(
        "The span is the object under review; the response critiques it.",
        "",
        "Review the following text and assess its strengths and weaknesses: "
        f"{_topic(span)}.",
        f"The piece opens with {_lead_units(span, 1)[0][:60]!r}, which anchors the "
        "topic well; pacing drifts in the middle, and the close would land "
        "harder with a concrete image.",
    )


def _bt_annotation(backend: "MockBackend", req: "ChatRequest") -> str:
    span = _block(_SPAN, req, "SPAN")
    return _reply(
        "The span demonstrates the annotation skill itself, so the response "
        "derives a pair from it step by step.",
        "",
        "Explain how to turn the given text into an instruction-response "
        "training pair.",
        "Step 1: read the span and name its topic "
        f"({_topic(span)}). Step 2: write the instruction that would have "
        "produced it. Step 3: keep the span as the response and record the "
        "reasoning.",
    )


# -- scoring and judging -----------------------------------------------------

def _score_pair(backend: "MockBackend", req: "ChatRequest") -> str:
    d = backend.digest("score", req.request_hash())
    return (
        f"quality: {_num(d, 3.0, 10.0, 0)}\n"
        f"diversity: {_num(d, 3.0, 10.0, 1)}\n"
        f"relevance: {_num(d, 3.0, 10.0, 2)}"
    )


def _bench_judge(backend: "MockBackend", req: "ChatRequest") -> str:
    d = backend.digest("judge", req.request_hash())
    return (
        f"style: {_num(d, 1.0, 10.0, 0)}\n"
        f"relevance: {_num(d, 1.0, 10.0, 1)}\n"
        f"creativity: {_num(d, 1.0, 10.0, 2)}"
    )


def _bench_generate(backend: "MockBackend", req: "ChatRequest") -> str:
    prompt = req.joined_content()
    d = backend.digest("gen", prompt)
    return (
        f"Taking the request at face value, here is a response shaped by "
        f"voice {d[:6]}. {_topic(prompt, 80)} deserves a considered answer, "
        f"and this one closes on note {d[6:10]}."
    )


# -- constitutional preference synthesis --------------------------------------

def _cdpo_attribute(backend: "MockBackend", req: "ChatRequest") -> str:
    raw = _block(_CANDIDATES, req, "CANDIDATE IDS") if _CANDIDATES.search(
        req.joined_content()
    ) else ""
    ids = [c.strip() for c in raw.split(",") if c.strip()]
    if not ids:
        return "PRINCIPLE: unknown\nRATIONALE: no candidates were listed."
    pick = ids[int(backend.digest("attr", req.request_hash())[:8], 16) % len(ids)]
    return (
        f"PRINCIPLE: {pick}\n"
        "RATIONALE: the response's strongest quality is the one this "
        "principle names."
    )


def _cdpo_perturb(backend: "MockBackend", req: "ChatRequest") -> str:
    chosen = _block(_TEXT, req, "TEXT")
    rewritten = degrade(chosen, backend.digest("perturb", chosen))
    return (
        "[RATIONALE]\nSwapped scattered words for duller ones; everything "
        "else is untouched, so only the principled quality degrades.\n"
        "[/RATIONALE]\n"
        f"[REWRITE]\n{rewritten}\n[/REWRITE]"
    )


# -- function calling ----------------------------------------------------------

_PARAM_KINDS = ("string", "int", "float", "bool", "enum")


def _funcall_environment(backend: "MockBackend", req: "ChatRequest") -> str:
    theme = _block(_THEME, req, "THEME").strip()
    d = backend.digest("env", theme)
    slug = re.sub(r"[^a-z0-9]+", "_", theme.lower()).strip("_") or "tool"
    n_tools = 3 + int(d[:2], 16) % 3
    tools = []
    for t in range(n_tools):
        params = []
        n_params = 1 + int(d[2 + t : 4 + t], 16) % 3
        for p in range(n_params):
            kind = _PARAM_KINDS[(t + p + int(d[4:6], 16)) % len(_PARAM_KINDS)]
            param = {
                "name": f"arg_{p}",
                "type": kind,
                "required": p == 0,
                "description": f"parameter {p} of action {t}",
            }
            if kind == "enum":
                param["values"] = ["low", "medium", "high"]
            params.append(param)
        tools.append(
            {
                "name": f"{slug}_{('get', 'list', 'update', 'check', 'plan')[t % 5]}_{t}",
                "description": f"{theme} action {t}",
                "params": params,
            }
        )
    return json.dumps({"theme": theme, "tools": tools}, ensure_ascii=False, indent=2)


def _funcall_situation(backend: "MockBackend", req: "ChatRequest") -> str:
    tool = _block(_TOOL_NAME, req, "TOOL").strip()
    d = backend.digest("sit", req.request_hash())[:6]
    return (
        f"A user is midway through a task where {tool} is the natural next "
        f"step; they know the inputs but not the outcome (case {d})."
    )


def _funcall_arguments(backend: "MockBackend", req: "ChatRequest") -> str:
    spec = json.loads(_block(_TOOL, req, "TOOL"))
    d = backend.digest("args", req.request_hash())
    args: dict[str, object] = {}
    for i, param in enumerate(spec.get("params", [])):
        include = param.get("required", False) or int(d[i % 32], 16) % 2 == 0
        if not include:
            continue
        kind = param.get("type", "string")
        if kind == "string":
            args[param["name"]] = f"sample {d[2 * i % 30:2 * i % 30 + 4]}"
        elif kind == "int":
            args[param["name"]] = int(d[i % 28 : i % 28 + 4], 16) % 100
        elif kind == "float":
            args[param["name"]] = round(int(d[i % 28 : i % 28 + 4], 16) % 1000 / 10, 1)
        elif kind == "bool":
            args[param["name"]] = int(d[i % 32], 16) % 2 == 0
        elif kind == "enum":
            values = param.get("values") or ["low"]
            args[param["name"]] = values[int(d[i % 32], 16) % len(values)]
    return json.dumps(args, ensure_ascii=False)


def _funcall_instruction(backend: "MockBackend", req: "ChatRequest") -> str:
    situation = _SITUATION.search(req.joined_content())
    hint = situation.group(1).strip()[:80] if situation else "the task at hand"
    return f"Please handle this for me: {hint}"


def default_handlers() -> dict[str, Callable[["MockBackend", "ChatRequest"], str]]:
    return {
        "backtranslate_content_writing": _bt_content_writing,
        "backtranslate_outlining": _bt_outlining,
        "backtranslate_polishing_editing": _bt_polishing,
        "backtranslate_style_transfer": _bt_span_as_context("restyle"),
        "backtranslate_expand_simplify": _bt_span_as_context("rework"),
        "backtranslate_brainstorming": _bt_brainstorming,
        "backtranslate_reviewing": _bt_reviewing,
        "backtranslate_instruction_annotation": _bt_annotation,
        "score_pair": _score_pair,
        "cdpo_attribute": _cdpo_attribute,
        "cdpo_perturb": _cdpo_perturb,
        "funcall_environment": _funcall_environment,
        "funcall_situation": _funcall_situation,
        "funcall_arguments": _funcall_arguments,
        "funcall_instruction": _funcall_instruction,
        "bench_judge": _bench_judge,
        "bench_generate": _bench_generate,
    }
