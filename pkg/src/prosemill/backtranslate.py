"""Instruction backtranslation: derive instruction-response pairs from text.

Given a high-quality document, pick a span, show the LLM five annotated
cases from the same (subdomain, task) bucket, and have it reason out the
instruction that would have produced that span. Task-specific grounding
rules tie the output back to the span so the pairs stay faithful.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from . import prompts
from .errors import (
    DocTooShort,
    ExemplarError,
    GroundingViolation,
    ParseFailure,
)
from .gateway import Backend, ChatRequest, Gateway, complete
from .ingest import Document
from .jsonl import sha256_text, stable_int
from .taxonomy import (
    SPAN_AS_CONTEXT_TASKS,
    SPAN_VERBATIM_TASKS,
    DomainKind,
    TaskKind,
)

if TYPE_CHECKING:
    from .quality import ScoreTriple

EXEMPLARS_PER_BUCKET = 5

#: Default span bounds (min_chars, max_chars) by mixing stratum; fiction
#: spans run longer so scenes stay intact.
FICTION_BOUNDS = (500, 4000)
NONFICTION_BOUNDS = (200, 2000)


def template_for_task(task: TaskKind) -> str:
    snake = re.sub(r"(?<!^)(?=[A-Z])", "_", task.value).lower()
    return f"backtranslate_{snake}"


def default_span_bounds(domain: DomainKind) -> tuple[int, int]:
    if domain is DomainKind.FictionWriting:
        return FICTION_BOUNDS
    return NONFICTION_BOUNDS


@dataclass(frozen=True)
class ExemplarCase:
    task: TaskKind
    domain: DomainKind
    subdomain: str
    source_excerpt: str
    selected_span: tuple[int, int]
    instruction: str
    response: str
    rationale: str
    context: str | None = None

    def __post_init__(self) -> None:
        start, end = self.selected_span
        if not (0 <= start < end <= len(self.source_excerpt)):
            raise ExemplarError(
                f"exemplar span ({start}, {end}) outside its excerpt "
                f"(length {len(self.source_excerpt)})"
            )

    @property
    def span_text(self) -> str:
        start, end = self.selected_span
        return self.source_excerpt[start:end]

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "domain": self.domain.value,
            "subdomain": self.subdomain,
            "source_excerpt": self.source_excerpt,
            "selected_span": list(self.selected_span),
            "context": self.context,
            "instruction": self.instruction,
            "response": self.response,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExemplarCase":
        return cls(
            task=TaskKind(raw["task"]),
            domain=DomainKind(raw["domain"]),
            subdomain=raw["subdomain"],
            source_excerpt=raw["source_excerpt"],
            selected_span=tuple(raw["selected_span"]),
            context=raw.get("context"),
            instruction=raw["instruction"],
            response=raw["response"],
            rationale=raw["rationale"],
        )


class ExemplarStore:
    """Buckets of annotated cases keyed by (subdomain, task)."""

    def __init__(self) -> None:
        self._buckets: dict[tuple[str, TaskKind], list[ExemplarCase]] = {}

    def add(self, case: ExemplarCase) -> None:
        self._buckets.setdefault((case.subdomain, case.task), []).append(case)

    def bucket(self, subdomain: str, task: TaskKind) -> tuple[ExemplarCase, ...]:
        cases = self._buckets.get((subdomain, task))
        if cases is None:
            raise ExemplarError(f"no exemplar bucket for ({subdomain!r}, {task.value})")
        if len(cases) != EXEMPLARS_PER_BUCKET:
            raise ExemplarError(
                f"bucket ({subdomain!r}, {task.value}) has {len(cases)} exemplars, "
                f"need exactly {EXEMPLARS_PER_BUCKET}"
            )
        return tuple(cases)

    def buckets(self) -> list[tuple[str, TaskKind]]:
        return sorted(self._buckets, key=lambda k: (k[0], k[1].value))

    def save_dir(self, root: str | Path) -> None:
        root = Path(root)
        for (subdomain, task), cases in self._buckets.items():
            path = root / subdomain / f"{task.value}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(
                json.dumps([c.to_dict() for c in cases], ensure_ascii=False, indent=2),
                encoding="utf-8",
            )

    @classmethod
    def load_dir(cls, root: str | Path) -> "ExemplarStore":
        store = cls()
        root = Path(root)
        if not root.is_dir():
            raise ExemplarError(f"exemplar directory {str(root)!r} does not exist")
        for path in sorted(root.glob("*/*.json")):
            try:
                cases = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ExemplarError(f"malformed exemplar file {path}: {exc}") from exc
            for raw in cases:
                store.add(ExemplarCase.from_dict(raw))
        return store


@dataclass(frozen=True)
class InstructionPair:
    id: str
    task: TaskKind
    domain: DomainKind
    subdomain: str
    instruction: str
    response: str
    rationale: str
    source_doc_id: str
    source_span: str
    context: str | None = None
    scores: "ScoreTriple | None" = None

    def __post_init__(self) -> None:
        if not self.instruction.strip() or not self.response.strip():
            raise ParseFailure("instruction and response must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task": self.task.value,
            "domain": self.domain.value,
            "subdomain": self.subdomain,
            "instruction": self.instruction,
            "context": self.context,
            "response": self.response,
            "rationale": self.rationale,
            "source_doc_id": self.source_doc_id,
            "source_span": self.source_span,
            "scores": self.scores.to_dict() if self.scores else None,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "InstructionPair":
        from .quality import ScoreTriple  # runtime-only; avoids an import cycle

        scores = raw.get("scores")
        return cls(
            id=raw["id"],
            task=TaskKind(raw["task"]),
            domain=DomainKind(raw["domain"]),
            subdomain=raw["subdomain"],
            instruction=raw["instruction"],
            context=raw.get("context"),
            response=raw["response"],
            rationale=raw["rationale"],
            source_doc_id=raw["source_doc_id"],
            source_span=raw.get("source_span", ""),
            scores=ScoreTriple.from_dict(scores) if scores else None,
        )


@dataclass(frozen=True)
class TrainingSample:
    id: str
    kind: str
    input: str
    target: str

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "input": self.input, "target": self.target}


# -- span selection -----------------------------------------------------------

_SENTENCE_END = re.compile(r"[.!?。！？](?=\s|$)")


def _paragraph_offsets(text: str) -> list[tuple[int, int]]:
    """(start, end) of each paragraph, excluding the blank-line separators."""
    spans = []
    pos = 0
    for block in text.split("\n\n"):
        if block.strip():
            spans.append((pos, pos + len(block)))
        pos += len(block) + 2
    return spans


def _clip_to_sentence(text: str, start: int, hard_end: int, min_chars: int) -> int:
    """Largest sentence-aligned end in (start+min_chars, hard_end], else hard_end."""
    window = text[start:hard_end]
    best = None
    for m in _SENTENCE_END.finditer(window):
        if m.end() >= min_chars:
            best = m.end()
    return start + best if best is not None else hard_end


def select_span(
    doc: Document,
    task: TaskKind,
    bounds: tuple[int, int] | None = None,
    seed: int = 0,
) -> tuple[str, tuple[int, int]]:
    """Pick a deterministic span, preferring whole paragraph runs."""
    min_chars, max_chars = bounds or default_span_bounds(doc.domain)
    text = doc.text
    if len(text) < min_chars:
        raise DocTooShort(
            f"document {doc.id!r} has {len(text)} chars, span needs {min_chars}"
        )

    paragraphs = _paragraph_offsets(text)
    runs: list[tuple[int, int]] = []
    for i in range(len(paragraphs)):
        for j in range(i, len(paragraphs)):
            length = paragraphs[j][1] - paragraphs[i][0]
            if length > max_chars:
                break
            if length >= min_chars:
                runs.append((paragraphs[i][0], paragraphs[j][1]))

    pick = stable_int(doc.id, task.value, seed)
    if runs:
        start, end = runs[pick % len(runs)]
    else:
        # no paragraph run fits; clip the longest paragraph (or the whole
        # text) at a sentence boundary instead
        big = [p for p in paragraphs if p[1] - p[0] >= min_chars]
        if big:
            start = big[pick % len(big)][0]
            hard_end = min(big[pick % len(big)][1], start + max_chars)
        else:
            start = 0
            hard_end = min(len(text), max_chars)
        end = _clip_to_sentence(text, start, hard_end, min_chars)
    span = text[start:end]
    if not min_chars <= len(span) <= max_chars:
        raise DocTooShort(
            f"document {doc.id!r} cannot supply a span within [{min_chars}, {max_chars}]"
        )
    return span, (start, end)


# -- LLM round trip ----------------------------------------------------------

_BLOCK_PATTERNS = {
    label: re.compile(rf"\[{label}\]\n(.*?)\n\[/{label}\]", re.DOTALL)
    for label in ("RATIONALE", "CONTEXT", "INSTRUCTION", "RESPONSE")
}


def parse_pair_blocks(raw: str) -> tuple[str, str, str, str]:
    """Extract (rationale, context, instruction, response); order enforced."""
    found: dict[str, tuple[int, str]] = {}
    for label, pattern in _BLOCK_PATTERNS.items():
        m = pattern.search(raw)
        if m:
            found[label] = (m.start(), m.group(1))
    for label in ("RATIONALE", "INSTRUCTION", "RESPONSE"):
        if label not in found:
            raise ParseFailure(f"missing [{label}] block", raw_output=raw)
    rat_pos = found["RATIONALE"][0]
    if rat_pos > found["INSTRUCTION"][0] or rat_pos > found["RESPONSE"][0]:
        raise ParseFailure("rationale must precede the structured output", raw_output=raw)
    context = found.get("CONTEXT", (0, ""))[1].strip()
    return (
        found["RATIONALE"][1].strip(),
        context,
        found["INSTRUCTION"][1].strip(),
        found["RESPONSE"][1],
    )


def render_exemplar_block(cases: Sequence[ExemplarCase]) -> str:
    parts = []
    for i, case in enumerate(cases, start=1):
        parts.append(
            f"### CASE {i}\n"
            f"SPAN:\n{case.span_text}\n"
            f"[RATIONALE]\n{case.rationale}\n[/RATIONALE]\n"
            f"[CONTEXT]\n{case.context or ''}\n[/CONTEXT]\n"
            f"[INSTRUCTION]\n{case.instruction}\n[/INSTRUCTION]\n"
            f"[RESPONSE]\n{case.response}\n[/RESPONSE]"
        )
    return "\n\n".join(parts)


def _check_grounding(task: TaskKind, span: str, context: str, response: str, raw: str) -> None:
    if task is TaskKind.ContentWriting and response != span:
        raise GroundingViolation(
            "content-writing response must equal the selected span", raw_output=raw
        )
    if task is TaskKind.PolishingEditing:
        if response != span:
            raise GroundingViolation(
                "polishing response must equal the selected span", raw_output=raw
            )
        if not context or context == span:
            raise GroundingViolation(
                "polishing context must be a degraded variant of the span",
                raw_output=raw,
            )
    if task in SPAN_AS_CONTEXT_TASKS:
        if context != span:
            raise GroundingViolation(
                f"{task.value} must carry the span as context", raw_output=raw
            )
        if response == span:
            raise GroundingViolation(
                f"{task.value} response must transform the span", raw_output=raw
            )
    if task not in SPAN_VERBATIM_TASKS and task not in SPAN_AS_CONTEXT_TASKS:
        if response == span:
            raise GroundingViolation(
                f"{task.value} response must be transformed from the span",
                raw_output=raw,
            )


def synthesize_pair(
    doc: Document,
    task: TaskKind,
    exemplars: Sequence[ExemplarCase],
    backend: Backend | Gateway,
    seed: int = 0,
    bounds: tuple[int, int] | None = None,
) -> InstructionPair:
    """One LLM call: five exemplars plus an unlabeled span, parsed and grounded."""
    if len(exemplars) != EXEMPLARS_PER_BUCKET:
        raise ExemplarError(
            f"need exactly {EXEMPLARS_PER_BUCKET} exemplars, got {len(exemplars)}"
        )
    for case in exemplars:
        if case.subdomain != doc.subdomain or case.task is not task:
            raise ExemplarError(
                f"exemplar bucket ({case.subdomain!r}, {case.task.value}) does not "
                f"match ({doc.subdomain!r}, {task.value})"
            )

    span, offsets = select_span(doc, task, bounds=bounds, seed=seed)
    template_id = template_for_task(task)
    rendered = prompts.render(
        template_id,
        domain=doc.domain.value,
        subdomain=doc.subdomain,
        language=doc.language,
        exemplars=render_exemplar_block(exemplars),
        span=span,
    )
    request = ChatRequest.build(
        "", rendered, seed=stable_int(doc.id, task.value, seed) % 2**31,
        template_id=template_id,
    )
    raw = complete(request, backend).content
    rationale, context, instruction, response = parse_pair_blocks(raw)
    _check_grounding(task, span, context, response, raw)

    pair_id = "pair-" + sha256_text(f"{doc.id}|{task.value}|{seed}|{offsets}")[:16]
    return InstructionPair(
        id=pair_id,
        task=task,
        domain=doc.domain,
        subdomain=doc.subdomain,
        instruction=instruction,
        context=context or None,
        response=response,
        rationale=rationale,
        source_doc_id=doc.id,
        source_span=span,
    )


@dataclass
class SynthesisReport:
    attempted: int = 0
    succeeded: int = 0
    failures: list[tuple[str, str, str]] = field(default_factory=list)  # (doc, task, reason)

    def record_failure(self, doc_id: str, task: TaskKind, exc: Exception) -> None:
        self.failures.append((doc_id, task.value, f"{type(exc).__name__}: {exc}"))


def synthesize_corpus(
    docs: Iterable[Document],
    tasks: Sequence[TaskKind],
    store: ExemplarStore,
    backend: Backend | Gateway,
    seed: int = 0,
    bounds: tuple[int, int] | None = None,
    repeats: int = 1,
) -> tuple[list[InstructionPair], SynthesisReport]:
    """Synthesize ``repeats`` pairs per (doc, task); failures are recorded.

    Each repeat re-seeds span selection, so a long document can contribute
    several distinct spans.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    pairs: list[InstructionPair] = []
    report = SynthesisReport()
    for doc in docs:
        for task in tasks:
            for repeat in range(repeats):
                report.attempted += 1
                try:
                    bucket = store.bucket(doc.subdomain, task)
                    pairs.append(
                        synthesize_pair(doc, task, bucket, backend,
                                        seed=seed + repeat, bounds=bounds)
                    )
                    report.succeeded += 1
                except (ExemplarError, DocTooShort, ParseFailure,
                        GroundingViolation) as exc:
                    report.record_failure(doc.id, task, exc)
    return pairs, report


def emit_annotation_samples(pairs: Sequence[InstructionPair]) -> list[TrainingSample]:
    """Invert pairs into data that teaches the annotation skill itself."""
    samples = []
    for pair in pairs:
        if not pair.source_span or not pair.rationale:
            raise ValueError(f"pair {pair.id!r} lacks a source span or rationale")
        target = (
            f"[RATIONALE]\n{pair.rationale}\n[/RATIONALE]\n"
            f"[INSTRUCTION]\n{pair.instruction}\n[/INSTRUCTION]\n"
            f"[RESPONSE]\n{pair.response}\n[/RESPONSE]"
        )
        samples.append(
            TrainingSample(
                id=f"annot-{pair.id}",
                kind="instruction_annotation",
                input=f"[TASK: {pair.task.value}]\n{pair.source_span}",
                target=target,
            )
        )
    return samples
