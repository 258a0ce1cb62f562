"""Benchmark harness: collect model outputs, judge them, ingest human
three-way comparisons, and fold comparisons into per-dimension Elo tables."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from . import prompts
from .backtranslate import TrainingSample
from .errors import ParseFailure, SelfPlay, ProsemillError
from .gateway import Backend, ChatRequest, Gateway, complete
from .jsonl import sha256_text, stable_int
from .taxonomy import DomainKind

DIMENSIONS = ("creativity", "style", "relevance", "fluency", "overall")
VERDICTS = ("A", "B", "Tie")

DEFAULT_INITIAL_RATING = 1500.0
DEFAULT_K_FACTOR = 32.0


@dataclass(frozen=True)
class BenchInstruction:
    id: str
    domain: DomainKind
    text: str
    language: str

    def __post_init__(self) -> None:
        if self.language not in ("zh", "en"):
            raise ValueError(f"language must be zh or en, got {self.language!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "domain": self.domain.value,
            "text": self.text,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchInstruction":
        return cls(
            id=raw["id"],
            domain=DomainKind(raw["domain"]),
            text=raw["text"],
            language=raw["language"],
        )


@dataclass(frozen=True)
class JudgeScore:
    style: float
    relevance: float
    creativity: float

    def __post_init__(self) -> None:
        for name in ("style", "relevance", "creativity"):
            value = getattr(self, name)
            if not 1.0 <= value <= 10.0:
                raise ValueError(f"{name} score {value} outside [1, 10]")

    @property
    def overall(self) -> float:
        return (self.style + self.relevance + self.creativity) / 3.0

    def to_dict(self) -> dict:
        return {
            "style": self.style,
            "relevance": self.relevance,
            "creativity": self.creativity,
            "overall": self.overall,
        }


@dataclass(frozen=True)
class ComparisonRecord:
    id: str
    instruction_id: str
    model_a: str
    model_b: str
    verdict: str
    dimension: str
    annotator: str
    timestamp: int

    def __post_init__(self) -> None:
        if self.model_a == self.model_b:
            raise SelfPlay(f"record {self.id!r} compares {self.model_a!r} to itself")
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if self.dimension not in DIMENSIONS:
            raise ValueError(
                f"dimension must be one of {DIMENSIONS}, got {self.dimension!r}"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instruction_id": self.instruction_id,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "verdict": self.verdict,
            "dimension": self.dimension,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ComparisonRecord":
        return cls(
            id=raw["id"],
            instruction_id=raw["instruction_id"],
            model_a=raw["model_a"],
            model_b=raw["model_b"],
            verdict=raw["verdict"],
            dimension=raw["dimension"],
            annotator=raw["annotator"],
            timestamp=int(raw["timestamp"]),
        )


# -- output collection and judging ---------------------------------------------

@dataclass
class CollectReport:
    responses: int = 0
    failures: list[tuple[str, str, str]] = field(default_factory=list)


def collect_outputs(
    instructions: Sequence[BenchInstruction],
    models: Sequence[tuple[str, Backend | Gateway]],
    seed: int = 0,
) -> tuple[list[dict], CollectReport]:
    """One response per (instruction, model); per-item failures recorded."""
    report = CollectReport()
    outputs: list[dict] = []
    for instruction in instructions:
        for model_name, backend in models:
            request = ChatRequest.build(
                "",
                prompts.render("bench_generate", instruction=instruction.text),
                seed=stable_int(instruction.id, model_name, seed) % 2**31,
                template_id="bench_generate",
            )
            try:
                response = complete(request, backend).content
            except ProsemillError as exc:
                report.failures.append((instruction.id, model_name, str(exc)))
                continue
            outputs.append(
                {
                    "instruction_id": instruction.id,
                    "model": model_name,
                    "response": response,
                }
            )
            report.responses += 1
    return outputs, report


_JUDGE_LINE = {
    name: re.compile(rf"^\s*{name}\s*[:=]\s*(-?[0-9]+(?:\.[0-9]+)?)\s*$",
                     re.IGNORECASE | re.MULTILINE)
    for name in ("style", "relevance", "creativity")
}


def judge(instruction: str, response: str, backend: Backend | Gateway) -> JudgeScore:
    """Single judge call; overall is always computed, never parsed."""
    rendered = prompts.render("bench_judge", instruction=instruction, response=response)
    request = ChatRequest.build(
        "", rendered,
        seed=stable_int("judge", instruction, response) % 2**31,
        template_id="bench_judge",
    )
    raw = complete(request, backend).content
    values = {}
    for name, pattern in _JUDGE_LINE.items():
        m = pattern.search(raw)
        if not m:
            raise ParseFailure(f"no parsable {name!r} line in judge output", raw_output=raw)
        values[name] = min(10.0, max(1.0, float(m.group(1))))
    return JudgeScore(values["style"], values["relevance"], values["creativity"])


# -- Elo -------------------------------------------------------------------------

@dataclass
class EloTable:
    initial: float = DEFAULT_INITIAL_RATING
    k_factor: float = DEFAULT_K_FACTOR
    ratings: dict[str, float] = field(default_factory=dict)
    games: dict[str, int] = field(default_factory=dict)
    processed_count: int = 0

    def rating(self, model: str) -> float:
        return self.ratings.get(model, self.initial)


def elo_expected(r_a: float, r_b: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


_SCORE_FOR_VERDICT = {"A": (1.0, 0.0), "B": (0.0, 1.0), "Tie": (0.5, 0.5)}


def elo_update(table: EloTable, rec: ComparisonRecord) -> EloTable:
    """Apply one comparison in place; both expectations computed directly."""
    if rec.model_a == rec.model_b:
        raise SelfPlay(f"record {rec.id!r} compares {rec.model_a!r} to itself")
    r_a = table.rating(rec.model_a)
    r_b = table.rating(rec.model_b)
    e_a = elo_expected(r_a, r_b)
    e_b = elo_expected(r_b, r_a)
    s_a, s_b = _SCORE_FOR_VERDICT[rec.verdict]
    table.ratings[rec.model_a] = r_a + table.k_factor * (s_a - e_a)
    table.ratings[rec.model_b] = r_b + table.k_factor * (s_b - e_b)
    table.games[rec.model_a] = table.games.get(rec.model_a, 0) + 1
    table.games[rec.model_b] = table.games.get(rec.model_b, 0) + 1
    table.processed_count += 1
    return table


def elo_rank(
    records: Sequence[ComparisonRecord],
    initial: float = DEFAULT_INITIAL_RATING,
    k_factor: float = DEFAULT_K_FACTOR,
) -> dict[str, list[dict]]:
    """Independent per-dimension tables folded in (timestamp, id) order."""
    ordered = sorted(records, key=lambda r: (r.timestamp, r.id))
    tables = {dim: EloTable(initial=initial, k_factor=k_factor) for dim in DIMENSIONS}
    for rec in ordered:
        elo_update(tables[rec.dimension], rec)
    leaderboard: dict[str, list[dict]] = {}
    for dim, table in tables.items():
        rows = [
            {"model": model, "rating": rating, "games": table.games[model]}
            for model, rating in table.ratings.items()
        ]
        rows.sort(key=lambda r: (-r["rating"], r["model"]))
        leaderboard[dim] = rows
    return leaderboard


# -- training-sample export -------------------------------------------------------

def export_eval_training_samples(
    judged: Sequence[tuple[str, str, JudgeScore]],
    comparisons: Sequence[ComparisonRecord],
    outputs_by_key: Mapping[tuple[str, str], str] | None = None,
) -> list[TrainingSample]:
    """Judged items become grading samples; comparisons become pairwise ones."""
    samples: list[TrainingSample] = []
    for instruction, response, score in judged:
        samples.append(
            TrainingSample(
                id="grade-" + sha256_text(f"{instruction}|{response}")[:16],
                kind="single_grading",
                input=f"[INSTRUCTION]\n{instruction}\n[/INSTRUCTION]\n"
                      f"[RESPONSE]\n{response}\n[/RESPONSE]",
                target=(
                    f"style: {score.style}\nrelevance: {score.relevance}\n"
                    f"creativity: {score.creativity}\noverall: {score.overall:.4f}"
                ),
            )
        )
    outputs_by_key = outputs_by_key or {}
    for rec in comparisons:
        response_a = outputs_by_key.get((rec.instruction_id, rec.model_a), "")
        response_b = outputs_by_key.get((rec.instruction_id, rec.model_b), "")
        target = {"A": "first", "B": "second", "Tie": "tie"}[rec.verdict]
        samples.append(
            TrainingSample(
                id=f"cmp-{rec.id}",
                kind="pairwise_comparison",
                input=(
                    f"[DIMENSION] {rec.dimension}\n"
                    f"[INSTRUCTION] {rec.instruction_id}\n"
                    f"[RESPONSE A]\n{response_a}\n"
                    f"[RESPONSE B]\n{response_b}"
                ),
                target=target,
            )
        )
    return samples


# -- comparison queue construction --------------------------------------------------

def make_comparisons(
    instructions: Sequence[BenchInstruction],
    outputs: Sequence[Mapping[str, Any]],
    dimensions: Sequence[str] = ("overall",),
    seed: int = 0,
) -> list[dict]:
    """Pending blind comparisons for the annotation service: all model pairs
    per instruction, one record per requested dimension."""
    for dim in dimensions:
        if dim not in DIMENSIONS:
            raise ValueError(f"unknown dimension {dim!r}")
    by_instruction: dict[str, list[Mapping[str, Any]]] = {}
    for out in outputs:
        by_instruction.setdefault(out["instruction_id"], []).append(out)
    text_by_id = {i.id: i.text for i in instructions}

    pending: list[dict] = []
    for instruction_id in sorted(by_instruction):
        rows = sorted(by_instruction[instruction_id], key=lambda r: r["model"])
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                for dim in dimensions:
                    cmp_id = "cmp-" + sha256_text(
                        f"{instruction_id}|{rows[i]['model']}|{rows[j]['model']}|{dim}|{seed}"
                    )[:16]
                    pending.append(
                        {
                            "id": cmp_id,
                            "instruction_id": instruction_id,
                            "instruction": text_by_id.get(instruction_id, ""),
                            "model_a": rows[i]["model"],
                            "model_b": rows[j]["model"],
                            "response_a": rows[i]["response"],
                            "response_b": rows[j]["response"],
                            "dimension": dim,
                        }
                    )
    return pending
