"""Judge-based scoring of instruction pairs and per-bucket top-k selection."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Iterable, Sequence

from . import prompts
from .backtranslate import InstructionPair
from .errors import ParseFailure
from .gateway import Backend, ChatRequest, Gateway, complete
from .jsonl import stable_int

SCORE_MIN = 1.0
SCORE_MAX = 10.0


@dataclass(frozen=True)
class ScoreTriple:
    quality: float
    diversity: float
    relevance: float

    def __post_init__(self) -> None:
        for name in ("quality", "diversity", "relevance"):
            value = getattr(self, name)
            if not SCORE_MIN <= value <= SCORE_MAX:
                raise ValueError(f"{name} score {value} outside [1, 10]")

    @property
    def total(self) -> float:
        return (self.quality + self.diversity + self.relevance) / 3.0

    def to_dict(self) -> dict:
        return {
            "quality": self.quality,
            "diversity": self.diversity,
            "relevance": self.relevance,
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScoreTriple":
        # total is derived, never trusted from disk
        return cls(raw["quality"], raw["diversity"], raw["relevance"])


@dataclass(frozen=True)
class SelectionSpec:
    """Per-bucket quota: an int is a count, a float in (0, 1] is a fraction."""

    per_bucket_quota: int | float
    tie_break: str = "by_total_then_id"

    def __post_init__(self) -> None:
        q = self.per_bucket_quota
        if isinstance(q, bool) or q <= 0:
            raise ValueError(f"quota must be positive, got {q!r}")
        if isinstance(q, float) and q > 1.0:
            raise ValueError(f"fractional quota must be <= 1.0, got {q!r}")
        if self.tie_break not in ("by_id", "by_total_then_id"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")

    def resolve(self, bucket_size: int) -> int:
        q = self.per_bucket_quota
        if isinstance(q, float):
            return math.floor(q * bucket_size + 1e-9)
        return min(q, bucket_size)


_SCORE_LINE = {
    name: re.compile(rf"^\s*{name}\s*[:=]\s*(-?[0-9]+(?:\.[0-9]+)?)\s*$",
                     re.IGNORECASE | re.MULTILINE)
    for name in ("quality", "diversity", "relevance")
}


def _clamp(value: float) -> float:
    return min(SCORE_MAX, max(SCORE_MIN, value))


def score_pair(pair: InstructionPair, backend: Backend | Gateway) -> ScoreTriple:
    """One judge call; three labeled numbers parsed and clamped to [1, 10]."""
    rendered = prompts.render(
        "score_pair",
        instruction=pair.instruction,
        context=pair.context or "",
        response=pair.response,
    )
    request = ChatRequest.build(
        "", rendered, seed=stable_int("score", pair.id) % 2**31, template_id="score_pair"
    )
    raw = complete(request, backend).content
    values = {}
    for name, pattern in _SCORE_LINE.items():
        m = pattern.search(raw)
        if not m:
            raise ParseFailure(f"no parsable {name!r} line in judge output", raw_output=raw)
        values[name] = _clamp(float(m.group(1)))
    return ScoreTriple(values["quality"], values["diversity"], values["relevance"])


@dataclass
class ScoringReport:
    attempted: int = 0
    scored: int = 0
    unscored: list[tuple[str, str]] = field(default_factory=list)  # (pair_id, reason)


def score_pairs(
    pairs: Iterable[InstructionPair], backend: Backend | Gateway
) -> tuple[list[InstructionPair], ScoringReport]:
    """Score every pair; ParseFailure leaves a pair unscored (and reported)."""
    report = ScoringReport()
    out: list[InstructionPair] = []
    for pair in pairs:
        report.attempted += 1
        try:
            triple = score_pair(pair, backend)
        except ParseFailure as exc:
            report.unscored.append((pair.id, str(exc)))
            continue
        out.append(replace(pair, scores=triple))
        report.scored += 1
    return out, report


def bucket_key(pair: InstructionPair) -> tuple[str, str]:
    return (pair.subdomain, pair.task.value)


def select_top(
    pairs: Sequence[InstructionPair],
    spec: SelectionSpec,
    key: Callable[[InstructionPair], Hashable] = bucket_key,
) -> list[InstructionPair]:
    """Quota-many highest-total pairs per bucket; ties broken by id.

    The default bucket is (subdomain, task); preference-pair synthesis reuses
    this with a per-subdomain key.
    """
    buckets: dict[Hashable, list[InstructionPair]] = {}
    for pair in pairs:
        if pair.scores is None:
            raise ValueError(f"pair {pair.id!r} is unscored; score before selecting")
        buckets.setdefault(key(pair), []).append(pair)

    selected: list[InstructionPair] = []
    for bucket_id in sorted(buckets, key=repr):
        bucket = buckets[bucket_id]
        bucket.sort(key=lambda p: (-p.scores.total, p.id))
        selected.extend(bucket[: spec.resolve(len(bucket))])
    return selected
