"""Principled preference pairs and a verified DPO loss kernel.

Positives are the top-rated synthesized responses; negatives are minimal
perturbations that break exactly one writing principle. The loss kernel is
pure math over caller-supplied log-probabilities, so its gradients can be
checked against finite differences to tight tolerance.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import prompts
from .backtranslate import InstructionPair
from .errors import (
    NoCandidatePrinciples,
    NonFiniteInput,
    ParseFailure,
    PerturbationRejected,
)
from .gateway import Backend, ChatRequest, Gateway, complete
from .jsonl import sha256_text, stable_int
from .taxonomy import DomainKind, TaskKind

DEFAULT_MAX_EDIT = 0.5
LENGTH_RATIO_BOUNDS = (0.5, 2.0)


# -- principles ---------------------------------------------------------------

@dataclass(frozen=True)
class Principle:
    id: str
    domain: DomainKind
    task: TaskKind
    description: str
    adhering_case: str
    violating_case: str
    rationale_adhere: str
    rationale_violate: str

    def __post_init__(self) -> None:
        for name in (
            "id", "description", "adhering_case", "violating_case",
            "rationale_adhere", "rationale_violate",
        ):
            if not str(getattr(self, name)).strip():
                raise ValueError(f"principle field {name!r} must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "domain": self.domain.value,
            "task": self.task.value,
            "description": self.description,
            "adhering_case": self.adhering_case,
            "violating_case": self.violating_case,
            "rationale_adhere": self.rationale_adhere,
            "rationale_violate": self.rationale_violate,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Principle":
        return cls(
            id=raw["id"],
            domain=DomainKind(raw["domain"]),
            task=TaskKind(raw["task"]),
            description=raw["description"],
            adhering_case=raw["adhering_case"],
            violating_case=raw["violating_case"],
            rationale_adhere=raw["rationale_adhere"],
            rationale_violate=raw["rationale_violate"],
        )


def load_principles(root: str | Path) -> list[Principle]:
    """Read principles/<domain>/<task>.json; (domain, task, description) unique."""
    root = Path(root)
    out: list[Principle] = []
    seen: set[tuple[str, str, str]] = set()
    for path in sorted(root.glob("*/*.json")):
        for raw in json.loads(path.read_text(encoding="utf-8")):
            principle = Principle.from_dict(raw)
            key = (principle.domain.value, principle.task.value, principle.description)
            if key in seen:
                raise ValueError(f"duplicate principle {key} in {path}")
            seen.add(key)
            out.append(principle)
    return out


def candidates_for(
    principles: Iterable[Principle], domain: DomainKind, task: TaskKind
) -> list[Principle]:
    return [p for p in principles if p.domain is domain and p.task is task]


# -- preference pairs ----------------------------------------------------------

@dataclass(frozen=True)
class PreferencePair:
    id: str
    instruction: str
    chosen: str
    rejected: str
    principle_id: str
    attribution_rationale: str
    perturbation_rationale: str
    context: str | None = None

    def __post_init__(self) -> None:
        if not self.instruction or not self.chosen or not self.rejected:
            raise ValueError("instruction, chosen, and rejected must be non-empty")
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instruction": self.instruction,
            "context": self.context,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "principle_id": self.principle_id,
            "attribution_rationale": self.attribution_rationale,
            "perturbation_rationale": self.perturbation_rationale,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PreferencePair":
        return cls(
            id=raw["id"],
            instruction=raw["instruction"],
            context=raw.get("context"),
            chosen=raw["chosen"],
            rejected=raw["rejected"],
            principle_id=raw["principle_id"],
            attribution_rationale=raw["attribution_rationale"],
            perturbation_rationale=raw["perturbation_rationale"],
        )


def levenshtein(a: str, b: str) -> int:
    """Edit distance via the vectorized two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    b_codes = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    positions = np.arange(len(b) + 1, dtype=np.int64)
    prev = positions.copy()
    for i, ch in enumerate(a, start=1):
        cost = (b_codes != ord(ch)).astype(np.int64)
        cur = np.concatenate(([i], np.minimum(prev[1:] + 1, prev[:-1] + cost)))
        # running-min pass folds in the insertion transitions
        prev = np.minimum.accumulate(cur - positions) + positions
    return int(prev[-1])


def normalized_edit_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def perturbation_violations(
    chosen: str, rejected: str, max_edit: float = DEFAULT_MAX_EDIT
) -> list[str]:
    """Constraint check shared by synthesis and output-file audits."""
    problems = []
    if rejected == chosen:
        problems.append("rejected equals chosen")
    else:
        dist = normalized_edit_distance(chosen, rejected)
        if dist > max_edit:
            problems.append(f"edit distance {dist:.3f} exceeds {max_edit}")
    lo, hi = LENGTH_RATIO_BOUNDS
    if chosen:
        ratio = len(rejected) / len(chosen)
        if not lo <= ratio <= hi:
            problems.append(f"length ratio {ratio:.2f} outside [{lo}, {hi}]")
    return problems


_PRINCIPLE_LINE = re.compile(r"^PRINCIPLE:\s*(\S+)\s*$", re.MULTILINE)
_RATIONALE_LINE = re.compile(r"^RATIONALE:\s*(.+)$", re.MULTILINE)
_REWRITE_BLOCK = re.compile(r"\[REWRITE\]\n(.*?)\n\[/REWRITE\]", re.DOTALL)
_PERTURB_RATIONALE = re.compile(r"\[RATIONALE\]\n(.*?)\n\[/RATIONALE\]", re.DOTALL)


def _render_candidates(candidates: Sequence[Principle]) -> str:
    parts = []
    for p in candidates:
        parts.append(
            f"id: {p.id}\n"
            f"  principle: {p.description}\n"
            f"  adhering case: {p.adhering_case}\n"
            f"  violating case: {p.violating_case}"
        )
    return "\n".join(parts)


def attribute_principle(
    pair: InstructionPair,
    candidates: Sequence[Principle],
    backend: Backend | Gateway,
) -> tuple[str, str]:
    """Ask which candidate principle best explains the pair's quality."""
    if not candidates:
        raise NoCandidatePrinciples(
            f"no principles for ({pair.domain.value}, {pair.task.value})"
        )
    rendered = prompts.render(
        "cdpo_attribute",
        instruction=pair.instruction,
        response=pair.response,
        candidates=_render_candidates(candidates),
        candidate_ids=", ".join(p.id for p in candidates),
    )
    request = ChatRequest.build(
        "", rendered, seed=stable_int("attr", pair.id) % 2**31,
        template_id="cdpo_attribute",
    )
    raw = complete(request, backend).content
    id_match = _PRINCIPLE_LINE.search(raw)
    if not id_match:
        raise ParseFailure("no PRINCIPLE line in attribution output", raw_output=raw)
    picked = id_match.group(1)
    if picked not in {p.id for p in candidates}:
        raise ParseFailure(f"attributed unknown principle {picked!r}", raw_output=raw)
    rationale_match = _RATIONALE_LINE.search(raw)
    rationale = rationale_match.group(1).strip() if rationale_match else ""
    return picked, rationale


def synthesize_negative(
    pair: InstructionPair,
    principle: Principle,
    backend: Backend | Gateway,
    max_edit: float = DEFAULT_MAX_EDIT,
    attribution_rationale: str = "",
) -> PreferencePair:
    """Minimal principle-violating rewrite; one retry, then rejection."""
    last_problems: list[str] = []
    for attempt in range(2):
        rendered = prompts.render(
            "cdpo_perturb",
            principle_description=principle.description,
            violating_case=principle.violating_case,
            instruction=pair.instruction,
            chosen=pair.response,
        )
        request = ChatRequest.build(
            "", rendered,
            seed=stable_int("perturb", pair.id, attempt) % 2**31,
            template_id="cdpo_perturb",
        )
        raw = complete(request, backend).content
        rewrite_match = _REWRITE_BLOCK.search(raw)
        if not rewrite_match:
            last_problems = ["no REWRITE block in output"]
            continue
        rejected = rewrite_match.group(1)
        problems = perturbation_violations(pair.response, rejected, max_edit)
        if problems:
            last_problems = problems
            continue
        rationale_match = _PERTURB_RATIONALE.search(raw)
        return PreferencePair(
            id="pref-" + sha256_text(f"{pair.id}|{principle.id}")[:16],
            instruction=pair.instruction,
            context=pair.context,
            chosen=pair.response,
            rejected=rejected,
            principle_id=principle.id,
            attribution_rationale=attribution_rationale,
            perturbation_rationale=(
                rationale_match.group(1).strip() if rationale_match else ""
            ),
        )
    raise PerturbationRejected(
        f"pair {pair.id!r}: perturbation failed twice ({'; '.join(last_problems)})"
    )


@dataclass
class PreferenceReport:
    positives: int = 0
    pairs: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (pair_id, reason)


def build_preference_pairs(
    positives: Sequence[InstructionPair],
    principles: Sequence[Principle],
    backend: Backend | Gateway,
    max_edit: float = DEFAULT_MAX_EDIT,
    negatives_per_positive: int = 1,
) -> tuple[list[PreferencePair], PreferenceReport]:
    """One attributed principle and n negatives per positive; failures skip."""
    report = PreferenceReport(positives=len(positives))
    out: list[PreferencePair] = []
    for pair in positives:
        candidates = candidates_for(principles, pair.domain, pair.task)
        try:
            principle_id, rationale = attribute_principle(pair, candidates, backend)
            principle = next(p for p in candidates if p.id == principle_id)
            for _ in range(negatives_per_positive):
                out.append(
                    synthesize_negative(
                        pair, principle, backend,
                        max_edit=max_edit, attribution_rationale=rationale,
                    )
                )
        except (NoCandidatePrinciples, ParseFailure, PerturbationRejected) as exc:
            report.skipped.append((pair.id, f"{type(exc).__name__}: {exc}"))
            continue
    report.pairs = len(out)
    return out, report


# -- DPO loss kernel -----------------------------------------------------------

@dataclass(frozen=True)
class DpoBatch:
    """Per-item log-probabilities (nats) under the policy and the reference."""

    policy_chosen: np.ndarray
    policy_rejected: np.ndarray
    ref_chosen: np.ndarray
    ref_rejected: np.ndarray
    beta: float = 0.1

    def __post_init__(self) -> None:
        arrays = [np.asarray(a, dtype=np.float64) for a in (
            self.policy_chosen, self.policy_rejected, self.ref_chosen, self.ref_rejected
        )]
        for name, arr in zip(
            ("policy_chosen", "policy_rejected", "ref_chosen", "ref_rejected"), arrays
        ):
            object.__setattr__(self, name, arr)
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"{name} must be a non-empty 1-d array")
            if arr.size != arrays[0].size:
                raise ValueError("all four log-prob arrays must be the same length")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInput(f"{name} contains NaN or infinity")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")

    @classmethod
    def from_dict(cls, raw: dict) -> "DpoBatch":
        try:
            items = raw["items"]
            return cls(
                policy_chosen=np.array([i["policy_logp_chosen"] for i in items]),
                policy_rejected=np.array([i["policy_logp_rejected"] for i in items]),
                ref_chosen=np.array([i["ref_logp_chosen"] for i in items]),
                ref_rejected=np.array([i["ref_logp_rejected"] for i in items]),
                beta=float(raw.get("beta", 0.1)),
            )
        except KeyError as exc:
            raise ValueError(f"batch dict is missing key {exc.args[0]!r}") from exc


def _softplus(x: np.ndarray) -> np.ndarray:
    # max(x, 0) + log1p(exp(-|x|)) is exact and overflow-free at any scale
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def dpo_loss(batch: DpoBatch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean −log σ(β·margin) and its exact gradients w.r.t. the four inputs.

    margin = (policy_chosen − ref_chosen) − (policy_rejected − ref_rejected).
    """
    margin = (batch.policy_chosen - batch.ref_chosen) - (
        batch.policy_rejected - batch.ref_rejected
    )
    z = batch.beta * margin
    loss = float(np.mean(_softplus(-z)))

    # d/dz softplus(−z) = −σ(−z); evaluate the sigmoid stably on both tails
    t = np.exp(-np.abs(z))
    sig_neg_z = np.where(z >= 0, t / (1.0 + t), 1.0 / (1.0 + t))
    scale = batch.beta * sig_neg_z / margin.size
    grads = {
        "policy_chosen": -scale,
        "policy_rejected": scale,
        "ref_chosen": scale,
        "ref_rejected": -scale,
    }
    return loss, grads
