"""Corpus ingestion: normalize, rule-filter, dedup, quality-score, ratio-mix.

Documents flow through this module in input order; every operation is
deterministic so a fixed (input, seed) pair always yields the same manifest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import random
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .errors import EmptyAfterNormalize, InsufficientStratum, ScorerFailure
from .taxonomy import LANGUAGES, DomainKind, fiction_stratum

_BLANK_RUN = re.compile(r"\n{3,}")
_HAN = re.compile(r"[㐀-䶿一-鿿豈-﫿]")
_TOKEN = re.compile(r"[㐀-䶿一-鿿豈-﫿]|[a-zA-Z0-9]+")


@dataclass
class Popularity:
    ratings: float = 0.0
    reads: int = 0
    upvotes: int = 0
    comments: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "ratings": self.ratings,
            "reads": self.reads,
            "upvotes": self.upvotes,
            "comments": self.comments,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Popularity":
        return cls(
            ratings=float(data.get("ratings", 0.0)),
            reads=int(data.get("reads", 0)),
            upvotes=int(data.get("upvotes", 0)),
            comments=int(data.get("comments", 0)),
        )


@dataclass
class Document:
    """One raw corpus item plus its routing metadata."""

    id: str
    text: str
    language: str
    domain: DomainKind
    subdomain: str
    source: str = ""
    popularity: Popularity | None = None
    quality_score: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "language": self.language,
            "domain": self.domain.value,
            "subdomain": self.subdomain,
            "source": self.source,
            "popularity": self.popularity.to_dict() if self.popularity else None,
            "quality_score": self.quality_score,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Document":
        language = data["language"]
        if language not in LANGUAGES:
            raise ValueError(f"document {data.get('id')!r}: unknown language {language!r}")
        pop = data.get("popularity")
        return cls(
            id=str(data["id"]),
            text=data["text"],
            language=language,
            domain=DomainKind(data["domain"]),
            subdomain=data["subdomain"],
            source=data.get("source", ""),
            popularity=Popularity.from_dict(pop) if pop else None,
            quality_score=data.get("quality_score"),
        )


@dataclass(frozen=True)
class MixSpec:
    """Target corpus composition, expressed as fiction:nonfiction and zh:en ratios."""

    fiction_to_nonfiction: float = 1.0
    zh_to_en: float = 4.0
    tolerance: float = 0.02

    def __post_init__(self) -> None:
        if self.fiction_to_nonfiction <= 0 or self.zh_to_en <= 0:
            raise ValueError("mix ratios must be strictly positive")
        if not (0 < self.tolerance <= 0.5):
            raise ValueError("tolerance must be in (0, 0.5]")

    @property
    def fiction_fraction(self) -> float:
        r = self.fiction_to_nonfiction
        return r / (1.0 + r)

    @property
    def zh_fraction(self) -> float:
        r = self.zh_to_en
        return r / (1.0 + r)


@dataclass
class FilterReport:
    input_count: int = 0
    kept_count: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (doc id, rule name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "rejected": [{"id": d, "rule": r} for d, r in self.rejected],
        }


@dataclass(frozen=True)
class RuleSet:
    """Thresholds for the rule-based filter. Rules run in declaration order."""

    min_chars: int = 80
    max_chars: int = 200_000
    symbol_ratio_max: float = 0.3
    check_language: bool = True
    drop_exact_duplicates: bool = True


def normalize_text(text: str) -> str:
    # Strip C0/C1 controls except newline and tab, *then* NFC so that a
    # removed control char cannot re-expose a composition the second pass
    # would pick up (keeps the function idempotent).
    text = "".join(ch for ch in text if ch in "\n\t" or unicodedata.category(ch) != "Cc")
    text = unicodedata.normalize("NFC", text)
    return _BLANK_RUN.sub("\n\n", text)


def normalize(doc: Document) -> Document:
    """Return a copy of ``doc`` with cleaned text.

    Raises EmptyAfterNormalize when nothing printable survives.
    """
    cleaned = normalize_text(doc.text)
    if not cleaned.strip():
        raise EmptyAfterNormalize(doc.id)
    return Document(
        id=doc.id,
        text=cleaned,
        language=doc.language,
        domain=doc.domain,
        subdomain=doc.subdomain,
        source=doc.source,
        popularity=doc.popularity,
        quality_score=doc.quality_score,
    )


def symbol_ratio(text: str) -> float:
    """Fraction of characters that are neither alphanumeric nor whitespace."""
    if not text:
        return 0.0
    symbols = sum(1 for ch in text if not (ch.isalnum() or ch.isspace()))
    return symbols / len(text)


def han_fraction(text: str) -> float:
    stripped = [ch for ch in text if not ch.isspace()]
    if not stripped:
        return 0.0
    return sum(1 for ch in stripped if _HAN.match(ch)) / len(stripped)


def _language_consistent(doc: Document) -> bool:
    frac = han_fraction(doc.text)
    if doc.language == "en":
        return frac <= 0.5
    return frac >= 0.10  # zh text should be majority-adjacent CJK


def rule_filter(
    docs: Sequence[Document], rules: RuleSet
) -> tuple[list[Document], FilterReport]:
    """Apply the rule battery; each rejection names the first failing rule."""
    report = FilterReport(input_count=len(docs))
    kept: list[Document] = []
    seen_hashes: set[str] = set()

    for doc in docs:
        rule = _first_failing_rule(doc, rules, seen_hashes)
        if rule is None:
            if rules.drop_exact_duplicates:
                seen_hashes.add(hashlib.sha256(doc.text.encode("utf-8")).hexdigest())
            kept.append(doc)
        else:
            report.rejected.append((doc.id, rule))

    report.kept_count = len(kept)
    return kept, report


def _first_failing_rule(doc: Document, rules: RuleSet, seen: set[str]) -> str | None:
    n = len(doc.text)
    if n < rules.min_chars:
        return "min_len"
    if n > rules.max_chars:
        return "max_len"
    if symbol_ratio(doc.text) > rules.symbol_ratio_max:
        return "symbol_ratio"
    if rules.check_language and not _language_consistent(doc):
        return "language_mismatch"
    if rules.drop_exact_duplicates:
        digest = hashlib.sha256(doc.text.encode("utf-8")).hexdigest()
        if digest in seen:
            return "exact_duplicate"
    return None


def shingle_set(text: str, size: int) -> frozenset[str]:
    """Character shingles; texts shorter than ``size`` collapse to one shingle."""
    if len(text) < size:
        return frozenset({text})
    return frozenset(text[i : i + size] for i in range(len(text) - size + 1))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / (len(a) + len(b) - inter)


def near_dedup(
    docs: Sequence[Document],
    shingle_size: int = 13,
    jaccard_threshold: float = 0.8,
) -> list[Document]:
    """Greedy near-duplicate removal; the earlier document always wins.

    Every retained pair has character-shingle Jaccard similarity below the
    threshold. The scan is quadratic on purpose: at desk scale it is exact,
    and tests hold it to a brute-force oracle.
    """
    if shingle_size < 2:
        raise ValueError("shingle_size must be >= 2")
    if not (0 < jaccard_threshold <= 1):
        raise ValueError("jaccard_threshold must be in (0, 1]")

    kept: list[Document] = []
    kept_shingles: list[frozenset[str]] = []
    for doc in docs:
        sh = shingle_set(doc.text, shingle_size)
        if all(jaccard(sh, prev) < jaccard_threshold for prev in kept_shingles):
            kept.append(doc)
            kept_shingles.append(sh)
    return kept


QualityScorer = Callable[[str], float]


def heuristic_quality(text: str) -> float:
    """Training-free quality proxy: length, type-token ratio, symbol load.

    Each component is in [0, 1]; the score is their mean.
    """
    length_score = min(1.0, len(text) / 800.0)
    tokens = _TOKEN.findall(text.lower())
    ttr = len(set(tokens)) / len(tokens) if tokens else 0.0
    symbol_score = 1.0 - min(1.0, symbol_ratio(text) / 0.4)
    return (length_score + ttr + symbol_score) / 3.0


def ml_quality_score(
    docs: Sequence[Document],
    scorer: QualityScorer = heuristic_quality,
    floor: float = 0.0,
) -> list[Document]:
    """Populate ``quality_score`` on every doc and drop those below ``floor``."""
    out: list[Document] = []
    for doc in docs:
        try:
            score = float(scorer(doc.text))
        except Exception as exc:  # surface the offending doc id
            raise ScorerFailure(doc.id, exc) from exc
        if not 0.0 <= score <= 1.0:  # also catches NaN
            raise ScorerFailure(doc.id, ValueError(f"score {score} outside [0, 1]"))
        doc = dataclasses.replace(doc, quality_score=score)
        if score >= floor:
            out.append(doc)
    return out


def _clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, value))


def _marginal_target(
    ideal_fraction: float,
    total: int,
    tolerance: float,
    available: int,
    complement_available: int,
    name: str,
    complement_name: str,
) -> int:
    """Pick an integer marginal count meeting fraction +- tolerance and stock."""
    base_lo = max(0, math.ceil((ideal_fraction - tolerance) * total - 1e-9))
    base_hi = min(total, math.floor((ideal_fraction + tolerance) * total + 1e-9))
    if base_lo > base_hi:
        raise ValueError(
            f"target_count {total} cannot realize the {name} ratio within tolerance"
        )
    lo = max(base_lo, total - complement_available)
    hi = min(base_hi, available)
    if lo > hi:
        if available < base_lo:
            raise InsufficientStratum(name, needed=base_lo, available=available)
        raise InsufficientStratum(
            complement_name, needed=total - base_hi, available=complement_available
        )
    return _clamp(round(ideal_fraction * total), lo, hi)


def mix(
    docs: Sequence[Document],
    spec: MixSpec,
    target_count: int,
    seed: int,
) -> list[Document]:
    """Seeded stratified sample hitting the fiction and language ratios.

    Raises InsufficientStratum naming the starving stratum (marginal name
    like "en", or a joint cell like "fiction/zh") when the corpus cannot
    support the target within tolerance.
    """
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    if target_count == 0:
        return []

    cells: dict[tuple[str, str], list[Document]] = {}
    for doc in docs:
        key = (fiction_stratum(doc.domain), doc.language)
        cells.setdefault(key, []).append(doc)

    def avail(stratum: str, lang: str) -> int:
        return len(cells.get((stratum, lang), []))

    n = target_count
    fiction_avail = avail("fiction", "zh") + avail("fiction", "en")
    nonfiction_avail = avail("nonfiction", "zh") + avail("nonfiction", "en")
    zh_avail = avail("fiction", "zh") + avail("nonfiction", "zh")
    en_avail = avail("fiction", "en") + avail("nonfiction", "en")

    f_target = _marginal_target(
        spec.fiction_fraction, n, spec.tolerance,
        fiction_avail, nonfiction_avail, "fiction", "nonfiction",
    )
    z_target = _marginal_target(
        spec.zh_fraction, n, spec.tolerance,
        zh_avail, en_avail, "zh", "en",
    )

    # One free parameter remains: the fiction-and-zh joint cell.
    lo = max(0, f_target + z_target - n,
             f_target - avail("fiction", "en"),
             z_target - avail("nonfiction", "zh"))
    hi = min(f_target, z_target, avail("fiction", "zh"),
             avail("nonfiction", "en") + f_target + z_target - n)
    if lo > hi:
        ideal = _clamp(round(f_target * z_target / n),
                       max(0, f_target + z_target - n), min(f_target, z_target))
        requirement = {
            ("fiction", "zh"): ideal,
            ("fiction", "en"): f_target - ideal,
            ("nonfiction", "zh"): z_target - ideal,
            ("nonfiction", "en"): n - f_target - z_target + ideal,
        }
        short = max(requirement, key=lambda k: requirement[k] - avail(*k))
        raise InsufficientStratum(
            "/".join(short), needed=requirement[short], available=avail(*short)
        )
    fz = _clamp(round(f_target * z_target / n), lo, hi)

    counts = {
        ("fiction", "zh"): fz,
        ("fiction", "en"): f_target - fz,
        ("nonfiction", "zh"): z_target - fz,
        ("nonfiction", "en"): n - f_target - z_target + fz,
    }

    rng = random.Random(seed)
    picked: list[Document] = []
    for key in sorted(counts):
        want = counts[key]
        pool = cells.get(key, [])
        if want > len(pool):
            raise InsufficientStratum("/".join(key), needed=want, available=len(pool))
        picked.extend(rng.sample(pool, want))
    rng.shuffle(picked)
    return picked
