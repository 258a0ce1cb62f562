"""Task and domain vocabulary used throughout the pipeline.

Serialized enum names are part of the JSONL contract and must stay stable.
"""

from __future__ import annotations

from enum import Enum


class TaskKind(str, Enum):
    ContentWriting = "ContentWriting"
    Outlining = "Outlining"
    PolishingEditing = "PolishingEditing"
    StyleTransfer = "StyleTransfer"
    ExpandSimplify = "ExpandSimplify"
    Brainstorming = "Brainstorming"
    Reviewing = "Reviewing"
    InstructionAnnotation = "InstructionAnnotation"


class DomainKind(str, Enum):
    FictionWriting = "FictionWriting"
    CreativeNonFiction = "CreativeNonFiction"
    MarketingWriting = "MarketingWriting"
    TechnicalWriting = "TechnicalWriting"


LANGUAGES = ("zh", "en")

#: Tasks whose response must be grounded in (or equal to) the source span.
SPAN_VERBATIM_TASKS = frozenset({TaskKind.ContentWriting, TaskKind.PolishingEditing})

#: Tasks where the span is carried as the context and the response transforms it.
SPAN_AS_CONTEXT_TASKS = frozenset({TaskKind.StyleTransfer, TaskKind.ExpandSimplify})

#: Tasks whose response is freely transformed from the span.
TRANSFORMED_TASKS = frozenset(
    {TaskKind.Outlining, TaskKind.Brainstorming, TaskKind.Reviewing}
)


def fiction_stratum(domain: DomainKind) -> str:
    """Map a domain onto the fiction/nonfiction mixing stratum."""
    return "fiction" if domain is DomainKind.FictionWriting else "nonfiction"
