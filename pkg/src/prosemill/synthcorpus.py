"""Deterministic synthetic fixtures: corpora, exemplars, principles, themes.

Everything here is seeded fabrication for demos and offline runs. The text is
plain filler that exercises the real code paths (language detection, span
selection, grounding, mixing) without shipping anyone's actual writing.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Iterable, Sequence

from .backtranslate import ExemplarCase, ExemplarStore
from .bench import BenchInstruction
from .ingest import Document, Popularity
from .jsonl import sha256_text, write_jsonl
from .mocksim import degrade
from .preference import Principle
from .taxonomy import DomainKind, TaskKind

#: (subdomain, domain) pairs the demo corpus draws from.
DEMO_SUBDOMAINS = (
    ("short_story", DomainKind.FictionWriting),
    ("memoir", DomainKind.CreativeNonFiction),
    ("product_copy", DomainKind.MarketingWriting),
    ("howto_guide", DomainKind.TechnicalWriting),
)

_EN_WORDS = (
    "river harbor lantern walked quiet morning letters pressed beneath stone "
    "garden window evening voices travel market copper remembered distant "
    "season promise carried threshold amber village signal narrow ledger "
    "orchard practice weather standing paper mountain certain follow silver "
    "whisper borrowed crossing candle archive station furrow bright autumn "
    "return gather measure steady harvest corner patient salt hollow north"
).split()

_ZH_CHARS = (
    "河灯笼走安静早晨信件压在石下花园窗夜声旅行市场铜记得远季节承诺携门槛琥珀村信号"
    "窄账册果园练习天气站纸山某跟随银低语借渡烛档案车站沟明秋回聚量稳收角耐盐空北"
    "春夏冬雨雪风云桥船茶书笔墨画诗歌城楼巷口老树新芽旧友重逢晚钟山路长歌换盏故人"
)


def _en_sentence(rng: random.Random) -> str:
    words = [rng.choice(_EN_WORDS) for _ in range(rng.randint(8, 14))]
    return words[0].capitalize() + " " + " ".join(words[1:]) + "."


def _zh_sentence(rng: random.Random) -> str:
    return "".join(rng.choice(_ZH_CHARS) for _ in range(rng.randint(10, 22))) + "。"


def _paragraph(rng: random.Random, language: str) -> str:
    make = _zh_sentence if language == "zh" else _en_sentence
    return " ".join(make(rng) for _ in range(rng.randint(3, 6))) if language == "en" \
        else "".join(make(rng) for _ in range(rng.randint(3, 6)))


def synth_text(rng: random.Random, language: str, min_chars: int, max_chars: int) -> str:
    paragraphs = [_paragraph(rng, language)]
    while len("\n\n".join(paragraphs)) < min_chars:
        paragraphs.append(_paragraph(rng, language))
    # max_chars is advisory: generation stops at the first paragraph past the
    # minimum, so docs land near min_chars and stay well under the cap
    return "\n\n".join(paragraphs)


def _popularity(rng: random.Random) -> Popularity:
    return Popularity(
        ratings=round(rng.uniform(3.5, 5.0), 2),
        reads=rng.randint(500, 200_000),
        upvotes=rng.randint(10, 5_000),
        comments=rng.randint(0, 800),
    )


def make_corpus(n: int, seed: int = 0) -> list[Document]:
    """Cells sized 40/10/40/10 (fiction-zh/fiction-en/nonfiction-zh/-en) so
    1:1 fiction and 4:1 zh:en targets are feasible with slack."""
    rng = random.Random(seed)
    docs: list[Document] = []
    cells = (
        ("fiction", "zh", 0.40),
        ("fiction", "en", 0.10),
        ("nonfiction", "zh", 0.40),
        ("nonfiction", "en", 0.10),
    )
    nonfiction_pool = [s for s in DEMO_SUBDOMAINS if s[1] is not DomainKind.FictionWriting]
    index = 0
    for stratum, language, share in cells:
        for _ in range(round(n * share)):
            if stratum == "fiction":
                subdomain, domain = DEMO_SUBDOMAINS[0]
                lo, hi = 700, 2600
            else:
                subdomain, domain = nonfiction_pool[index % len(nonfiction_pool)]
                lo, hi = 380, 1600
            docs.append(
                Document(
                    id=f"doc-{index:05d}",
                    text=synth_text(rng, language, lo, hi),
                    language=language,
                    domain=domain,
                    subdomain=subdomain,
                    source="synthetic",
                    popularity=_popularity(rng),
                )
            )
            index += 1
    return docs


def make_bench_instructions(n: int, seed: int = 0) -> list[BenchInstruction]:
    rng = random.Random(seed)
    domains = list(DomainKind)
    asks = (
        "Write a short piece about {}.",
        "Draft an opening paragraph on {}.",
        "Compose a reflective note about {}.",
        "Describe {} for a general reader.",
    )
    out = []
    for i in range(n):
        topic = " ".join(rng.choice(_EN_WORDS) for _ in range(3))
        out.append(
            BenchInstruction(
                id=f"bench-{i:04d}",
                domain=domains[i % len(domains)],
                text=rng.choice(asks).format(topic),
                language="en" if i % 5 else "zh",
            )
        )
    return out


# -- exemplars -------------------------------------------------------------------

def _exemplar_fields(task: TaskKind, span: str, topic: str) -> dict:
    reworked = degrade(span, sha256_text("exemplar" + span))
    if task is TaskKind.ContentWriting:
        return {
            "context": None,
            "instruction": f"Write a passage about {topic}.",
            "response": span,
            "rationale": "The span already is the finished piece, so the "
                         "instruction asks for exactly it.",
        }
    if task is TaskKind.PolishingEditing:
        return {
            "context": reworked,
            "instruction": "Polish this draft without changing what it says.",
            "response": span,
            "rationale": "The draft is a weakened variant; the span is the "
                         "polished target.",
        }
    if task is TaskKind.StyleTransfer:
        return {
            "context": span,
            "instruction": "Rewrite this in a plainer, more direct register.",
            "response": f"Plainly put: {reworked}",
            "rationale": "The span rides as context and the response restyles it.",
        }
    if task is TaskKind.ExpandSimplify:
        return {
            "context": span,
            "instruction": "Simplify this passage for a hurried reader.",
            "response": f"In short: {span.split('.')[0][:120]}.",
            "rationale": "The span rides as context and the response compresses it.",
        }
    if task is TaskKind.Outlining:
        return {
            "context": None,
            "instruction": f"Outline a piece about {topic}.",
            "response": "Outline:\n1. opening image\n2. complication\n3. turn\n4. close",
            "rationale": "The outline is what a writer would have drafted first.",
        }
    if task is TaskKind.Brainstorming:
        return {
            "context": None,
            "instruction": f"List ideas for writing about {topic}.",
            "response": "- a first encounter\n- a misplaced letter\n- a return "
                        "after years away",
            "rationale": "The span's subject seeds a set of distinct ideas.",
        }
    if task is TaskKind.Reviewing:
        return {
            "context": None,
            "instruction": "Review this passage and point out strengths and flaws.",
            "response": "Strong opening image; the middle repeats itself and the "
                        "ending arrives abruptly.",
            "rationale": "The span is the object under review.",
        }
    return {
        "context": None,
        "instruction": "Explain how to derive a training pair from this text.",
        "response": "Step 1: identify the topic. Step 2: write the instruction "
                    "that fits. Step 3: keep the text as the response.",
        "rationale": "The span demonstrates the annotation process itself.",
    }


def make_exemplars(seed: int = 0) -> ExemplarStore:
    """Five cases per (demo subdomain, task) bucket."""
    rng = random.Random(seed)
    store = ExemplarStore()
    for subdomain, domain in DEMO_SUBDOMAINS:
        for task in TaskKind:
            for _ in range(5):
                paragraphs = [_paragraph(rng, "en") for _ in range(3)]
                excerpt = "\n\n".join(paragraphs)
                start = len(paragraphs[0]) + 2
                end = start + len(paragraphs[1])
                span = excerpt[start:end]
                topic = " ".join(span.split()[:4]).rstrip(".").lower()
                store.add(
                    ExemplarCase(
                        task=task,
                        domain=domain,
                        subdomain=subdomain,
                        source_excerpt=excerpt,
                        selected_span=(start, end),
                        **_exemplar_fields(task, span, topic),
                    )
                )
    return store


# -- principles -------------------------------------------------------------------

def _principle(
    domain: DomainKind, task: TaskKind, n: int, description: str,
    adhere: str, violate: str, why_adhere: str, why_violate: str,
) -> Principle:
    return Principle(
        id=f"P-{domain.value[:4].upper()}-{task.value[:4].upper()}-{n:02d}",
        domain=domain,
        task=task,
        description=description,
        adhering_case=adhere,
        violating_case=violate,
        rationale_adhere=why_adhere,
        rationale_violate=why_violate,
    )


def make_principles() -> list[Principle]:
    F, C, M, T = (DomainKind.FictionWriting, DomainKind.CreativeNonFiction,
                  DomainKind.MarketingWriting, DomainKind.TechnicalWriting)
    CW, OU, PE, ST, ES, BS = (TaskKind.ContentWriting, TaskKind.Outlining,
                              TaskKind.PolishingEditing, TaskKind.StyleTransfer,
                              TaskKind.ExpandSimplify, TaskKind.Brainstorming)
    return [
        _principle(
            F, CW, 1,
            "A story keeps one narrative perspective unless a shift is clearly "
            "signaled and serves the telling.",
            "She watched the harbor lights and wondered what he was hiding.",
            "She watched the harbor lights. I never liked harbors, he thought, "
            "and suddenly you could feel the cold too.",
            "The viewpoint stays with one character throughout.",
            "The passage hops between her view, his inner voice, and a second "
            "person without any signal.",
        ),
        _principle(
            F, CW, 2,
            "Concrete sensory detail carries a scene; abstractions alone leave "
            "it inert.",
            "The kettle ticked as it cooled, and the kitchen smelled of scorched "
            "sugar.",
            "The kitchen had an atmosphere that was very evocative and "
            "meaningful in many ways.",
            "Specific sounds and smells let the reader stand in the room.",
            "Vague adjectives assert a mood instead of creating one.",
        ),
        _principle(
            F, OU, 1,
            "An outline must be specific enough to draft from; a skeleton of "
            "generalities gives the writer nothing to build on.",
            "1. Mara finds the unsent letter. 2. She confronts her brother at "
            "the ferry. 3. The storm delays the crossing and forces the truth.",
            "1. Beginning. 2. Middle where things happen. 3. Dramatic ending.",
            "Each beat names who acts and what changes.",
            "The points are so generic they fit any story and guide none.",
        ),
        _principle(
            F, PE, 1,
            "Polishing fiction preserves the author's voice; edits smooth the "
            "prose without flattening its character.",
            "Tightened: 'The road bent north, and with it bent her resolve.'",
            "Rewritten flat: 'The road turned north. She felt less sure.'",
            "The edit keeps the original's cadence and figure.",
            "The edit strips the voice and substitutes generic statements.",
        ),
        _principle(
            F, ST, 1,
            "A style transfer changes register while keeping events, names, and "
            "facts of the story intact.",
            "Formal retelling that still has Mara miss the ferry on Tuesday.",
            "Casual retelling where the ferry becomes a train and Tuesday "
            "becomes winter.",
            "Only tone moved; the story's facts survived.",
            "The restyling silently rewrote the events themselves.",
        ),
        _principle(
            F, BS, 1,
            "Story brainstorming offers genuinely distinct premises, not one "
            "idea rephrased several ways.",
            "- a lighthouse keeper who hoards letters; - twins swapping lives "
            "for a season; - a town that forgets one day each year.",
            "- a keeper with letters; - a keeper with postcards; - a keeper "
            "with telegrams.",
            "Each option opens a different story.",
            "The list repeats a single premise with the noun swapped.",
        ),
        _principle(
            C, CW, 1,
            "Where the form allows, essays and letters should draw the reader "
            "in directly, inviting them to respond or reflect.",
            "Have you kept a letter too long to send? This one waited nine "
            "years.",
            "Letters are sometimes kept for long periods before sending.",
            "The direct question makes the reader a participant.",
            "The detached statement keeps the reader outside the piece.",
        ),
        _principle(
            C, PE, 1,
            "A revision must stay aligned with the original's intent and "
            "content; polish the expression, not the meaning.",
            "Edited memoir line that still credits her grandmother's advice.",
            "Edited line that now credits a teacher the original never "
            "mentioned.",
            "The facts and intent of the original survive the revision.",
            "The revision invents content the author never wrote.",
        ),
        _principle(
            C, BS, 1,
            "Brainstorming presents options evenly; it does not pre-judge or "
            "rank ideas before the writer weighs them.",
            "- childhood kitchens; - the last phone box in town; - learning to "
            "swim at forty.",
            "- childhood kitchens (weak); - phone box (too sentimental); - "
            "swimming at forty (the only good one).",
            "Options arrive without verdicts attached.",
            "Editorial judgments foreclose the writer's own choice.",
        ),
        _principle(
            C, OU, 1,
            "A nonfiction outline orders material so each section earns the "
            "next; sequence is an argument, not a list.",
            "1. the inherited desk; 2. what its drawers held; 3. why the "
            "letters were never sent; 4. sending one now.",
            "1. letters; 2. the desk; 3. sending; 4. drawers, in no order.",
            "Each section sets up the one that follows.",
            "Shuffled topics leave the reader assembling the logic alone.",
        ),
        _principle(
            C, ST, 1,
            "Restyling personal writing keeps first-person truthfulness; the "
            "new register must not fictionalize the account.",
            "The same memory told more formally, events unchanged.",
            "The memory retold with invented dialogue presented as remembered.",
            "Register shifted; the account stayed honest.",
            "The transfer smuggled fiction into a factual account.",
        ),
        _principle(
            M, CW, 1,
            "Marketing copy must describe the product accurately; persuasion "
            "never licenses false or unverifiable claims.",
            "The kettle boils a liter in under three minutes, and we back it "
            "for two years.",
            "The fastest kettle ever made, loved by every household in the "
            "country.",
            "Every claim is concrete and checkable.",
            "Superlatives and universal claims cannot be substantiated.",
        ),
        _principle(
            M, ES, 1,
            "A summary of source material covers all its key points; it must "
            "not quietly drop whole aspects of the original.",
            "Summary noting the price change, the new sizes, and the recall.",
            "Summary mentioning only the price change.",
            "Every load-bearing fact from the source survives.",
            "Two of three key points vanished without a trace.",
        ),
        _principle(
            M, OU, 1,
            "A campaign outline states the audience and the single message "
            "each piece carries; structure follows the message.",
            "1. commuters: time saved; 2. parents: safety record; 3. students: "
            "price.",
            "1. make some posts; 2. maybe a video; 3. other content.",
            "Each beat pairs an audience with one message.",
            "The outline lists formats with no audience or message at all.",
        ),
        _principle(
            M, PE, 1,
            "Editing copy tightens it around the call to action; polish must "
            "not bury what the reader should do next.",
            "Trimmed paragraph ending: 'Order by Friday for the launch price.'",
            "Polished paragraph where the ordering deadline no longer appears.",
            "The edit sharpened the action the copy exists to drive.",
            "The edit polished sentences but lost the call to action.",
        ),
        _principle(
            M, ST, 1,
            "Restyled copy keeps brand facts exact: names, numbers, and offers "
            "survive any change of tone.",
            "Playful rewrite that still says 'two-year warranty'.",
            "Playful rewrite that inflates the warranty to 'a lifetime'.",
            "Tone moved; the offer did not.",
            "The restyling altered a binding commercial fact.",
        ),
        _principle(
            M, BS, 1,
            "Campaign brainstorming stays inside what the product can deliver; "
            "ideas that oversell are liabilities, not options.",
            "- a demo at the street market; - a trade-in week; - a repair "
            "clinic.",
            "- promise it replaces a full kitchen; - claim chefs refuse to "
            "cook without it.",
            "Each idea is executable and honest.",
            "The ideas depend on claims the product cannot keep.",
        ),
        _principle(
            T, CW, 1,
            "Technical writing avoids stereotypes of gender, profession, or "
            "region in its examples and phrasing.",
            "When the engineer saves the file, they see a confirmation dialog.",
            "When the engineer saves his file, even a secretary could follow "
            "the next step.",
            "Examples stay neutral about who the practitioner is.",
            "The phrasing assumes gender and belittles an occupation.",
        ),
        _principle(
            T, CW, 2,
            "Instructions state preconditions before steps; a reader should "
            "never discover a requirement after completing half the procedure.",
            "Before you begin, confirm the backup finished. Then stop the "
            "service.",
            "Stop the service. Delete the data directory. (You did back up, "
            "right?)",
            "Requirements come first, so no step is wasted.",
            "A destructive step precedes the warning that makes it safe.",
        ),
        _principle(
            T, ST, 1,
            "The rewritten text's register must match what the instruction "
            "asked for; a 'more formal' request cannot come back casual.",
            "Asked for formal: 'Ensure the archive completes before removal.'",
            "Asked for formal: 'Just yank the files once stuff looks done.'",
            "The output's tone is the one the instruction named.",
            "The output ignores the requested register entirely.",
        ),
        _principle(
            T, OU, 1,
            "A technical outline mirrors the order of operations; sections "
            "appear in the sequence a practitioner performs them.",
            "1. prerequisites; 2. installation; 3. configuration; 4. "
            "verification; 5. rollback.",
            "1. verification; 2. prerequisites; 3. rollback; 4. installation.",
            "The outline order is the execution order.",
            "Following the outline top to bottom would fail immediately.",
        ),
        _principle(
            T, PE, 1,
            "Editing documentation must preserve technical accuracy; smoother "
            "prose that changes a command or value is a regression.",
            "Edit that rewords the step but keeps 'port 8443' intact.",
            "Edit that smooths the sentence and silently changes it to port "
            "8080.",
            "Readability improved with the facts untouched.",
            "The polish introduced an error a reader will pay for.",
        ),
        _principle(
            T, BS, 1,
            "Brainstorming for documentation proposes topics scoped to the "
            "product's actual behavior, not speculative features.",
            "- a quickstart; - a migration guide; - a troubleshooting matrix.",
            "- a guide to the AI mode we might ship; - docs for the plugin "
            "system that does not exist.",
            "Each topic documents something real.",
            "The list documents vaporware and will mislead readers.",
        ),
    ]


def write_principles(root: str | Path,
                     principles: Sequence[Principle] | None = None) -> int:
    """Materialize principles under principles/<domain>/<task>.json."""
    import json as _json

    root = Path(root)
    grouped: dict[tuple[str, str], list[Principle]] = {}
    for p in (make_principles() if principles is None else principles):
        grouped.setdefault((p.domain.value, p.task.value), []).append(p)
    for (domain, task), items in grouped.items():
        path = root / domain / f"{task}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            _json.dumps([p.to_dict() for p in items], ensure_ascii=False, indent=2)
            + "\n",
            encoding="utf-8",
        )
    return sum(len(v) for v in grouped.values())


DEMO_THEMES = (
    "weather forecasting desk",
    "municipal library catalog",
    "home greenhouse controller",
    "train ticket office",
    "small press publishing house",
    "neighborhood repair cafe",
    "freight harbor logistics",
    "community radio station",
)


def write_demo_workspace(root: str | Path, n_docs: int = 200, seed: int = 0) -> dict:
    """Corpus, exemplars, principles, themes, and bench instructions on disk."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    docs = make_corpus(n_docs, seed=seed)
    write_jsonl(root / "corpus.jsonl", (d.to_dict() for d in docs))

    make_exemplars(seed=seed).save_dir(root / "exemplars")
    principle_count = write_principles(root / "principles")

    (root / "themes.txt").write_text("\n".join(DEMO_THEMES) + "\n", encoding="utf-8")

    bench = make_bench_instructions(12, seed=seed)
    write_jsonl(root / "bench_instructions.jsonl", (b.to_dict() for b in bench))

    return {
        "docs": len(docs),
        "exemplar_buckets": len(DEMO_SUBDOMAINS) * len(TaskKind),
        "principles": principle_count,
        "themes": len(DEMO_THEMES),
        "bench_instructions": len(bench),
    }
