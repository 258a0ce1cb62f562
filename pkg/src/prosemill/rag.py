"""Reference retrieval for training-data augmentation.

A slice of the training pairs gets the most-similar reference paragraph
attached as context. Retrieval is an exact cosine scan over a hashed
character-n-gram index: training-free, deterministic, and byte-reproducible
offline; a real embedding service can plug in behind the same handle.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .backtranslate import InstructionPair
from .errors import EmptyIndex, EmptyText
from .ingest import Document
from .jsonl import atomic_write_text

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Chunk:
    id: str
    doc_id: str
    text: str
    embedding: np.ndarray

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.embedding))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"chunk {self.id!r} embedding norm {norm} is not 1")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "doc_id": self.doc_id,
            "text": self.text,
            "vector": [round(float(x), 9) for x in self.embedding],
        }


@dataclass(frozen=True)
class AugmentedSample:
    base: InstructionPair
    reference_chunk_id: str
    similarity: float

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "reference_chunk_id": self.reference_chunk_id,
            "similarity": self.similarity,
        }


class EmbedderHandle(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Signed feature hashing over character 3-grams, L2-normalized.

    Stable across processes and platforms (hashes come from blake2b, not the
    salted builtin hash).
    """

    def __init__(self, dim: int = 256, ngram: int = 3):
        if dim < 8:
            raise ValueError("embedding dimension must be at least 8")
        self.dim = dim
        self.ngram = ngram
        self.name = f"hashing-char{ngram}-d{dim}"

    def _grams(self, text: str) -> Iterable[str]:
        collapsed = " ".join(text.lower().split())
        if len(collapsed) < self.ngram:
            yield collapsed
            return
        for i in range(len(collapsed) - self.ngram + 1):
            yield collapsed[i : i + self.ngram]

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in self._grams(text):
            h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(h, "big")
            bucket = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # all-sign cancellation; still deterministic, keep a unit basis vector
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


def embed(text: str, embedder: EmbedderHandle) -> np.ndarray:
    return embedder.embed(text)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v))


# -- chunking -------------------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?。！？])\s+")


def _split_oversize(piece: str, limit: int) -> list[str]:
    sentences = _SENTENCE_SPLIT.split(piece)
    # re-attach the whitespace the split consumed so concatenation round-trips
    rebuilt: list[str] = []
    pos = 0
    for s in sentences[:-1]:
        end = pos + len(s)
        while end < len(piece) and piece[end].isspace():
            end += 1
        rebuilt.append(piece[pos:end])
        pos = end
    rebuilt.append(piece[pos:])

    out: list[str] = []
    current = ""
    for sentence in rebuilt:
        while len(sentence) > limit:  # single sentence over the limit: hard cut
            if current:
                out.append(current)
                current = ""
            out.append(sentence[:limit])
            sentence = sentence[limit:]
        if len(current) + len(sentence) > limit and current:
            out.append(current)
            current = sentence
        else:
            current += sentence
    if current:
        out.append(current)
    return out


def chunk_corpus(
    docs: Iterable[Document],
    max_chunk_chars: int = 800,
    embedder: EmbedderHandle | None = None,
) -> list[Chunk]:
    """Paragraph-aligned chunks; each chunk is an exact substring of its doc,
    separators included, so per-doc concatenation reconstructs the text."""
    if max_chunk_chars < 100:
        raise ValueError("max_chunk_chars must be at least 100")
    embedder = embedder or HashingEmbedder()
    chunks: list[Chunk] = []
    for doc in docs:
        pieces: list[str] = []
        pos = 0
        text = doc.text
        while pos < len(text):
            sep = text.find("\n\n", pos)
            end = len(text) if sep == -1 else sep + 2
            piece = text[pos:end]
            if len(piece) > max_chunk_chars:
                pieces.extend(_split_oversize(piece, max_chunk_chars))
            else:
                pieces.append(piece)
            pos = end
        for i, piece in enumerate(pieces):
            if not piece.strip():
                # whitespace-only fragment: keep text for reconstruction but
                # don't index it; merge into the previous chunk instead
                if chunks and chunks[-1].doc_id == doc.id:
                    merged = chunks[-1]
                    chunks[-1] = Chunk(
                        merged.id, merged.doc_id, merged.text + piece, merged.embedding
                    )
                    continue
            chunks.append(
                Chunk(
                    id=f"{doc.id}#{i:04d}",
                    doc_id=doc.id,
                    text=piece,
                    embedding=embedder.embed(piece if piece.strip() else "blank"),
                )
            )
    return chunks


# -- retrieval -------------------------------------------------------------------

def retrieve_most_similar(
    query_text: str,
    index: Sequence[Chunk],
    embedder: EmbedderHandle | None = None,
) -> tuple[str, float]:
    """Exact argmax-cosine linear scan; ties broken by chunk id."""
    if not index:
        raise EmptyIndex("retrieval index is empty")
    embedder = embedder or HashingEmbedder()
    query = embedder.embed(query_text)
    matrix = np.stack([c.embedding for c in index])
    sims = matrix @ query
    best = float(np.max(sims))
    best_id = min(c.id for c, s in zip(index, sims) if s == best)
    return best_id, best


def augment(
    pairs: Sequence[InstructionPair],
    index: Sequence[Chunk],
    fraction: float,
    seed: int = 0,
    embedder: EmbedderHandle | None = None,
) -> tuple[list[AugmentedSample], list[InstructionPair]]:
    """Attach the most similar reference to ⌊fraction·N⌋ seed-chosen pairs."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    embedder = embedder or HashingEmbedder()
    count = int(fraction * len(pairs) + 1e-9)
    rng = random.Random(seed)
    chosen = set(rng.sample(range(len(pairs)), count)) if count else set()

    augmented: list[AugmentedSample] = []
    untouched: list[InstructionPair] = []
    for i, pair in enumerate(pairs):
        if i not in chosen:
            untouched.append(pair)
            continue
        # leakage hygiene: never retrieve from the pair's own source document
        candidates = [c for c in index if c.doc_id != pair.source_doc_id] or list(index)
        chunk_id, similarity = retrieve_most_similar(pair.response, candidates, embedder)
        augmented.append(AugmentedSample(pair, chunk_id, similarity))
    return augmented, untouched


def render_augmented_record(sample: AugmentedSample, reference_text: str) -> dict:
    """Training-ready record: the reference rides as a leading context block."""
    record = sample.base.to_dict()
    context = f"[REFERENCE]\n{reference_text}\n[/REFERENCE]"
    if sample.base.context:
        context += f"\n{sample.base.context}"
    record["context"] = context
    record["reference_chunk_id"] = sample.reference_chunk_id
    record["similarity"] = sample.similarity
    return record


# -- index persistence ------------------------------------------------------------

def save_index(chunks: Sequence[Chunk], path: str | Path, embedder: EmbedderHandle) -> None:
    payload = {
        "version": INDEX_FORMAT_VERSION,
        "embedder": embedder.name,
        "dim": embedder.dim,
        "chunks": [c.to_dict() for c in chunks],
    }
    atomic_write_text(Path(path), json.dumps(payload, ensure_ascii=False))


def load_index(path: str | Path) -> list[Chunk]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != INDEX_FORMAT_VERSION:
        raise ValueError(f"unsupported index version {payload.get('version')!r}")
    return [
        Chunk(
            id=raw["id"],
            doc_id=raw["doc_id"],
            text=raw["text"],
            embedding=np.array(raw["vector"], dtype=np.float64),
        )
        for raw in payload["chunks"]
    ]
