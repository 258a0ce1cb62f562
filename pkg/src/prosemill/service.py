"""HTTP service for human annotation: blind pair views in, verdicts out.

Verdicts land in an append-only JSONL log; the leaderboard is recomputed
from that log on demand, so the log stays the single source of truth.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Any, Literal

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .bench import DIMENSIONS, ComparisonRecord, elo_rank
from .errors import ConfigError, ProsemillError
from .jsonl import dumps, read_jsonl, sha256_text


class DuplicateVerdict(ProsemillError):
    """This (comparison, annotator, dimension) was already judged."""


class AnnotationStore:
    """Pending comparisons plus the persisted verdict log; writes serialized."""

    def __init__(self, comparisons: list[dict[str, Any]], verdicts_path: str | Path):
        self._comparisons = {c["id"]: c for c in comparisons}
        self._verdicts_path = Path(verdicts_path)
        self._lock = threading.Lock()
        self._records: list[ComparisonRecord] = []
        self._seen: set[tuple[str, str, str]] = set()
        if self._verdicts_path.exists():
            for raw in read_jsonl(self._verdicts_path):
                self._remember(ComparisonRecord.from_dict(raw))

    def _remember(self, rec: ComparisonRecord) -> None:
        self._records.append(rec)
        comparison_id = rec.id.split("/", 1)[0] if "/" in rec.id else rec.id
        self._seen.add((comparison_id, rec.annotator, rec.dimension))

    @property
    def pending_count(self) -> int:
        return len(self._comparisons)

    @property
    def verdict_count(self) -> int:
        return len(self._records)

    def records(self) -> list[ComparisonRecord]:
        with self._lock:
            return list(self._records)

    def next_pair(self, annotator: str | None = None) -> dict[str, Any] | None:
        """Least-judged comparison first; skips ones this annotator did."""
        with self._lock:
            counts: dict[str, int] = {}
            for cid, _annotator, _dim in self._seen:
                counts[cid] = counts.get(cid, 0) + 1
            candidates = []
            for cid, comparison in self._comparisons.items():
                if annotator and (cid, annotator, comparison["dimension"]) in self._seen:
                    continue
                candidates.append((counts.get(cid, 0), cid))
            if not candidates:
                return None
            _, best = min(candidates)
            c = self._comparisons[best]
            # model identities intentionally withheld: annotation is blind
            return {
                "comparison_id": c["id"],
                "instruction": c["instruction"],
                "response_a": c["response_a"],
                "response_b": c["response_b"],
                "dimension": c["dimension"],
            }

    def submit(
        self, comparison_id: str, verdict: str, dimension: str, annotator: str
    ) -> ComparisonRecord:
        with self._lock:
            comparison = self._comparisons.get(comparison_id)
            if comparison is None:
                raise KeyError(comparison_id)
            if (comparison_id, annotator, dimension) in self._seen:
                raise DuplicateVerdict(
                    f"{annotator!r} already judged {comparison_id!r} on {dimension!r}"
                )
            timestamp = max((r.timestamp for r in self._records), default=0) + 1
            rec = ComparisonRecord(
                id=f"{comparison_id}/" + sha256_text(f"{annotator}|{dimension}")[:8],
                instruction_id=comparison["instruction_id"],
                model_a=comparison["model_a"],
                model_b=comparison["model_b"],
                verdict=verdict,
                dimension=dimension,
                annotator=annotator,
                timestamp=timestamp,
            )
            with self._verdicts_path.open("a", encoding="utf-8") as fh:
                fh.write(dumps(rec.to_dict()) + "\n")
            self._remember(rec)
            return rec

    def leaderboard(self, dimension: str) -> list[dict]:
        return elo_rank(self.records())[dimension]


class VerdictSubmission(BaseModel):
    comparison_id: str
    verdict: Literal["A", "B", "Tie"]
    dimension: Literal["creativity", "style", "relevance", "fluency", "overall"]
    annotator: str = Field(min_length=1)


def create_app(store: AnnotationStore, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="annotation service")

    @app.get("/api/health")
    def health() -> dict:
        return {
            "status": "ok",
            "pending": store.pending_count,
            "verdicts": store.verdict_count,
        }

    @app.get("/api/next-pair")
    def next_pair(annotator: str | None = Query(default=None)) -> dict:
        pair = store.next_pair(annotator)
        if pair is None:
            raise HTTPException(status_code=404, detail="no pairs pending")
        return pair

    @app.post("/api/verdict", status_code=204)
    def submit_verdict(submission: VerdictSubmission) -> Response:
        try:
            store.submit(
                submission.comparison_id,
                submission.verdict,
                submission.dimension,
                submission.annotator,
            )
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown comparison") from None
        except DuplicateVerdict as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return Response(status_code=204)

    @app.get("/api/leaderboard")
    def leaderboard(dimension: str = Query(default="overall")) -> list[dict]:
        if dimension not in DIMENSIONS:
            raise HTTPException(
                status_code=422, detail=f"dimension must be one of {DIMENSIONS}"
            )
        return store.leaderboard(dimension)

    if static_dir is not None:
        if not Path(static_dir).is_dir():
            raise ConfigError(f"static dir {static_dir} does not exist")
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
