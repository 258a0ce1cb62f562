"""Config-driven, resumable pipeline runs with provenance manifests.

A run executes the fixed stage order, hashing every stage's params and
inputs; a stage whose key matches the previous manifest (and whose outputs
are still on disk, unmodified) is skipped. Manifests are deterministic:
wall-clock timings go to a separate timings.json so re-runs byte-match.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import rag
from .backtranslate import (
    ExemplarStore,
    InstructionPair,
    emit_annotation_samples,
    synthesize_corpus,
)
from .errors import ConfigError, StageFailed, ProsemillError
from .funcall import synth_dataset
from .gateway import Gateway, gateway_from_config
from .ingest import (
    Document,
    EmptyAfterNormalize,
    MixSpec,
    RuleSet,
    ml_quality_score,
    mix,
    near_dedup,
    normalize,
    rule_filter,
)
from .jsonl import atomic_write_text, canonical_json, read_jsonl, sha256_file, sha256_text, write_jsonl
from .preference import build_preference_pairs, load_principles
from .quality import SelectionSpec, score_pairs, select_top
from .taxonomy import TaskKind

MANIFEST_FORMAT = 1
STAGE_ORDER = (
    "ingest", "backtranslate", "score", "select", "cdpo", "rag-augment", "funcall",
)

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib


@dataclass(frozen=True)
class Diagnostic:
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.key}: {self.message}"


@dataclass
class RunConfig:
    raw: dict[str, Any]
    base_dir: Path

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
        return cls(raw=raw, base_dir=path.parent.resolve())

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def stages(self) -> list[str]:
        return list(self.raw.get("stages", STAGE_ORDER))

    @property
    def workdir(self) -> Path:
        return self.resolve(self.raw.get("workdir", "run"))

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name: str) -> dict[str, Any]:
        value = self.raw.get(name, {})
        return dict(value) if isinstance(value, Mapping) else {}


# -- validation -----------------------------------------------------------------

def _check_number(
    diags: list[Diagnostic], section: Mapping, key: str, name: str,
    lo: float | None = None, hi: float | None = None, required: bool = False,
) -> None:
    if key not in section:
        if required:
            diags.append(Diagnostic(name, "required key is missing"))
        return
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        diags.append(Diagnostic(name, f"must be a number, got {value!r}"))
        return
    if lo is not None and value < lo:
        diags.append(Diagnostic(name, f"must be >= {lo}, got {value}"))
    if hi is not None and value > hi:
        diags.append(Diagnostic(name, f"must be <= {hi}, got {value}"))


def _check_path(
    diags: list[Diagnostic], config: RunConfig, section: Mapping, key: str, name: str,
    want_dir: bool = False,
) -> None:
    if key not in section:
        diags.append(Diagnostic(name, "required key is missing"))
        return
    resolved = config.resolve(str(section[key]))
    if want_dir and not resolved.is_dir():
        diags.append(Diagnostic(name, f"directory {str(resolved)!r} does not exist"))
    if not want_dir and not resolved.is_file():
        diags.append(Diagnostic(name, f"file {str(resolved)!r} does not exist"))


def validate(config: RunConfig) -> list[Diagnostic]:
    """Every diagnostic names the offending key and the violated constraint."""
    diags: list[Diagnostic] = []

    seed = config.raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        diags.append(Diagnostic("seed", f"must be a non-negative integer, got {seed!r}"))

    stages = config.raw.get("stages", list(STAGE_ORDER))
    if not isinstance(stages, list) or not stages:
        diags.append(Diagnostic("stages", "must be a non-empty list"))
        stages = []
    unknown = [s for s in stages if s not in STAGE_ORDER]
    for s in unknown:
        diags.append(Diagnostic("stages", f"unknown stage {s!r}"))
    known = [s for s in stages if s in STAGE_ORDER]
    if [s for s in STAGE_ORDER if s in known] != known:
        diags.append(Diagnostic("stages", f"stages must follow the order {STAGE_ORDER}"))

    backend_kind = config.section("backend").get("kind", "mock")
    if backend_kind not in ("mock", "openai_compatible"):
        diags.append(Diagnostic("backend.kind", f"unknown backend kind {backend_kind!r}"))

    if "ingest" in known:
        section = config.section("ingest")
        _check_path(diags, config, section, "corpus", "ingest.corpus")
        _check_number(diags, section, "target_count", "ingest.target_count",
                      lo=1, required=True)
        _check_number(diags, section, "fiction_to_nonfiction",
                      "ingest.fiction_to_nonfiction", lo=1e-9)
        _check_number(diags, section, "zh_to_en", "ingest.zh_to_en", lo=1e-9)
        _check_number(diags, section, "tolerance", "ingest.tolerance", lo=1e-9, hi=0.5)
        _check_number(diags, section, "min_quality", "ingest.min_quality", lo=0.0, hi=1.0)
    if "backtranslate" in known:
        section = config.section("backtranslate")
        _check_path(diags, config, section, "exemplars", "backtranslate.exemplars",
                    want_dir=True)
        tasks = section.get("tasks", ["all"])
        valid = {t.value for t in TaskKind} | {"all"}
        for t in tasks if isinstance(tasks, list) else [tasks]:
            if t not in valid:
                diags.append(Diagnostic("backtranslate.tasks", f"unknown task {t!r}"))
        _check_number(diags, section, "repeats", "backtranslate.repeats", lo=1)
    if "select" in known:
        _check_number(diags, config.section("select"), "quota", "select.quota",
                      lo=1e-9, required=True)
    if "cdpo" in known:
        section = config.section("cdpo")
        _check_path(diags, config, section, "principles", "cdpo.principles",
                    want_dir=True)
        _check_number(diags, section, "per_subdomain", "cdpo.per_subdomain", lo=1)
        _check_number(diags, section, "max_edit", "cdpo.max_edit", lo=1e-9, hi=1.0)
    if "rag-augment" in known:
        section = config.section("rag-augment")
        _check_path(diags, config, section, "refs", "rag-augment.refs")
        _check_number(diags, section, "fraction", "rag-augment.fraction",
                      lo=0.0, hi=1.0, required=True)
        _check_number(diags, section, "max_chunk_chars", "rag-augment.max_chunk_chars",
                      lo=100)
    if "funcall" in known:
        section = config.section("funcall")
        _check_path(diags, config, section, "themes", "funcall.themes")
        _check_number(diags, section, "per_env", "funcall.per_env", lo=1)
    return diags


# -- stage implementations ---------------------------------------------------------

@dataclass
class _StageContext:
    config: RunConfig
    workdir: Path
    gateway: Gateway

    def out(self, name: str) -> Path:
        return self.workdir / name


def _read_pairs(path: Path) -> list[InstructionPair]:
    return [InstructionPair.from_dict(raw) for raw in read_jsonl(path)]


def _stage_ingest(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    section = ctx.config.section("ingest")
    docs = [Document.from_dict(raw) for raw in read_jsonl(
        ctx.config.resolve(section["corpus"]))]

    normalized: list[Document] = []
    empty = 0
    for doc in docs:
        try:
            normalized.append(normalize(doc))
        except EmptyAfterNormalize:
            empty += 1

    kept, report = rule_filter(normalized, RuleSet())
    deduped = near_dedup(
        kept,
        shingle_size=int(section.get("shingle_size", 13)),
        jaccard_threshold=float(section.get("dedup_threshold", 0.8)),
    )
    scored = ml_quality_score(deduped, floor=float(section.get("min_quality", 0.0)))
    spec = MixSpec(
        fiction_to_nonfiction=float(section.get("fiction_to_nonfiction", 1.0)),
        zh_to_en=float(section.get("zh_to_en", 4.0)),
        tolerance=float(section.get("tolerance", 0.02)),
    )
    mixed = mix(scored, spec, int(section["target_count"]), ctx.config.seed)

    out = ctx.out("corpus_mixed.jsonl")
    write_jsonl(out, (d.to_dict() for d in mixed))
    counts = {
        "input": len(docs),
        "empty_after_normalize": empty,
        "rule_rejected": len(report.rejected),
        "near_duplicates": len(kept) - len(deduped),
        "quality_dropped": len(deduped) - len(scored),
        "mixed": len(mixed),
    }
    return counts, {"corpus_mixed.jsonl": out}


def _stage_backtranslate(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    section = ctx.config.section("backtranslate")
    docs = [Document.from_dict(raw)
            for raw in read_jsonl(ctx.out("corpus_mixed.jsonl"))]
    store = ExemplarStore.load_dir(ctx.config.resolve(section["exemplars"]))
    tasks_cfg = section.get("tasks", ["all"])
    tasks = list(TaskKind) if "all" in tasks_cfg else [TaskKind(t) for t in tasks_cfg]

    pairs, report = synthesize_corpus(docs, tasks, store, ctx.gateway,
                                      seed=ctx.config.seed,
                                      repeats=int(section.get("repeats", 1)))
    samples = emit_annotation_samples(pairs)

    pairs_path = ctx.out("pairs.jsonl")
    write_jsonl(pairs_path, (p.to_dict() for p in pairs))
    samples_path = ctx.out("annotation_samples.jsonl")
    write_jsonl(samples_path, (s.to_dict() for s in samples))
    counts = {
        "attempted": report.attempted,
        "pairs": report.succeeded,
        "failures": len(report.failures),
        "annotation_samples": len(samples),
    }
    return counts, {"pairs.jsonl": pairs_path, "annotation_samples.jsonl": samples_path}


def _stage_score(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    pairs = _read_pairs(ctx.out("pairs.jsonl"))
    scored, report = score_pairs(pairs, ctx.gateway)
    out = ctx.out("scored.jsonl")
    write_jsonl(out, (p.to_dict() for p in scored))
    return (
        {"attempted": report.attempted, "scored": report.scored,
         "unscored": len(report.unscored)},
        {"scored.jsonl": out},
    )


def _stage_select(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    quota = ctx.config.section("select")["quota"]
    quota = float(quota) if isinstance(quota, float) else int(quota)
    scored = _read_pairs(ctx.out("scored.jsonl"))
    selected = select_top(scored, SelectionSpec(per_bucket_quota=quota))
    out = ctx.out("selected.jsonl")
    write_jsonl(out, (p.to_dict() for p in selected))
    return {"scored": len(scored), "selected": len(selected)}, {"selected.jsonl": out}


def _stage_cdpo(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    section = ctx.config.section("cdpo")
    selected = _read_pairs(ctx.out("selected.jsonl"))
    principles = load_principles(ctx.config.resolve(section["principles"]))
    positives = select_top(
        selected,
        SelectionSpec(per_bucket_quota=int(section.get("per_subdomain", 500))),
        key=lambda p: p.subdomain,
    )
    prefs, report = build_preference_pairs(
        positives, principles, ctx.gateway,
        max_edit=float(section.get("max_edit", 0.5)),
        negatives_per_positive=int(section.get("negatives_per_positive", 1)),
    )
    out = ctx.out("prefs.jsonl")
    write_jsonl(out, (p.to_dict() for p in prefs))
    counts = {
        "positives": report.positives,
        "preference_pairs": report.pairs,
        "skipped": len(report.skipped),
    }
    return counts, {"prefs.jsonl": out}


def _stage_rag(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    section = ctx.config.section("rag-augment")
    selected = _read_pairs(ctx.out("selected.jsonl"))
    refs = [Document.from_dict(raw)
            for raw in read_jsonl(ctx.config.resolve(section["refs"]))]
    embedder = rag.HashingEmbedder()
    index = rag.chunk_corpus(
        refs, max_chunk_chars=int(section.get("max_chunk_chars", 800)),
        embedder=embedder,
    )
    augmented, untouched = rag.augment(
        selected, index, float(section["fraction"]), seed=ctx.config.seed,
        embedder=embedder,
    )
    text_by_chunk = {c.id: c.text for c in index}
    by_pair_id = {s.base.id: s for s in augmented}
    records = []
    for pair in selected:  # original order, augmented records swapped in
        sample = by_pair_id.get(pair.id)
        if sample is None:
            records.append(pair.to_dict())
        else:
            records.append(rag.render_augmented_record(
                sample, text_by_chunk[sample.reference_chunk_id]))

    out = ctx.out("augmented.jsonl")
    write_jsonl(out, records)
    index_path = ctx.out("rag_index.json")
    rag.save_index(index, index_path, embedder)
    counts = {
        "pairs": len(selected),
        "augmented": len(augmented),
        "untouched": len(untouched),
        "chunks": len(index),
    }
    return counts, {"augmented.jsonl": out, "rag_index.json": index_path}


def _stage_funcall(ctx: _StageContext) -> tuple[dict, dict[str, Path]]:
    section = ctx.config.section("funcall")
    themes = [
        line.strip()
        for line in ctx.config.resolve(section["themes"]).read_text("utf-8").splitlines()
        if line.strip()
    ]
    envs, samples, report = synth_dataset(
        themes, per_env=int(section.get("per_env", 2)),
        backend=ctx.gateway, seed=ctx.config.seed,
    )
    envs_path = ctx.out("environments.jsonl")
    write_jsonl(envs_path, (e.to_dict() for e in envs))
    samples_path = ctx.out("funcall_samples.jsonl")
    write_jsonl(samples_path, (s.to_dict() for s in samples))
    counts = {
        "themes": len(themes),
        "environments": report.environments,
        "samples": report.samples,
        "rejected": len(report.rejected),
    }
    return counts, {"environments.jsonl": envs_path,
                    "funcall_samples.jsonl": samples_path}


_STAGE_FNS: dict[str, Callable[[_StageContext], tuple[dict, dict[str, Path]]]] = {
    "ingest": _stage_ingest,
    "backtranslate": _stage_backtranslate,
    "score": _stage_score,
    "select": _stage_select,
    "cdpo": _stage_cdpo,
    "rag-augment": _stage_rag,
    "funcall": _stage_funcall,
}

#: Upstream artifacts each stage reads (manifest-relative), plus config keys
#: naming external inputs (hashed file-by-file).
_STAGE_INPUTS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "ingest": ((), ("corpus",)),
    "backtranslate": (("corpus_mixed.jsonl",), ("exemplars",)),
    "score": (("pairs.jsonl",), ()),
    "select": (("scored.jsonl",), ()),
    "cdpo": (("selected.jsonl",), ("principles",)),
    "rag-augment": (("selected.jsonl",), ("refs",)),
    "funcall": ((), ("themes",)),
}


def _hash_external(config: RunConfig, stage: str, key: str) -> dict[str, str]:
    value = config.section(stage).get(key)
    if value is None:
        return {}
    path = config.resolve(str(value))
    if path.is_dir():
        return {
            f"{key}:{p.relative_to(path)}": sha256_file(p)
            for p in sorted(path.rglob("*")) if p.is_file()
        }
    return {f"{key}:{path.name}": sha256_file(path)}


def _stage_inputs(ctx: _StageContext, stage: str) -> dict[str, str]:
    artifacts, external_keys = _STAGE_INPUTS[stage]
    hashes: dict[str, str] = {}
    for rel in artifacts:
        path = ctx.out(rel)
        if path.is_file():
            hashes[rel] = sha256_file(path)
    for key in external_keys:
        hashes.update(_hash_external(ctx.config, stage, key))
    return hashes


def _write_manifest(workdir: Path, manifest: dict) -> None:
    atomic_write_text(
        workdir / "manifest.json",
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
    )


def run(config: RunConfig) -> dict:
    """Execute (or resume) all configured stages; returns the manifest."""
    diagnostics = validate(config)
    if diagnostics:
        raise ConfigError(
            "invalid run config: " + "; ".join(str(d) for d in diagnostics)
        )

    workdir = config.workdir
    workdir.mkdir(parents=True, exist_ok=True)
    previous: dict = {}
    manifest_path = workdir / "manifest.json"
    if manifest_path.is_file():
        previous = json.loads(manifest_path.read_text("utf-8"))

    gateway = gateway_from_config(
        {"backend": config.section("backend"), "limits": config.section("limits"),
         "cache": config.section("cache")},
        seed=config.seed,
    )

    manifest: dict = {
        "format": MANIFEST_FORMAT,
        "config_hash": sha256_text(canonical_json(config.raw)),
        "seed": config.seed,
        "stages": {},
        "totals": {"prompt_tokens": 0, "completion_tokens": 0, "requests": 0},
    }
    timings: dict[str, float] = {}

    for stage in config.stages:
        ctx = _StageContext(config=config, workdir=workdir, gateway=gateway)
        inputs = _stage_inputs(ctx, stage)
        params = config.section(stage)
        key = sha256_text(canonical_json(
            {"stage": stage, "seed": config.seed, "params": params, "inputs": inputs}
        ))

        prior = previous.get("stages", {}).get(stage)
        if prior and prior.get("key") == key and all(
            (workdir / rel).is_file() and sha256_file(workdir / rel) == digest
            for rel, digest in prior.get("outputs", {}).items()
        ):
            # Resume: keep the prior entry verbatim so a resumed manifest is
            # byte-identical to a fresh one. timings.json records execution.
            entry = dict(prior)
        else:
            before = (gateway.stats.prompt_tokens, gateway.stats.completion_tokens,
                      gateway.stats.requests)
            started = time.monotonic()
            try:
                counts, outputs = _STAGE_FNS[stage](ctx)
            except ProsemillError as exc:
                _write_manifest(workdir, manifest)
                raise StageFailed(stage, exc) from exc
            timings[stage] = round(time.monotonic() - started, 6)
            entry = {
                "key": key,
                "inputs": inputs,
                "counts": counts,
                "outputs": {rel: sha256_file(path) for rel, path in outputs.items()},
                "tokens": {
                    "prompt_tokens": gateway.stats.prompt_tokens - before[0],
                    "completion_tokens": gateway.stats.completion_tokens - before[1],
                    "requests": gateway.stats.requests - before[2],
                },
            }
        manifest["stages"][stage] = entry
        for field_name in ("prompt_tokens", "completion_tokens", "requests"):
            manifest["totals"][field_name] += entry["tokens"][field_name]
        _write_manifest(workdir, manifest)

    # Always rewritten so its keys are exactly the stages THIS run executed.
    atomic_write_text(
        workdir / "timings.json",
        json.dumps(timings, indent=2, sort_keys=True) + "\n",
    )
    return manifest
