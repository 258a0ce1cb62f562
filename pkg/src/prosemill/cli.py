"""Command-line entry points for every pipeline stage plus the bench tools."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, pipeline, preference, rag, synthcorpus
from .backtranslate import ExemplarStore, InstructionPair, synthesize_corpus
from .errors import ProsemillError
from .funcall import synth_dataset
from .gateway import Backend, Gateway, GatewayLimits, MockBackend, OpenAICompatibleBackend
from .ingest import Document, MixSpec, RuleSet, ml_quality_score, mix, near_dedup, normalize, rule_filter
from .jsonl import read_jsonl, stable_int, write_jsonl
from .quality import SelectionSpec, score_pairs, select_top
from .service import AnnotationStore, create_app
from .taxonomy import TaskKind


def _backend(args: argparse.Namespace) -> Gateway:
    if args.backend == "mock":
        backend: Backend = MockBackend(seed=getattr(args, "seed", 0))
    elif args.backend == "openai_compatible":
        backend = OpenAICompatibleBackend(
            base_url=args.base_url or "", model=args.model or "")
    else:
        raise SystemExit(f"unknown backend {args.backend!r}")
    return Gateway(backend, limits=GatewayLimits())


def _add_backend_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--backend", default="mock",
                     choices=("mock", "openai_compatible"))
    sub.add_argument("--base-url", default="")
    sub.add_argument("--model", default="")
    sub.add_argument("--seed", type=int, default=0)


def _read_docs(path: str) -> list[Document]:
    return [Document.from_dict(raw) for raw in read_jsonl(path)]


def _read_pairs(path: str) -> list[InstructionPair]:
    return [InstructionPair.from_dict(raw) for raw in read_jsonl(path)]


def _parse_ratio(text: str) -> float:
    left, _, right = text.partition(":")
    return float(left) / float(right or "1")


def _parse_mix(text: str) -> dict[str, float]:
    # e.g. "fiction=1:1,lang=4:1"
    ratios = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if name.strip() not in ("fiction", "lang") or not value:
            raise SystemExit(f"bad --mix entry {part!r}; expected fiction=A:B,lang=C:D")
        ratios[name.strip()] = _parse_ratio(value)
    return ratios


def _cmd_ingest(args: argparse.Namespace) -> int:
    docs = []
    empty = 0
    for raw in read_jsonl(args.input):
        try:
            docs.append(normalize(Document.from_dict(raw)))
        except ProsemillError:
            empty += 1
    rule_kwargs = {}
    if args.rules:
        rule_kwargs = json.loads(Path(args.rules).read_text("utf-8"))
    kept, report = rule_filter(docs, RuleSet(**rule_kwargs))
    deduped = near_dedup(kept)
    scored = ml_quality_score(deduped, floor=args.min_quality)
    ratios = _parse_mix(args.mix)
    mixed = mix(
        scored,
        MixSpec(fiction_to_nonfiction=ratios.get("fiction", 1.0),
                zh_to_en=ratios.get("lang", 4.0), tolerance=args.tolerance),
        args.target, args.seed,
    )
    count = write_jsonl(args.out, (d.to_dict() for d in mixed))
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    print(f"ingest: {len(docs)} in, {empty} empty, {len(report.rejected)} rejected, "
          f"{len(kept) - len(deduped)} near-duplicates, {count} written")
    return 0


def _resolve_task(name: str) -> TaskKind:
    folded = name.replace("_", "").replace("-", "").lower()
    for task in TaskKind:
        if task.value.lower() == folded:
            return task
    raise SystemExit(
        f"unknown task {name!r}; choose from "
        + ", ".join(t.value for t in TaskKind))


def _cmd_backtranslate(args: argparse.Namespace) -> int:
    docs = _read_docs(args.corpus)
    store = ExemplarStore.load_dir(args.exemplars)
    tasks = list(TaskKind) if "all" in args.tasks else [
        _resolve_task(t) for t in args.tasks]
    pairs, report = synthesize_corpus(docs, tasks, store, _backend(args),
                                      seed=args.seed, repeats=args.repeats)
    count = write_jsonl(args.out, (p.to_dict() for p in pairs))
    print(f"backtranslate: {report.attempted} attempted, {count} pairs, "
          f"{len(report.failures)} failures")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    scored, report = score_pairs(_read_pairs(args.pairs), _backend(args))
    count = write_jsonl(args.out, (p.to_dict() for p in scored))
    print(f"score: {report.attempted} pairs, {count} scored, "
          f"{len(report.unscored)} unscored")
    return 0


def _cmd_select(args: argparse.Namespace) -> int:
    quota = float(args.quota) if "." in args.quota else int(args.quota)
    selected = select_top(_read_pairs(args.scored), SelectionSpec(per_bucket_quota=quota))
    count = write_jsonl(args.out, (p.to_dict() for p in selected))
    print(f"select: {count} selected")
    return 0


def _cmd_cdpo(args: argparse.Namespace) -> int:
    selected = _read_pairs(args.selected)
    principles = preference.load_principles(args.principles)
    positives = select_top(
        selected, SelectionSpec(per_bucket_quota=args.per_subdomain),
        key=lambda p: p.subdomain,
    )
    prefs, report = preference.build_preference_pairs(
        positives, principles, _backend(args), max_edit=args.max_edit)
    count = write_jsonl(args.out, (p.to_dict() for p in prefs))
    print(f"cdpo: {report.positives} positives, {count} pairs, "
          f"{len(report.skipped)} skipped")
    return 0


def _cmd_dpo_loss(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.batch).read_text("utf-8"))
    except OSError as exc:
        print(f"error: cannot read batch {args.batch}: {exc.strerror}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON in {args.batch}: {exc}", file=sys.stderr)
        return 2
    if args.beta is not None:
        raw["beta"] = args.beta
    try:
        loss, grads = preference.dpo_loss(preference.DpoBatch.from_dict(raw))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(
        {"loss": loss, "gradients": {k: v.tolist() for k, v in grads.items()}},
        indent=2,
    ))
    return 0


def _cmd_rag_augment(args: argparse.Namespace) -> int:
    pairs = _read_pairs(args.pairs)
    refs = _read_docs(args.refs)
    embedder = rag.HashingEmbedder()
    index = rag.chunk_corpus(refs, max_chunk_chars=args.max_chunk_chars,
                             embedder=embedder)
    augmented, untouched = rag.augment(pairs, index, args.fraction, seed=args.seed,
                                       embedder=embedder)
    text_by_chunk = {c.id: c.text for c in index}
    by_pair_id = {s.base.id: s for s in augmented}
    records = [
        rag.render_augmented_record(by_pair_id[p.id], text_by_chunk[
            by_pair_id[p.id].reference_chunk_id])
        if p.id in by_pair_id else p.to_dict()
        for p in pairs
    ]
    count = write_jsonl(args.out, records)
    print(f"rag-augment: {len(augmented)} augmented of {count} records")
    return 0


def _cmd_funcall(args: argparse.Namespace) -> int:
    themes = [l.strip() for l in Path(args.themes).read_text("utf-8").splitlines()
              if l.strip()]
    envs, samples, report = synth_dataset(themes, per_env=args.per_env,
                                          backend=_backend(args), seed=args.seed)
    count = write_jsonl(args.out, (s.to_dict() for s in samples))
    if args.environments:
        write_jsonl(args.environments, (e.to_dict() for e in envs))
    print(f"funcall: {report.environments} environments, {count} samples, "
          f"{len(report.rejected)} rejected")
    return 0


def _cmd_bench_collect(args: argparse.Namespace) -> int:
    instructions = [bench.BenchInstruction.from_dict(raw)
                    for raw in read_jsonl(args.instructions)]
    models = [
        (name, MockBackend(seed=stable_int("model", name) % 2**31, name=name))
        for name in args.models.split(",") if name
    ]
    outputs, report = bench.collect_outputs(instructions, models, seed=args.seed)
    count = write_jsonl(args.out, outputs)
    print(f"bench collect: {count} responses, {len(report.failures)} failures")
    return 0


def _cmd_bench_judge(args: argparse.Namespace) -> int:
    text_by_id = {raw["id"]: raw["text"] for raw in read_jsonl(args.instructions)}
    gateway = _backend(args)
    judged = []
    failures = 0
    for out in read_jsonl(args.outputs):
        try:
            score = bench.judge(text_by_id[out["instruction_id"]], out["response"],
                                gateway)
        except ProsemillError:
            failures += 1
            continue
        judged.append({**out, "scores": score.to_dict()})
    count = write_jsonl(args.out, judged)
    print(f"bench judge: {count} judged, {failures} failures")
    return 0


def _cmd_bench_pairs(args: argparse.Namespace) -> int:
    instructions = [bench.BenchInstruction.from_dict(raw)
                    for raw in read_jsonl(args.instructions)]
    outputs = list(read_jsonl(args.outputs))
    pending = bench.make_comparisons(instructions, outputs,
                                     dimensions=args.dimensions.split(","),
                                     seed=args.seed)
    count = write_jsonl(args.out, pending)
    print(f"bench pairs: {count} pending comparisons")
    return 0


def _cmd_bench_elo(args: argparse.Namespace) -> int:
    records = [bench.ComparisonRecord.from_dict(raw)
               for raw in read_jsonl(args.verdicts)]
    leaderboard = bench.elo_rank(records, initial=args.initial, k_factor=args.k)
    if args.dimension:
        print(json.dumps(leaderboard[args.dimension], indent=2))
    else:
        print(json.dumps(leaderboard, indent=2))
    return 0


def _cmd_bench_serve(args: argparse.Namespace) -> int:
    import uvicorn

    comparisons = list(read_jsonl(args.pairs))
    store = AnnotationStore(comparisons, args.verdicts)
    app = create_app(store, static_dir=args.static or None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = pipeline.RunConfig.from_toml(args.config)
    manifest = pipeline.run(config)
    timings = json.loads((config.workdir / "timings.json").read_text("utf-8"))
    print(f"run: {len(manifest['stages'])} stages, {len(timings)} executed, "
          f"{manifest['totals']['requests']} requests")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    diagnostics = pipeline.validate(pipeline.RunConfig.from_toml(args.config))
    for diag in diagnostics:
        print(diag)
    if not diagnostics:
        print("ok")
    return 1 if diagnostics else 0


def _cmd_demo_init(args: argparse.Namespace) -> int:
    summary = synthcorpus.write_demo_workspace(args.dir, n_docs=args.docs,
                                               seed=args.seed)
    config = Path(args.dir) / "run.toml"
    config.write_text(_DEMO_CONFIG, encoding="utf-8")
    print(json.dumps({**summary, "config": str(config)}, indent=2))
    return 0


_DEMO_CONFIG = """\
seed = 42
workdir = "run"
stages = ["ingest", "backtranslate", "score", "select", "cdpo", "rag-augment", "funcall"]

[backend]
kind = "mock"

[ingest]
corpus = "corpus.jsonl"
target_count = 60
fiction_to_nonfiction = 1.0
zh_to_en = 4.0
tolerance = 0.02
min_quality = 0.0

[backtranslate]
exemplars = "exemplars"
tasks = ["all"]

[select]
quota = 0.4

[cdpo]
principles = "principles"
per_subdomain = 500
max_edit = 0.5

[rag-augment]
refs = "corpus.jsonl"
fraction = 0.10
max_chunk_chars = 800

[funcall]
themes = "themes.txt"
per_env = 2
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosemill",
        description="Synthetic writing-data pipeline: ingest, backtranslate, "
                    "score, select, preference pairs, retrieval augmentation, "
                    "function-calling data, and an evaluation bench.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("ingest", help="normalize, filter, dedup, and mix a corpus")
    sub.add_argument("--input", required=True, help="JSONL corpus of documents")
    sub.add_argument("--target", type=int, required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--mix", default="fiction=1:1,lang=4:1")
    sub.add_argument("--rules", default="", help="JSON file of RuleSet overrides")
    sub.add_argument("--report", default="", help="where to write the filter report")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--tolerance", type=float, default=0.02)
    sub.add_argument("--min-quality", type=float, default=0.0)
    sub.set_defaults(fn=_cmd_ingest)

    sub = subs.add_parser("backtranslate", help="synthesize instruction pairs")
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--tasks", nargs="+", default=["all"])
    sub.add_argument("--exemplars", required=True)
    sub.add_argument("--repeats", type=int, default=1,
                     help="spans to draw per (doc, task)")
    sub.add_argument("--out", required=True)
    _add_backend_args(sub)
    sub.set_defaults(fn=_cmd_backtranslate)

    sub = subs.add_parser("score", help="judge pairs on quality/diversity/relevance")
    sub.add_argument("--pairs", required=True)
    sub.add_argument("--out", required=True)
    _add_backend_args(sub)
    sub.set_defaults(fn=_cmd_score)

    sub = subs.add_parser("select", help="keep top-scored pairs per bucket")
    sub.add_argument("--scored", required=True)
    sub.add_argument("--quota", required=True,
                     help="int count or float fraction, e.g. 0.4")
    sub.add_argument("--out", required=True)
    sub.set_defaults(fn=_cmd_select)

    sub = subs.add_parser("cdpo", help="build principled preference pairs")
    sub.add_argument("--selected", required=True)
    sub.add_argument("--principles", required=True)
    sub.add_argument("--per-subdomain", type=int, default=500)
    sub.add_argument("--max-edit", type=float, default=0.5)
    sub.add_argument("--out", required=True)
    _add_backend_args(sub)
    sub.set_defaults(fn=_cmd_cdpo)

    sub = subs.add_parser("dpo-loss", help="evaluate the DPO loss kernel on a batch")
    sub.add_argument("--batch", required=True, help="JSON file with beta and items")
    sub.add_argument("--beta", type=float, default=None)
    sub.set_defaults(fn=_cmd_dpo_loss)

    sub = subs.add_parser("rag-augment", help="attach retrieved references")
    sub.add_argument("--pairs", required=True)
    sub.add_argument("--refs", required=True)
    sub.add_argument("--fraction", type=float, required=True)
    sub.add_argument("--max-chunk-chars", type=int, default=800)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(fn=_cmd_rag_augment)

    sub = subs.add_parser("funcall", help="synthesize function-calling samples")
    sub.add_argument("--themes", required=True)
    sub.add_argument("--per-env", type=int, default=5)
    sub.add_argument("--out", required=True)
    sub.add_argument("--environments", default="",
                     help="optional path for the environment JSONL")
    _add_backend_args(sub)
    sub.set_defaults(fn=_cmd_funcall)

    sub = subs.add_parser("bench", help="evaluation bench tools")
    bench_subs = sub.add_subparsers(dest="bench_command", required=True)

    b = bench_subs.add_parser("collect", help="run instructions against models")
    b.add_argument("--instructions", required=True)
    b.add_argument("--models", required=True, help="comma-separated model names")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=_cmd_bench_collect)

    b = bench_subs.add_parser("judge", help="score collected outputs")
    b.add_argument("--instructions", required=True)
    b.add_argument("--outputs", required=True)
    b.add_argument("--out", required=True)
    _add_backend_args(b)
    b.set_defaults(fn=_cmd_bench_judge)

    b = bench_subs.add_parser("pairs", help="build pending blind comparisons")
    b.add_argument("--instructions", required=True)
    b.add_argument("--outputs", required=True)
    b.add_argument("--dimensions", default="overall")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=_cmd_bench_pairs)

    b = bench_subs.add_parser("elo", help="fold verdicts into leaderboards")
    b.add_argument("--verdicts", required=True)
    b.add_argument("--dimension", default="")
    b.add_argument("--k", type=float, default=32.0)
    b.add_argument("--initial", type=float, default=1500.0)
    b.set_defaults(fn=_cmd_bench_elo)

    b = bench_subs.add_parser("serve", help="run the annotation service")
    b.add_argument("--pairs", required=True, help="pending comparisons JSONL")
    b.add_argument("--verdicts", required=True, help="append-only verdict log")
    b.add_argument("--host", default="127.0.0.1")
    b.add_argument("--port", type=int, default=8400)
    b.add_argument("--static", default="", help="directory of built UI assets")
    b.set_defaults(fn=_cmd_bench_serve)

    sub = subs.add_parser("run", help="execute a configured pipeline run")
    sub.add_argument("--config", required=True)
    sub.set_defaults(fn=_cmd_run)

    sub = subs.add_parser("validate", help="check a run config without executing")
    sub.add_argument("--config", required=True)
    sub.set_defaults(fn=_cmd_validate)

    sub = subs.add_parser("demo-init", help="write a synthetic demo workspace")
    sub.add_argument("--dir", required=True)
    sub.add_argument("--docs", type=int, default=200)
    sub.add_argument("--seed", type=int, default=42)
    sub.set_defaults(fn=_cmd_demo_init)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ProsemillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
