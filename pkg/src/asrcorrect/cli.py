"""Command-line entry point: build-index, augment, correct, gen-corpus, eval.

Exit status is 0 on success, 2 when an input is missing or malformed, and 1
on any other failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .augment import (
    AugmentConfig,
    AugmentError,
    HttpGenerator,
    TableGenerator,
    TemplateGenerator,
    build_augmented_catalog,
    read_catalog,
    write_catalog,
)
from .dialogue import DialogueSnapshot, Intent, IntentLabel, RuleIntentClassifier, State, trace_record, write_trace
from .dialogue import derive_narrow_context
from .evaluation import ALTERNATE, STRICT, evaluate, generate_corpus, read_corpus, write_corpus
from .g2p import LexiconError, default_lexicon, load_lexicon_path
from .phonetics import PhoneticThresholds
from .pipeline import Corrector, PipelineConfig
from .rerank import NBestList, RerankThresholds
from .retrieval import DEFAULT_DIM, HttpEmbedder, IndexBuildError, TrigramEmbedder, build_index, index_to_bytes
from .retrieval import load_index

log = logging.getLogger("asrcorrect")

EMBED_ENDPOINT_ENV = "ASRCORRECT_EMBED_ENDPOINT"
GENERATOR_ENDPOINT_ENV = "ASRCORRECT_GENERATOR_ENDPOINT"


class InputError(Exception):
    """Bad or missing user input; maps to exit status 2."""


@dataclass
class RunConfig:
    lexicon: str | None = None
    catalog: str | None = None
    index: str | None = None
    corpus: str | None = None
    report: str | None = None
    fuzzy_min: int = 96
    cosine_min: float = 0.8
    alpha: float = 0.5
    range_ratio: float = 1.5
    min_coverage: float = 0.8
    embed_endpoint: str | None = None
    embed_dim: int = DEFAULT_DIM
    generator_endpoint: str | None = None
    seed: int = 0

    def validate(self, inputs: tuple[str, ...] = ()) -> None:
        for name in inputs:
            path = getattr(self, name)
            if path is None:
                raise InputError(f"--{name} is required")
            if not Path(path).exists():
                raise InputError(f"{name} not found: {path}")
        try:
            self.pipeline_config()
        except ValueError as exc:
            raise InputError(str(exc)) from exc

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            rerank=RerankThresholds(self.fuzzy_min, self.cosine_min),
            phonetic=PhoneticThresholds(self.alpha, self.range_ratio, self.min_coverage),
        )

    def embedder(self):
        if self.embed_endpoint:
            return HttpEmbedder(self.embed_endpoint, self.embed_dim)
        return TrigramEmbedder()

    def load_lexicon(self):
        if self.lexicon is None:
            return default_lexicon()
        return load_lexicon_path(self.lexicon)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    values.setdefault("embed_endpoint", os.environ.get(EMBED_ENDPOINT_ENV) or None)
    values.setdefault("generator_endpoint", os.environ.get(GENERATOR_ENDPOINT_ENV) or None)
    return RunConfig(**values)


def _read_catalog(path: str):
    try:
        catalog = read_catalog(path)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed catalog {path}: {exc}") from exc
    if not catalog:
        raise InputError(f"catalog {path} holds no tasks")
    return catalog


def _load_or_build_index(cfg: RunConfig):
    if cfg.index is not None:
        if not Path(cfg.index).exists():
            raise InputError(f"index not found: {cfg.index}")
        try:
            return load_index(cfg.index, cfg.embedder() if cfg.embed_endpoint else None)
        except ValueError as exc:
            raise InputError(f"unreadable index {cfg.index}: {exc}") from exc
    if cfg.catalog is not None:
        cfg.validate(("catalog",))
        return build_index(_read_catalog(cfg.catalog), cfg.embedder())
    raise InputError("one of --index or --catalog is required")


# -- subcommands ------------------------------------------------------------------


def cmd_build_index(cfg: RunConfig, args) -> int:
    cfg.validate(("catalog",) + (("lexicon",) if cfg.lexicon else ()))
    if cfg.index is None:
        raise InputError("--index (output path) is required")
    if cfg.lexicon:
        cfg.load_lexicon()  # fail early on a broken lexicon
    try:
        index = build_index(_read_catalog(cfg.catalog), cfg.embedder())
    except IndexBuildError as exc:
        raise InputError(str(exc)) from exc
    data = index_to_bytes(index)
    Path(cfg.index).write_bytes(data)
    summary = {
        "entries": len(index.entries),
        "surface_forms": len(index.forms),
        "dim": index.dim,
        "sha256": hashlib.sha256(data).hexdigest(),
        "path": cfg.index,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_augment(cfg: RunConfig, args) -> int:
    cfg.validate(("catalog",))
    if not Path(args.public).exists():
        raise InputError(f"public queries not found: {args.public}")
    public = [line.strip() for line in Path(args.public).read_text(encoding="utf-8").splitlines() if line.strip()]
    if args.generator == "table":
        if not args.table or not Path(args.table).exists():
            raise InputError(f"variation table not found: {args.table}")
        generator = TableGenerator.from_path(args.table)
    elif args.generator == "http":
        if not cfg.generator_endpoint:
            raise InputError(f"--generator http needs --generator-endpoint or ${GENERATOR_ENDPOINT_ENV}")
        generator = HttpGenerator(cfg.generator_endpoint)
    else:
        generator = TemplateGenerator()
    config = AugmentConfig(
        sim_threshold=cfg.alpha,
        n_clusters=args.n_clusters,
        k_variations=args.k,
        seed=cfg.seed,
        generator=generator,
    )
    result = build_augmented_catalog(public, _read_catalog(cfg.catalog), config, cfg.embedder(), args.checkpoint)
    write_catalog(result.catalog, args.out)
    print(
        json.dumps(
            {"counts": result.variation_map.counts(), "centroids": result.centroids, "dropped": result.dropped},
            sort_keys=True,
        )
    )
    return 0


def _snapshot_from_args(args) -> DialogueSnapshot:
    if args.snapshot:
        try:
            return DialogueSnapshot.from_json(json.loads(Path(args.snapshot).read_text(encoding="utf-8")))
        except OSError as exc:
            raise InputError(f"cannot read snapshot {args.snapshot}: {exc}") from exc
    kwargs = {
        "state": State(args.state),
        "presented_options": tuple(args.option or ()),
        "option_ids": tuple(args.option_id) if args.option_id else None,
        "system_suggestions": tuple(args.suggestion or ()),
        "pending_system_question": args.pending_question,
    }
    if args.active_task:
        kwargs["active_task"] = args.active_task
    return DialogueSnapshot(**kwargs)


def cmd_correct(cfg: RunConfig, args) -> int:
    cfg.validate()
    hyps = args.nbest or [line.strip() for line in sys.stdin if line.strip()]
    try:
        nbest = NBestList(tuple(hyps))
        snapshot = _snapshot_from_args(args)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    intent = Intent(IntentLabel(args.intent)) if args.intent else RuleIntentClassifier().classify(nbest.best, snapshot)
    index = _load_or_build_index(cfg)
    outcome = Corrector(index, cfg.load_lexicon(), cfg.pipeline_config()).correct(nbest, snapshot, intent)
    print(json.dumps(outcome.to_json(), sort_keys=True))
    if args.trace:
        with open(args.trace, "a", encoding="utf-8") as fh:
            write_trace([trace_record(snapshot, nbest, intent, derive_narrow_context(snapshot), outcome)], fh)
    return 0


def cmd_gen_corpus(cfg: RunConfig, args) -> int:
    cfg.validate(("catalog",))
    if cfg.corpus is None:
        raise InputError("--corpus (output path) is required")
    catalog = _read_catalog(cfg.catalog)
    try:
        turns = generate_corpus(catalog, cfg.load_lexicon(), n_turns=args.n_turns, seed=cfg.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_corpus(turns, cfg.corpus)
    print(json.dumps({"turns": len(turns), "path": cfg.corpus}, sort_keys=True))
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    cfg.validate(("corpus",))
    try:
        corpus = read_corpus(cfg.corpus)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if not corpus:
        raise InputError(f"corpus {cfg.corpus} is empty")
    corrector = Corrector(_load_or_build_index(cfg), cfg.load_lexicon(), cfg.pipeline_config())
    report, outcomes = evaluate(
        corpus,
        lambda t: corrector.correct(t.nbest, t.snapshot, t.intent),
        convention=args.fpr_convention,
        workers=args.workers,
    )
    if cfg.report:
        Path(cfg.report).write_text(report.dumps(), encoding="utf-8")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            write_trace(
                (
                    trace_record(t.snapshot, t.nbest, t.intent, derive_narrow_context(t.snapshot), o)
                    for t, o in zip(corpus, outcomes)
                ),
                fh,
            )
    print(report.table())
    return 0


# -- argument parsing -------------------------------------------------------------


def _add_thresholds(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--fuzzy-min", dest="fuzzy_min", type=int, help=f"fuzzy match floor (default {d.fuzzy_min})")
    p.add_argument("--cosine-min", dest="cosine_min", type=float, help=f"semantic floor (default {d.cosine_min})")
    p.add_argument("--alpha", type=float, help=f"retrieval / mapping similarity floor (default {d.alpha})")
    p.add_argument("--range-ratio", dest="range_ratio", type=float, help=f"max span ratio (default {d.range_ratio})")
    p.add_argument("--min-coverage", dest="min_coverage", type=float, help=f"min coverage (default {d.min_coverage})")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lexicon", help="CMUdict-format pronunciation file (default: bundled cmudict)")
    p.add_argument("--embed-endpoint", dest="embed_endpoint", help=f"embedding service URL (env {EMBED_ENDPOINT_ENV})")
    p.add_argument("--embed-dim", dest="embed_dim", type=int, help="vector size returned by the embedding service")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asrcorrect", description="Context-aware ASR error correction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="embed a task catalog into a search index")
    p.add_argument("--catalog", required=True)
    p.add_argument("--index", required=True, help="output path")
    _add_common(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("augment", help="add query variations to a task catalog")
    p.add_argument("--catalog", required=True, help="private task catalog (JSONL)")
    p.add_argument("--public", required=True, help="public queries, one per line")
    p.add_argument("--out", required=True)
    p.add_argument("--n-clusters", dest="n_clusters", type=int, default=8)
    p.add_argument("-k", type=int, default=8, help="variations per centroid")
    p.add_argument("--generator", choices=("template", "table", "http"), default="template")
    p.add_argument("--table", help="TSV of text<TAB>variation rows for --generator table")
    p.add_argument("--generator-endpoint", dest="generator_endpoint", help=f"env {GENERATOR_ENDPOINT_ENV}")
    p.add_argument("--checkpoint", help="resume file for the generation loop")
    p.add_argument("--alpha", type=float, help="public-to-private mapping floor (default 0.5)")
    _add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("correct", help="correct one n-best list")
    p.add_argument("--index")
    p.add_argument("--catalog", help="build an in-memory index instead of loading one")
    p.add_argument("--nbest", action="append", help="hypothesis, best first; repeat up to 5 times (else stdin lines)")
    p.add_argument("--state", default="Searching", choices=[s.value for s in State])
    p.add_argument("--option", action="append", help="presented option, in screen order")
    p.add_argument("--option-id", dest="option_id", action="append")
    p.add_argument("--suggestion", action="append")
    p.add_argument("--active-task", dest="active_task")
    p.add_argument("--pending-question", dest="pending_question", action="store_true")
    p.add_argument("--snapshot", help="dialogue snapshot JSON file (overrides the state flags)")
    p.add_argument("--intent", choices=[i.value for i in IntentLabel], help="skip the rule classifier")
    p.add_argument("--trace", help="append a trace record to this JSONL file")
    _add_thresholds(p)
    _add_common(p)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("gen-corpus", help="write a seeded synthetic evaluation corpus")
    p.add_argument("--catalog", required=True)
    p.add_argument("--corpus", required=True, help="output path")
    p.add_argument("--n-turns", dest="n_turns", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("eval", help="score the engine on an annotated corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index")
    p.add_argument("--catalog")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--fpr-convention", dest="fpr_convention", choices=(STRICT, ALTERNATE), default=STRICT)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace", help="write per-turn trace records (JSONL)")
    _add_thresholds(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config_from_args(args)
        return args.func(cfg, args)
    except (InputError, LexiconError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AugmentError as exc:
        hint = f" (resume with --checkpoint {exc.checkpoint})" if exc.checkpoint else ""
        print(f"error: {exc}{hint}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit status
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
