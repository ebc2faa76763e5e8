"""Command-line entry point: ``corpipe-kit <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import segments, span_codec
from .config import load_config
from .coref_model import CorefModel, predict_document
from .corefud import (ConlluError, Document, corpus_id_from_path, join_documents, read_conllu,
                      serialize_conllu, split_documents, strip_empty_nodes, validate)
from .empty_nodes import EmptyNodeModel, insert_empty_nodes, predict_empty_nodes
from .nn.checkpoint import CheckpointError, atomic_write
from .scorer import TSV_HEADER, MatchMode, report_rows, score_documents
from .training import (Corpus, RunPool, exclude_language, model_from_bytes, sampling_weights,
                       select, train)

logger = logging.getLogger("corpipe_kit")


class UsageError(Exception):
    pass


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load_corpora(paths: Iterable[str]) -> list[Corpus]:
    corpora: dict[str, list[Document]] = {}
    for path in paths:
        doc = read_conllu(path)
        corpora.setdefault(doc.corpus_id, []).extend(split_documents(doc))
    return [Corpus(cid, docs) for cid, docs in corpora.items()]


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _tsv(rows: Iterable[Sequence]) -> str:
    return "".join("\t".join(map(str, row)) + "\n" for row in rows)


def _report_counters() -> None:
    if segments.truncation_count:
        logger.warning("truncated sentences: %d", segments.truncation_count)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    def check(path):
        try:
            return path, validate(read_conllu(path)), None
        except (ConlluError, OSError) as err:
            return path, [], err

    status = 0
    for path, findings, error in _map(check, args.files, args.jobs):
        if error is not None:
            print(f"{path}: ERROR {error}", file=sys.stderr)
            status = 1
            continue
        for finding in findings:
            logger.warning("%s: %s", path, finding)
        print(f"{path}: OK" + (f" ({len(findings)} warnings)" if findings else ""))
    return status


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.ratio is not None:
        cfg.sampler = dataclasses.replace(cfg.sampler, ratio=args.ratio)
    if args.unit is not None:
        cfg.sampler = dataclasses.replace(cfg.sampler, unit=args.unit)
    if args.segment_len is not None:
        cfg.segmenter = dataclasses.replace(cfg.segmenter, train_len=args.segment_len)
    for name in ("model", "epochs", "batches_per_epoch", "batch_size", "run_id"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def cmd_train(args) -> int:
    cfg, _ = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    corpora = _load_corpora(args.train)
    dev = _load_corpora(args.dev) if args.dev else None
    if args.exclude_lang:
        corpora = exclude_language(corpora, args.exclude_lang)
        if not corpora:
            raise UsageError(f"no corpora left after excluding {args.exclude_lang!r}")
    run_dir = Path(args.out)
    pool = train(corpora, cfg, dev)
    pool.save(run_dir)
    for ck in pool.ordered():
        print(f"{ck.run_id}\tepoch{ck.epoch}\t{ck.mean_score:.2f}")
    _report_counters()
    return 0


def _load_model(path):
    try:
        return model_from_bytes(Path(path).read_bytes())
    except (OSError, CheckpointError, KeyError) as err:
        raise UsageError(f"cannot load checkpoint {path}: {err}") from err


def cmd_predict_empty(args) -> int:
    model = _load_model(args.checkpoint)
    if not isinstance(model, EmptyNodeModel):
        raise UsageError(f"{args.checkpoint} is not an empty-node checkpoint")
    docs = split_documents(read_conllu(args.input))

    def run(doc):
        doc = strip_empty_nodes(doc) if doc.sentences and any(s.empties for s in doc.sentences) else doc
        return insert_empty_nodes(doc, predict_empty_nodes(doc, model))

    _write(args.output, "".join(serialize_conllu(d) for d in _map(run, docs, args.jobs)))
    return 0


def _coref_members(args) -> Callable[[str], list]:
    if args.checkpoint:
        models = [_load_model(p) for p in args.checkpoint]
        return lambda corpus: models
    if not args.runs:
        raise UsageError("predict-coref needs --checkpoint or --runs")
    pool = RunPool.load(args.runs)
    if args.ensemble and args.ensemble > 1:
        plan = select(pool, "ensemble_topk", args.ensemble)
    else:
        plan = select(pool, args.strategy)
    cache: dict[Path, object] = {}

    def members(corpus):
        out = []
        for ck in plan.for_corpus(corpus):
            if ck.path not in cache:
                cache[ck.path] = _load_model(ck.path)
            out.append(cache[ck.path])
        return out
    return members


def cmd_predict_coref(args) -> int:
    members_for = _coref_members(args)
    doc = read_conllu(args.input)
    docs = split_documents(doc)
    if args.require_empties:
        lacking = [d.doc_id or str(i) for i, d in enumerate(docs)
                   if not any(s.empties for s in d.sentences)]
        if lacking:
            raise UsageError(f"documents without empty nodes: {', '.join(lacking)}; "
                             "run predict-empty first")
    seg_cfg = segments.SegmenterConfig()
    if args.segment_len is not None:
        seg_cfg = dataclasses.replace(seg_cfg, infer_len=args.segment_len)
    models = members_for(doc.corpus_id)
    if not all(isinstance(m, CorefModel) for m in models):
        raise UsageError("predict-coref needs coreference checkpoints")
    predicted = _map(lambda d: predict_document(models, d, seg_cfg), docs, args.jobs)
    _write(args.output, serialize_conllu(join_documents(predicted)))
    _report_counters()
    return 0


def cmd_score(args) -> int:
    key = read_conllu(args.key)
    response = read_conllu(args.response)
    key_docs, resp_docs = split_documents(key), split_documents(response)
    if len(key_docs) != len(resp_docs):
        raise UsageError("key and response contain different numbers of documents")
    match = MatchMode(args.mode, args.singletons)
    report = score_documents(zip(key_docs, resp_docs), match)
    corpus = args.corpus or corpus_id_from_path(args.key)
    _write(args.output, _tsv([TSV_HEADER, *report_rows(corpus, report, match)]))
    return 0


def cmd_select(args) -> int:
    pool = RunPool.load(args.runs)
    strategy = "ensemble_topk" if args.ensemble else args.strategy
    plan = select(pool, strategy, args.ensemble or 5)
    rows = [["strategy", "corpus", "run", "epoch", "mean", "path"]]
    for ck in plan.checkpoints:
        rows.append([plan.strategy, "*", ck.run_id, ck.epoch, f"{ck.mean_score:.4f}", ck.path])
    for corpus, ck in sorted(plan.per_corpus.items()):
        rows.append([plan.strategy, corpus, ck.run_id, ck.epoch, f"{ck.scores[corpus]:.4f}", ck.path])
    _write(args.output, _tsv(rows))
    return 0


def cmd_sample_plan(args) -> int:
    corpora = _load_corpora(args.train)
    if args.exclude_lang:
        corpora = exclude_language(corpora, args.exclude_lang)
    if not corpora:
        raise UsageError("no corpora to sample from")
    cfg, _ = load_config(args.config)
    ratio = args.ratio if args.ratio is not None else cfg.sampler.ratio
    unit = args.unit or cfg.sampler.unit
    sizes = [c.size(unit) for c in corpora]
    weights = sampling_weights(sizes, ratio)
    rows = [["corpus", unit, "weight"]]
    rows.extend([c.corpus_id, s, f"{w:.6f}"] for c, s, w in zip(corpora, sizes, weights))
    _write(args.output, _tsv(rows))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corpipe-kit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, config=True):
        if config:
            p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1, help="parallel workers over files/documents")

    p = sub.add_parser("validate", help="parse and check CoNLL-U files")
    p.add_argument("files", nargs="+")
    common(p, config=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train a coreference or empty-node model")
    p.add_argument("--train", nargs="+", required=True, help="training CoNLL-U files")
    p.add_argument("--dev", nargs="+", help="dev CoNLL-U files (default: training data)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--model", choices=("coref", "empty"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batches-per-epoch", type=int, dest="batches_per_epoch")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--run-id", dest="run_id")
    p.add_argument("--ratio", type=float, help="sampling ratio exponent in [0, 1]")
    p.add_argument("--unit", choices=("sentences", "words"))
    p.add_argument("--segment-len", type=int, help="training segment length")
    p.add_argument("--exclude-lang", help="drop all corpora of this language")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict-empty", help="predict empty nodes")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", "-o")
    common(p)
    p.set_defaults(func=cmd_predict_empty)

    p = sub.add_parser("predict-coref", help="predict mentions and coreference")
    p.add_argument("input")
    p.add_argument("--checkpoint", nargs="+", help="explicit checkpoints (averaged if several)")
    p.add_argument("--runs", nargs="+", help="run directories forming the checkpoint pool")
    p.add_argument("--strategy", default="single_best", choices=("single_best", "per_corpus_best"))
    p.add_argument("--ensemble", type=int, help="ensemble the top K checkpoints of the pool")
    p.add_argument("--segment-len", type=int, help="inference segment length")
    p.add_argument("--require-empties", action="store_true",
                   help="refuse documents without empty nodes")
    p.add_argument("--output", "-o")
    common(p)
    p.set_defaults(func=cmd_predict_coref)

    p = sub.add_parser("score", help="MUC / B3 / CEAF-e / CoNLL scores as TSV")
    p.add_argument("--key", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--mode", default="exact", choices=("exact", "head", "partial"))
    p.add_argument("--singletons", action="store_true", help="keep singleton entities")
    p.add_argument("--corpus", help="corpus label for the output rows")
    p.add_argument("--output", "-o")
    common(p, config=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="choose checkpoints from run directories")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--strategy", default="single_best", choices=("single_best", "per_corpus_best"))
    p.add_argument("--ensemble", type=int, help="top-K ensemble by mean dev score")
    p.add_argument("--output", "-o")
    common(p, config=False)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sample-plan", help="corpus sampling weights")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--ratio", type=float)
    p.add_argument("--unit", choices=("sentences", "words"))
    p.add_argument("--exclude-lang")
    p.add_argument("--output", "-o")
    common(p)
    p.set_defaults(func=cmd_sample_plan)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("CORPIPE_KIT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except (UsageError, ConlluError, CheckpointError, ValueError, OSError) as err:
        print(f"corpipe-kit {args.command}: error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
