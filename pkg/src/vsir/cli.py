"""Command-line pipeline: prepare -> train -> rank/ensemble -> eval -> analyze.

Machine-readable outputs go to files (or stdout for `eval`); progress and
diagnostics go to stderr.  Exit code 0 means success, 2 a usage or
configuration error, 1 any other failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analysis, corpus, evaluation, loglinear, lse, nvsm, retrieval
from .errors import ConfigError, VsirError
from .params import TrainConfig, load_model, save_model

VOCAB_FILE = "vocabulary.tsv"
DOCS_FILE = "encoded.tsv"

# reference batch size defaults per model
DEFAULT_BATCH = {"nvsm": 51200, "lse": 4096, "loglinear": 1024}


def _read_stopwords(path: str | None) -> frozenset[str]:
    if path is None:
        return frozenset()
    with open(path, encoding="utf-8") as f:
        return frozenset(line.strip().lower() for line in f if line.strip())


def _read_queries(path: str) -> list[tuple[str, str]]:
    queries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ConfigError(f"{path}:{lineno}: expected <query_id>\\t<query text>")
            qid, text = line.split("\t", 1)
            queries.append((qid, text))
    return queries


def _load_prepared(corpus_dir: str, assoc_path: str | None) -> tuple[corpus.Vocabulary, corpus.EncodedCorpus]:
    vocab = corpus.read_vocabulary(Path(corpus_dir) / VOCAB_FILE)
    doc_ids, docs = corpus.read_encoded_docs(Path(corpus_dir) / DOCS_FILE, len(vocab))
    associations = None
    if assoc_path is not None:
        pairs = corpus.read_associations_file(assoc_path)
        index = {doc_id: i for i, doc_id in enumerate(doc_ids)}
        grouped: dict[str, set[int]] = {}
        for object_id, doc_id in pairs:
            if doc_id not in index:
                raise ConfigError(f"association references unknown doc_id {doc_id!r}")
            grouped.setdefault(object_id, set()).add(index[doc_id])
        associations = {k: frozenset(v) for k, v in grouped.items()}
    return vocab, corpus.EncodedCorpus(
        docs=docs, doc_ids=doc_ids, vocab_size=len(vocab), associations=associations
    )


def _check_vocab(model, vocab) -> None:
    if model.vocab_hash and model.vocab_hash != corpus.vocabulary_digest(vocab):
        raise ConfigError("vocabulary does not match the one the model was trained on")


def cmd_prepare(args) -> int:
    stopwords = _read_stopwords(args.stopwords)
    raw_docs = corpus.read_corpus_file(args.corpus)
    tokenized = [(doc_id, corpus.tokenize(text, stopwords)) for doc_id, text in raw_docs]
    vocab = corpus.build_vocabulary([toks for _, toks in tokenized], args.max_vocab, stopwords)
    encoded = corpus.encode(tokenized, vocab)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus.write_vocabulary(vocab, out / VOCAB_FILE)
    corpus.write_encoded_docs(encoded, out / DOCS_FILE)
    print(
        f"prepared {len(encoded)} documents, vocabulary size {len(vocab)}",
        file=sys.stderr,
    )
    return 0


def cmd_train(args) -> int:
    seed = int(os.environ.get("VSIR_SEED", args.seed))
    config = TrainConfig(
        window=args.n,
        batch_size=args.m if args.m is not None else DEFAULT_BATCH[args.model],
        num_negatives=args.z,
        weight_decay=getattr(args, "lambda"),
        epochs=args.epochs,
        seed=seed,
        word_dim=args.kw,
        object_dim=args.kd,
        non_overlapping=args.non_overlapping,
    )
    vocab, encoded = _load_prepared(args.corpus, args.assoc)

    def log_epoch(epoch: int, loss: float) -> None:
        print(f"{epoch},{loss:.6f}", file=sys.stderr)

    print("epoch,loss", file=sys.stderr)
    if args.model == "nvsm":
        params, _ = nvsm.train_nvsm(encoded, config, vocab, on_epoch=log_epoch)
    elif args.model == "lse":
        if encoded.associations is None:
            raise ConfigError("lse training requires --assoc")
        params, _ = lse.train_lse(encoded, config, vocab, on_epoch=log_epoch)
    else:
        if encoded.associations is None:
            raise ConfigError("loglinear training requires --assoc")
        params, _ = loglinear.train_loglinear(encoded, config, vocab, on_epoch=log_epoch)

    save_model(params, args.out)
    print(f"saved {args.model} model to {args.out}", file=sys.stderr)
    return 0


def _rank_queries(rank_one, queries, threads: int):
    if threads <= 1:
        return [rank_one(qid, text) for qid, text in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(rank_one, qid, text) for qid, text in queries]
        return [f.result() for f in futures]


def cmd_rank(args) -> int:
    model = load_model(args.model)
    vocab = corpus.read_vocabulary(args.vocab)
    _check_vocab(model, vocab)
    stopwords = _read_stopwords(args.stopwords)
    queries = _read_queries(args.queries)

    def rank_one(qid: str, text: str):
        tokens = corpus.tokenize(text, stopwords)
        return retrieval.rank_documents(model, tokens, vocab, query_id=qid, cutoff=args.cutoff)

    entries = [e for per_query in _rank_queries(rank_one, queries, args.threads) for e in per_query]
    retrieval.write_run(entries, args.out, tag=args.tag)
    print(f"ranked {len(queries)} queries to {args.out}", file=sys.stderr)
    return 0


def cmd_ensemble(args) -> int:
    paths = [p for p in args.models.split(",") if p]
    if not paths:
        raise ConfigError("--models requires at least one model path")
    models = [load_model(p) for p in paths]
    vocab = corpus.read_vocabulary(args.vocab)
    for m in models:
        _check_vocab(m, vocab)
    stopwords = _read_stopwords(args.stopwords)
    queries = _read_queries(args.queries)

    def rank_one(qid: str, text: str):
        tokens = corpus.tokenize(text, stopwords)
        return retrieval.ensemble_rank(models, tokens, vocab, query_id=qid, cutoff=args.cutoff)

    entries = [e for per_query in _rank_queries(rank_one, queries, args.threads) for e in per_query]
    retrieval.write_run(entries, args.out, tag=args.tag)
    print(f"fused {len(models)} models over {len(queries)} queries to {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    run = retrieval.read_run(args.run)
    qrels = evaluation.read_qrels(args.qrels)
    metrics = [m for m in args.metrics.split(",") if m]
    results = evaluation.evaluate_run(run, qrels, metrics)
    for name in metrics:
        print(f"{name}\t{results[name]:.4f}")
    return 0


def cmd_fuse_rr(args) -> int:
    run_a = retrieval.read_run(args.run_a)
    run_b = retrieval.read_run(args.run_b)
    if set(run_a) != set(run_b):
        raise ConfigError("runs rank different query sets")
    entries = []
    for qid in sorted(run_a):
        fused = loglinear.reciprocal_rank_ensemble(
            [e.doc_id for e in run_a[qid]], [e.doc_id for e in run_b[qid]]
        )
        entries.extend(
            retrieval.RunEntry(query_id=qid, doc_id=doc, rank=r, score=score)
            for r, (doc, score) in enumerate(fused, start=1)
        )
    retrieval.write_run(entries, args.out, tag=args.tag)
    print(f"fused runs over {len(run_a)} queries to {args.out}", file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    vocab = corpus.read_vocabulary(args.vocab)
    _check_vocab(model, vocab)
    rows = analysis.term_norm_report(model, vocab)
    summary = analysis.band_summary(rows)
    analysis.write_term_report(rows, summary, args.out)
    figure = args.figure if args.figure is not None else str(Path(args.out).with_suffix(".png"))
    analysis.render_term_report_figure(rows, summary, figure)
    for band in analysis.BANDS:
        print(f"mean_l2norm_{band},{summary.band_means[band]:.8f}", file=sys.stderr)
    t_low, p_low = summary.mid_vs_low
    t_high, p_high = summary.mid_vs_high
    print(f"welch_mid_vs_low,t={t_low:.6f},p={p_low:.6g}", file=sys.stderr)
    print(f"welch_mid_vs_high,t={t_high:.6f},p={p_high:.6g}", file=sys.stderr)
    print(f"wrote {args.out} and {figure}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsir",
        description="Train and query unsupervised vector space retrieval models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tokenize a corpus and build its vocabulary")
    p.add_argument("--corpus", required=True, help="<doc_id>\\t<text> lines")
    p.add_argument("--stopwords", default=None, help="one stopword per line")
    p.add_argument("--max-vocab", type=int, default=60000)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared corpus")
    p.add_argument("--model", required=True, choices=("nvsm", "lse", "loglinear"))
    p.add_argument("--corpus", required=True, help="directory written by prepare")
    p.add_argument("--assoc", default=None, help="<object_id>\\t<doc_id> lines")
    p.add_argument("--n", type=int, required=True, help="n-gram window size")
    p.add_argument("--m", type=int, default=None, help="batch size (default per model)")
    p.add_argument("--z", type=int, default=10, help="negative examples per instance")
    p.add_argument("--lambda", type=float, default=0.01, dest="lambda")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--kw", type=int, default=300, help="word embedding dim")
    p.add_argument("--kd", type=int, default=256, help="object embedding dim")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--non-overlapping", action="store_true", help="stride windows by n")
    p.add_argument("--out", required=True, help="model file path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank a model's objects for each query")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True, help="vocabulary file from prepare")
    p.add_argument("--queries", required=True, help="<query_id>\\t<text> lines")
    p.add_argument("--stopwords", default=None)
    p.add_argument("--cutoff", type=int, default=1000)
    p.add_argument("--tag", default="vsir")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="run file path")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("ensemble", help="fuse models by standardized score sums")
    p.add_argument("--models", required=True, help="comma-separated model paths")
    p.add_argument("--vocab", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--stopwords", default=None)
    p.add_argument("--cutoff", type=int, default=1000)
    p.add_argument("--tag", default="ensemble")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default="map,ndcg@100,p@10,mrr")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse-rr", help="reciprocal-rank fusion of two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--tag", default="fuse-rr")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse_rr)

    p = sub.add_parser("analyze", help="term frequency vs. embedding norm report")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--figure", default=None, help="figure path (default: CSV path with .png)")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"vsir: {exc}", file=sys.stderr)
        return 2
    except VsirError as exc:
        print(f"vsir: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"vsir: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
