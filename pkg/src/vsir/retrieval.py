"""Exact exhaustive ranking over model objects and multi-model fusion.

Scoring is exact (no approximate nearest-neighbour shortcuts): every
object in the model is scored for every query.  Cosine similarity is used
for the vector space models; the log-linear model scores by its query
posterior.  The ensemble fuses same-universe models by summing per-model
standardized scores.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Vocabulary
from .errors import CorpusError, EmptyQueryError, OovQueryError, ZeroVectorError
from .loglinear import query_posterior
from .lse import project_query
from .nvsm import infer_query
from .params import ModelParams

# n-gram widths used to build the reference unsupervised ensemble
DEFAULT_ENSEMBLE_WIDTHS = (2, 4, 8, 10, 12, 16, 24, 32)


@dataclass(frozen=True)
class RunEntry:
    """One line of a ranked retrieval run."""

    query_id: str
    doc_id: str
    rank: int  # 1-based, dense, consistent with descending score
    score: float


def _cosine_scores(query_vec: np.ndarray, reps: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query_vec)
    norms = np.linalg.norm(reps, axis=1)
    if qn == 0.0 or np.any(norms == 0.0):
        raise ZeroVectorError("cosine ranking requires nonzero representations")
    return (reps @ query_vec) / (norms * qn)


def query_scores(params: ModelParams, tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Score every object in the model for a tokenized query.

    Cosine similarity against object embeddings for nvsm/lse; the
    candidate posterior for loglinear.
    """
    if params.kind == "nvsm":
        return _cosine_scores(infer_query(tokens, params, vocab), params.tensors["doc_emb"])
    if params.kind == "lse":
        return _cosine_scores(project_query(tokens, params, vocab), params.tensors["entity_emb"])
    if len(tokens) == 0:
        raise EmptyQueryError("query has no tokens")
    return query_posterior(vocab.encode_tokens(tokens), params)


def _entries_from_scores(
    query_id: str,
    scores: np.ndarray,
    object_ids: Sequence[str],
    cutoff: int,
) -> list[RunEntry]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], object_ids[i]))
    return [
        RunEntry(query_id=query_id, doc_id=object_ids[i], rank=r, score=float(scores[i]))
        for r, i in enumerate(order[:cutoff], start=1)
    ]


def rank_documents(
    params: ModelParams,
    tokens: Sequence[str],
    vocab: Vocabulary,
    query_id: str = "q",
    cutoff: int = 1000,
) -> list[RunEntry]:
    """Exhaustively score and rank all objects; ties break by ascending id.

    A query whose tokens are all out of vocabulary yields an empty list
    with a warning rather than an error.
    """
    try:
        scores = query_scores(params, tokens, vocab)
    except OovQueryError:
        warnings.warn(f"query {query_id!r} has no in-vocabulary terms; empty run", stacklevel=2)
        return []
    return _entries_from_scores(query_id, scores, params.object_ids, cutoff)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-model score statistics over that model's top-cutoff pool."""

    mean: float
    std: float  # sample standard deviation (divisor n-1)


def ensemble_stats(scores: np.ndarray, pool: Sequence[int]) -> EnsembleStats:
    pooled = scores[np.asarray(pool)]
    if pooled.size < 2:
        # a single-document pool has no sample variance; treated as std 0
        return EnsembleStats(mean=float(pooled.mean()), std=0.0)
    return EnsembleStats(mean=float(pooled.mean()), std=float(pooled.std(ddof=1)))


def ensemble_rank(
    models: Sequence[ModelParams],
    tokens: Sequence[str],
    vocab: Vocabulary,
    query_id: str = "q",
    cutoff: int = 1000,
) -> list[RunEntry]:
    """Rank by the sum of per-model standardized scores.

    Every model scores all documents; each model's mean and sample
    standard deviation are estimated over its own top-cutoff pool, and the
    candidate set is the union of those pools.  Documents outside a
    model's pool still receive that model's true standardized score.  A
    model with zero pooled standard deviation contributes zero for all
    documents.
    """
    if not models:
        raise CorpusError("ensemble requires at least one model")
    universe = models[0].object_ids
    for m in models[1:]:
        if m.object_ids != universe:
            raise CorpusError("ensemble models must share the document universe")
        if m.vocab_hash != models[0].vocab_hash:
            raise CorpusError("ensemble models must share the vocabulary")

    try:
        per_model = [query_scores(m, tokens, vocab) for m in models]
    except OovQueryError:
        warnings.warn(f"query {query_id!r} has no in-vocabulary terms; empty run", stacklevel=2)
        return []

    candidate: set[int] = set()
    fused_parts = []
    for scores in per_model:
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], universe[i]))
        pool = order[:cutoff]
        candidate.update(pool)
        stats = ensemble_stats(scores, pool)
        if stats.std == 0.0:
            fused_parts.append(np.zeros_like(scores))
        else:
            fused_parts.append((scores - stats.mean) / stats.std)
    fused = np.sum(fused_parts, axis=0)

    pool_ids = sorted(candidate, key=lambda i: (-fused[i], universe[i]))[:cutoff]
    return [
        RunEntry(query_id=query_id, doc_id=universe[i], rank=r, score=float(fused[i]))
        for r, i in enumerate(pool_ids, start=1)
    ]


# --- TREC run format: `query_id Q0 doc_id rank score tag` -------------------


def write_run(entries: Sequence[RunEntry], path, tag: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(f"{e.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")


def read_run(path) -> dict[str, list[RunEntry]]:
    """Parse a run file into per-query entry lists ordered by rank."""
    runs: dict[str, list[RunEntry]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise CorpusError(f"{path}:{lineno}: expected 6 whitespace-separated fields")
            qid, _, doc_id, rank, score, _tag = parts
            runs.setdefault(qid, []).append(
                RunEntry(query_id=qid, doc_id=doc_id, rank=int(rank), score=float(score))
            )
    for entries in runs.values():
        entries.sort(key=lambda e: e.rank)
    return runs
