"""Rank-based retrieval metrics and TREC qrels parsing.

Relevance is binary for AP/P@k/MRR (grade > 0); NDCG uses graded gains
2^grade - 1 with a log2(rank + 1) discount.  Unjudged documents count as
non-relevant.  Queries without any relevant document are excluded from
aggregation with a warning.
"""

from __future__ import annotations

import math
import warnings
from typing import Mapping, Sequence

from .errors import EvaluationError
from .retrieval import RunEntry

Qrels = Mapping[tuple[str, str], int]


def read_qrels(path) -> dict[tuple[str, str], int]:
    """Parse `query_id 0 doc_id grade` lines; duplicate pairs are an error."""
    qrels: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise EvaluationError(f"{path}:{lineno}: expected 4 whitespace-separated fields")
            qid, _, doc_id, grade = parts
            key = (qid, doc_id)
            if key in qrels:
                raise EvaluationError(f"{path}:{lineno}: duplicate qrels pair {key}")
            qrels[key] = int(grade)
    return qrels


def _query_grades(query_id: str, qrels: Qrels) -> dict[str, int]:
    return {doc: grade for (qid, doc), grade in qrels.items() if qid == query_id}


def _require_relevant(grades: dict[str, int], query_id: str) -> dict[str, int]:
    relevant = {d: g for d, g in grades.items() if g > 0}
    if not relevant:
        raise EvaluationError(f"query {query_id!r} has no relevant documents")
    return relevant


def average_precision(entries: Sequence[RunEntry], qrels: Qrels, cutoff: int = 1000) -> float:
    """AP over the top-cutoff: (1/R) * sum of P@k at relevant ranks k.

    R counts all judged-relevant documents for the query, retrieved or not.
    """
    query_id = entries[0].query_id if entries else ""
    grades = _query_grades(query_id, qrels) if entries else {}
    relevant = _require_relevant(grades, query_id)
    hits = 0
    total = 0.0
    for k, entry in enumerate(entries[:cutoff], start=1):
        if grades.get(entry.doc_id, 0) > 0:
            hits += 1
            total += hits / k
    return total / len(relevant)


def ndcg_at(entries: Sequence[RunEntry], qrels: Qrels, k: int = 100) -> float:
    """NDCG@k with gain 2^grade - 1 and discount log2(rank + 1)."""
    query_id = entries[0].query_id if entries else ""
    if entries:
        grades = _query_grades(query_id, qrels)
        _require_relevant(grades, query_id)
    else:
        return 0.0
    dcg = 0.0
    for rank, entry in enumerate(entries[:k], start=1):
        gain = 2 ** grades.get(entry.doc_id, 0) - 1
        dcg += gain / math.log2(rank + 1)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    idcg = sum((2**g - 1) / math.log2(r + 1) for r, g in enumerate(ideal, start=1))
    return dcg / idcg


def precision_at(entries: Sequence[RunEntry], qrels: Qrels, k: int) -> float:
    """Fraction of the top-k ranks holding a relevant document."""
    query_id = entries[0].query_id if entries else ""
    grades = _query_grades(query_id, qrels) if entries else {}
    if entries:
        _require_relevant(grades, query_id)
    hits = sum(1 for e in entries[:k] if grades.get(e.doc_id, 0) > 0)
    return hits / k


def reciprocal_rank(entries: Sequence[RunEntry], qrels: Qrels) -> float:
    """1 / rank of the first relevant document; 0 if none is retrieved."""
    query_id = entries[0].query_id if entries else ""
    grades = _query_grades(query_id, qrels) if entries else {}
    if entries:
        _require_relevant(grades, query_id)
    for e in entries:
        if grades.get(e.doc_id, 0) > 0:
            return 1.0 / e.rank
    return 0.0


def parse_metric(name: str):
    """Resolve a metric name like "map", "ndcg@100", "p@10" or "mrr"."""
    name = name.strip().lower()
    base, _, depth = name.partition("@")
    k = int(depth) if depth else None
    if base == "map":
        return lambda entries, qrels: average_precision(entries, qrels, cutoff=k or 1000)
    if base == "ndcg":
        return lambda entries, qrels: ndcg_at(entries, qrels, k=k or 100)
    if base == "p":
        if k is None:
            raise EvaluationError("precision requires a depth, e.g. p@10")
        return lambda entries, qrels: precision_at(entries, qrels, k=k)
    if base == "mrr":
        return reciprocal_rank
    raise EvaluationError(f"unknown metric {name!r}")


def evaluate_run(
    run: Mapping[str, Sequence[RunEntry]],
    qrels: Qrels,
    metrics: Sequence[str] = ("map", "ndcg@100", "p@10", "mrr"),
) -> dict[str, float]:
    """Mean of each metric over evaluable queries.

    Queries with no relevant document in the qrels are excluded with a
    warning; queries present in the qrels but missing from the run score
    zero.
    """
    relevant_queries = sorted({qid for (qid, _), g in qrels.items() if g > 0})
    skipped = sorted(set(run) - set(relevant_queries))
    for qid in skipped:
        warnings.warn(f"query {qid!r} has no relevant documents; excluded", stacklevel=2)
    if not relevant_queries:
        raise EvaluationError("qrels contain no relevant documents")

    fns = {name: parse_metric(name) for name in metrics}
    means: dict[str, float] = {}
    for name, fn in fns.items():
        total = 0.0
        for qid in relevant_queries:
            entries = run.get(qid, [])
            total += fn(entries, qrels) if entries else 0.0
        means[name] = total / len(relevant_queries)
    return means
