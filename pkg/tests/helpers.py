"""Shared test utilities: independent reference oracles, a finite-difference
gradient checker, and synthetic corpus/instance builders.

The reference implementations here deliberately use plain Python loops and
the math module so they share no code path with the package internals they
check.
"""

from __future__ import annotations

import math

import numpy as np

from vsir.corpus import Batch
from vsir.params import ModelParams, glorot_init

# --- gradient checking -------------------------------------------------------


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Per-tensor max relative error: ||a - n||_inf over the tensor scale."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def finite_difference_grads(loss_fn, tensors: dict[str, np.ndarray], h: float = 1e-3):
    """Central finite differences of loss_fn() w.r.t. every tensor element.

    Tensors are perturbed in place and restored; they must be float64 for
    the differences to resolve below the target tolerance.
    """
    grads = {}
    for name, tensor in tensors.items():
        grad = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + h
            f_plus = loss_fn()
            tensor[idx] = orig - h
            f_minus = loss_fn()
            tensor[idx] = orig
            grad[idx] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = grad
    return grads


# --- random tiny instances ---------------------------------------------------

# Finite differences are invalid where a hard-tanh input sits within the
# probe distance of the clamp boundary; instances that close are redrawn.
KINK_MARGIN = 0.01


def _nvsm_pre_activation(params: ModelParams, batch: Batch) -> np.ndarray:
    we = params.tensors["word_emb"]
    avg = we[batch.ngrams].mean(axis=1)
    unit = avg / np.linalg.norm(avg, axis=1, keepdims=True)
    raw = unit @ params.tensors["transform"].T
    xhat = (raw - raw.mean(0)) / np.sqrt(raw.var(0) + 1e-6)
    return xhat + params.tensors["beta"]


def make_nvsm_instance(seed: int, dtype=np.float64):
    rng = np.random.default_rng(seed)
    n_vocab, n_docs, kw, kd, n, m, z = 20, 10, 8, 4, 3, 4, 2
    tensors = {
        "word_emb": glorot_init(n_vocab, kw, rng, dtype),
        "doc_emb": glorot_init(n_docs, kd, rng, dtype),
        "transform": glorot_init(kd, kw, rng, dtype),
        "beta": rng.normal(0.0, 0.1, kd).astype(dtype),
    }
    params = ModelParams("nvsm", tensors, {}, "", tuple(f"d{i}" for i in range(n_docs)))
    batch = Batch(
        ngrams=rng.integers(n_vocab, size=(m, n)).astype(np.int32),
        targets=rng.integers(n_docs, size=m).astype(np.int64),
    )
    negatives = rng.integers(n_docs, size=(m, z))
    return params, batch, negatives


def nvsm_instances_clear_of_kinks(count: int, base_seed: int = 0):
    """First `count` seeded NVSM instances whose hard-tanh inputs keep a
    safe distance from the clamp boundary (finite differences straddling
    the kink would not estimate a derivative)."""
    out = []
    seed = base_seed
    while len(out) < count:
        params, batch, negatives = make_nvsm_instance(seed)
        if np.min(np.abs(np.abs(_nvsm_pre_activation(params, batch)) - 1.0)) > KINK_MARGIN:
            out.append((seed, params, batch, negatives))
        seed += 1
    return out


def make_lse_instance(seed: int, dtype=np.float64):
    rng = np.random.default_rng(seed)
    n_vocab, n_entities, kw, kd, n, m, z = 20, 10, 8, 4, 3, 4, 2
    tensors = {
        "word_emb": glorot_init(n_vocab, kw, rng, dtype),
        "entity_emb": glorot_init(n_entities, kd, rng, dtype),
        "transform": glorot_init(kd, kw, rng, dtype),
        "bias": rng.normal(0.0, 0.1, kd).astype(dtype),
    }
    params = ModelParams("lse", tensors, {}, "", tuple(f"e{i}" for i in range(n_entities)))
    batch = Batch(
        ngrams=rng.integers(n_vocab, size=(m, n)).astype(np.int32),
        targets=rng.integers(n_entities, size=m).astype(np.int64),
    )
    negatives = rng.integers(n_entities, size=(m, z))
    return params, batch, negatives


def make_loglinear_instance(seed: int, dtype=np.float64):
    rng = np.random.default_rng(seed)
    n_vocab, n_cands, k, n, m, n_docs = 12, 5, 4, 3, 4, 6
    tensors = {
        "word_emb": glorot_init(n_vocab, k, rng, dtype),
        "cand_mat": glorot_init(n_cands, k, rng, dtype),
        "cand_bias": rng.normal(0.0, 0.1, n_cands).astype(dtype),
    }
    params = ModelParams("loglinear", tensors, {}, "", tuple(f"c{i}" for i in range(n_cands)))
    batch = Batch(
        ngrams=rng.integers(n_vocab, size=(m, n)).astype(np.int32),
        targets=rng.integers(n_docs, size=m).astype(np.int64),
    )
    targets = np.zeros((n_docs, n_cands))
    for d in range(n_docs):
        chosen = rng.choice(n_cands, size=int(rng.integers(1, 3)), replace=False)
        targets[d, chosen] = 1.0 / len(chosen)
    weights = rng.uniform(1.0, 3.0, n_docs)
    return params, batch, targets, weights


# --- arithmetic reference implementations ------------------------------------


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def ref_nvsm_instance_log_prob(pos, negs, proj, doc_emb) -> float:
    z = len(negs)
    p_pos = _sigmoid(sum(a * b for a, b in zip(doc_emb[pos], proj)))
    total = z * math.log(p_pos)
    for k in negs:
        p_neg = _sigmoid(sum(a * b for a, b in zip(doc_emb[k], proj)))
        total += math.log(1.0 - p_neg)
    return (z + 1) / (2.0 * z) * total


def ref_lse_instance_log_prob(pos, negs, proj, entity_emb) -> float:
    p_pos = _sigmoid(sum(a * b for a, b in zip(entity_emb[pos], proj)))
    total = math.log(p_pos)
    for k in negs:
        p_neg = _sigmoid(sum(a * b for a, b in zip(entity_emb[k], proj)))
        total += math.log(1.0 - p_neg)
    return total


def ref_normalized_entropy(probs) -> float:
    h = 0.0
    for p in probs:
        if p > 0:
            h -= p * math.log(p)
    return h / math.log(len(probs))


def ref_rr_fusion(ranking_a, ranking_b):
    """Score every universe candidate, then sort (desc score, asc id)."""
    universe = sorted(set(ranking_a) | set(ranking_b))
    default = len(universe) + 1
    scores = {}
    for cand in universe:
        ra = ranking_a.index(cand) + 1 if cand in ranking_a else default
        rb = ranking_b.index(cand) + 1 if cand in ranking_b else default
        scores[cand] = (1.0 / ra) * (1.0 / rb)
    return sorted(universe, key=lambda c: (-scores[c], c)), scores


def ref_standardized_sum(score_rows, pools):
    """Fused scores: sum over models of (score - mean) / sample std, where
    the statistics come from each model's own pool."""
    n_docs = len(score_rows[0])
    fused = [0.0] * n_docs
    for scores, pool in zip(score_rows, pools):
        pooled = [scores[i] for i in pool]
        mean = sum(pooled) / len(pooled)
        var = sum((s - mean) ** 2 for s in pooled) / (len(pooled) - 1)
        std = math.sqrt(var)
        if std == 0.0:
            continue
        for i in range(n_docs):
            fused[i] += (scores[i] - mean) / std
    return fused


def ref_average_precision(ranked_ids, grades, cutoff=1000) -> float:
    relevant = {d for d, g in grades.items() if g > 0}
    hits = 0
    total = 0.0
    for k, doc in enumerate(ranked_ids[:cutoff], start=1):
        if doc in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def ref_ndcg(ranked_ids, grades, k=100) -> float:
    dcg = 0.0
    for rank, doc in enumerate(ranked_ids[:k], start=1):
        dcg += (2 ** grades.get(doc, 0) - 1) / math.log2(rank + 1)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    idcg = sum((2**g - 1) / math.log2(r + 1) for r, g in enumerate(ideal, start=1))
    return dcg / idcg


def ref_precision_at(ranked_ids, grades, k) -> float:
    return sum(1 for doc in ranked_ids[:k] if grades.get(doc, 0) > 0) / k


def ref_reciprocal_rank(ranked_ids, grades) -> float:
    for rank, doc in enumerate(ranked_ids, start=1):
        if grades.get(doc, 0) > 0:
            return 1.0 / rank
    return 0.0


# --- synthetic corpora -------------------------------------------------------


def topic_documents(rng, n_topics=3, docs_per_topic=20, doc_len=50, words_per_topic=25):
    """Disjoint per-topic vocabularies; each document draws uniformly from
    its own topic's words.  Returns (documents, topic word lists)."""
    topic_words = [[f"t{t}w{j}" for j in range(words_per_topic)] for t in range(n_topics)]
    docs = []
    for t in range(n_topics):
        for d in range(docs_per_topic):
            words = [topic_words[t][rng.integers(words_per_topic)] for _ in range(doc_len)]
            docs.append((f"t{t}d{d}", words))
    return docs, topic_words


def zipf_topic_documents(
    rng,
    n_words=500,
    n_docs=300,
    doc_len=120,
    n_background=125,
    n_topics=15,
    p_background=0.55,
):
    """Corpus whose collection frequencies are banded by construction.

    The top quarter of words forms a shared background drawn uniformly in
    every document (frequent, non-discriminative); the rest partition into
    per-topic vocabularies with a within-topic Zipf profile (discriminative
    mid-frequency words tailing into rare ones).
    """
    words = [f"w{i:03d}" for i in range(n_words)]
    members = [list(range(n_background + t, n_words, n_topics)) for t in range(n_topics)]
    topic_probs = []
    for group in members:
        w = 1.0 / (np.arange(1, len(group) + 1) ** 1.0)
        topic_probs.append(w / w.sum())
    docs = []
    for d in range(n_docs):
        t = d % n_topics
        toks = []
        for _ in range(doc_len):
            if rng.random() < p_background:
                toks.append(words[rng.integers(n_background)])
            else:
                toks.append(words[members[t][rng.choice(len(members[t]), p=topic_probs[t])]])
        docs.append((f"d{d:03d}", toks))
    return docs
