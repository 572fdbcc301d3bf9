"""Log-linear candidate model: per-word posteriors, query aggregation,
cross-entropy training, entropy diagnostics and reciprocal-rank fusion.

A single word induces a softmax posterior over candidates; a word sequence
combines per-word posteriors in log space under conditional independence.
Training matches the aggregated n-gram posterior against the uniform
distribution over the source document's associated candidates.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .corpus import (
    Batch,
    EncodedCorpus,
    Vocabulary,
    batches_per_epoch,
    sample_batch,
    vocabulary_digest,
)
from .errors import CorpusError, EmptyQueryError, EvaluationError, GradientError, OovQueryError
from .ops import log_softmax, softmax
from .params import AdamState, ModelParams, TrainConfig, adam_step, glorot_init


def word_posterior(word_id: int, params: ModelParams) -> np.ndarray:
    """P(candidate | word): softmax(cand_mat @ word_vec + cand_bias)."""
    logits = params.tensors["cand_mat"] @ params.tensors["word_emb"][word_id] + params.tensors["cand_bias"]
    return softmax(logits)


def query_posterior(word_ids: Sequence[int], params: ModelParams) -> np.ndarray:
    """P(candidate | words) via the log-space product of per-word posteriors.

    Ranking by this vector equals ranking by the unnormalized sum of
    per-word log posteriors.

    Raises:
        OovQueryError: if no word ids remain after vocabulary lookup.
    """
    ids = np.asarray(word_ids)
    if ids.size == 0:
        raise OovQueryError("no query token is in the vocabulary")
    logits = params.tensors["word_emb"][ids] @ params.tensors["cand_mat"].T + params.tensors["cand_bias"]
    log_posts = log_softmax(logits, axis=1)  # (len, |C|)
    return softmax(log_posts.sum(axis=0))


def posterior_for_tokens(tokens: Sequence[str], params: ModelParams, vocab: Vocabulary) -> np.ndarray:
    """Tokenized-query convenience wrapper around :func:`query_posterior`."""
    if len(tokens) == 0:
        raise EmptyQueryError("query has no tokens")
    return query_posterior(vocab.encode_tokens(tokens), params)


def target_distributions(corpus: EncodedCorpus) -> np.ndarray:
    """Per-document ideal candidate distribution, uniform over candidates(d).

    Rows for documents without associations are all-zero; such documents
    must be filtered out before training.
    """
    if corpus.associations is None:
        raise CorpusError("corpus has no candidate associations")
    n_cands = len(corpus.entity_ids)
    targets = np.zeros((len(corpus), n_cands))
    for d, cands in enumerate(corpus.doc_candidates()):
        if cands:
            targets[d, cands] = 1.0 / len(cands)
    return targets


def length_weights(corpus: EncodedCorpus) -> np.ndarray:
    """Per-document weight |d_max| / |d| over encoded token counts.

    Fixed before training from the full collection; empty documents get
    weight zero (they are never sampled).
    """
    lengths = np.array([len(doc) for doc in corpus.docs], dtype=np.float64)
    d_max = lengths.max()
    weights = np.zeros_like(lengths)
    nonzero = lengths > 0
    weights[nonzero] = d_max / lengths[nonzero]
    return weights


def loss_and_grads(
    batch: Batch,
    params: ModelParams,
    weight_decay: float,
    targets: np.ndarray,
    doc_weights: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Length-weighted cross-entropy loss and analytic gradients.

    Loss: (1/m) sum_i w_i * H(p_i, p_hat_i) + (weight_decay / 2m) *
    (sum word_emb^2 + sum cand_mat^2); the candidate bias is not
    regularized.  Batch targets are source-document indices into
    ``targets`` (rows must be valid distributions) and ``doc_weights``.

    Raises:
        CorpusError: if an n-gram's source document has no candidates.
    """
    word_emb = params.tensors["word_emb"]
    cand_mat = params.tensors["cand_mat"]
    cand_bias = params.tensors["cand_bias"]

    ngrams = batch.ngrams
    docs = batch.targets
    m, n = ngrams.shape

    p = targets[docs]  # (m, |C|)
    if np.any(p.sum(axis=1) == 0):
        raise CorpusError("batch contains an n-gram from an unassociated document")
    w = doc_weights[docs]  # (m,)

    vecs = word_emb[ngrams]  # (m, n, k)
    logits = vecs @ cand_mat.T + cand_bias  # (m, n, |C|)
    log_posts = log_softmax(logits, axis=2)
    ell = log_posts.sum(axis=1)  # (m, |C|)
    log_phat = log_softmax(ell, axis=1)
    phat = np.exp(log_phat)

    cross_entropy = -np.einsum("ic,ic->i", p, log_phat)
    data_loss = float(np.mean(w * cross_entropy, dtype=np.float64))
    reg = (weight_decay / (2.0 * m)) * float(
        np.sum(np.square(word_emb), dtype=np.float64)
        + np.sum(np.square(cand_mat), dtype=np.float64)
    )
    loss = data_loss + reg
    if not np.isfinite(loss):
        raise GradientError("non-finite batch loss")

    # d(loss)/d(logits of word j in instance i) = (w_i/m)(phat_i - p_i),
    # identical for every word position in the n-gram.
    d_logit = (w / m)[:, None] * (phat - p)  # (m, |C|)

    grad_bias = n * d_logit.sum(axis=0)
    grad_cand = d_logit.T @ vecs.sum(axis=1)  # (|C|, k)
    d_vec = d_logit @ cand_mat  # (m, k), per word occurrence

    grad_word = np.zeros_like(word_emb)
    np.add.at(grad_word, ngrams.reshape(-1), np.repeat(d_vec, n, axis=0))

    decay = weight_decay / m
    grad_word += decay * word_emb
    grad_cand += decay * cand_mat

    return loss, {"word_emb": grad_word, "cand_mat": grad_cand, "cand_bias": grad_bias}


def init_params(
    vocab_size: int,
    n_candidates: int,
    config: TrainConfig,
    rng: np.random.Generator,
    vocab_hash: str,
    object_ids: Sequence[str],
) -> ModelParams:
    tensors = {
        "word_emb": glorot_init(vocab_size, config.word_dim, rng),
        "cand_mat": glorot_init(n_candidates, config.word_dim, rng),
        "cand_bias": np.zeros(n_candidates, dtype=np.float32),
    }
    hyperparams = {
        "window": config.window,
        "word_dim": config.word_dim,
        "weight_decay": config.weight_decay,
        "epochs": config.epochs,
        "seed": config.seed,
        "non_overlapping": config.non_overlapping,
    }
    return ModelParams(
        kind="loglinear",
        tensors=tensors,
        hyperparams=hyperparams,
        vocab_hash=vocab_hash,
        object_ids=tuple(object_ids),
    )


def _associated_view(corpus: EncodedCorpus) -> tuple[EncodedCorpus, np.ndarray]:
    """Restrict a corpus to documents that have candidate associations.

    Returns the filtered corpus plus the mapping from filtered document
    index back to the original index.
    """
    cands = corpus.doc_candidates()
    keep = [d for d, c in enumerate(cands) if c]
    if not keep:
        raise CorpusError("no document has candidate associations")
    index_map = {d: i for i, d in enumerate(keep)}
    assoc = {
        obj: frozenset(index_map[d] for d in idxs if d in index_map)
        for obj, idxs in corpus.associations.items()
    }
    view = EncodedCorpus(
        docs=tuple(corpus.docs[d] for d in keep),
        doc_ids=tuple(corpus.doc_ids[d] for d in keep),
        vocab_size=corpus.vocab_size,
        associations=assoc,
    )
    return view, np.asarray(keep)


def train_loglinear(
    corpus: EncodedCorpus,
    config: TrainConfig,
    vocab: Vocabulary | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[ModelParams, list[float]]:
    """Train the log-linear model; returns final parameters and per-epoch
    mean losses.

    N-grams are sampled only from documents that have associated
    candidates; the document-length weights come from the full collection.
    """
    if corpus.associations is None or not corpus.associations:
        raise CorpusError("log-linear training requires candidate associations")
    view, original_index = _associated_view(corpus)

    rng = np.random.default_rng(config.seed)
    vocab_hash = vocabulary_digest(vocab) if vocab is not None else ""
    cand_ids = corpus.entity_ids
    params = init_params(corpus.vocab_size, len(cand_ids), config, rng, vocab_hash, cand_ids)
    state = AdamState.for_tensors(params.tensors, alpha=config.learning_rate)

    targets = target_distributions(corpus)
    weights = length_weights(corpus)
    n_batches = batches_per_epoch(view, config.window, config.batch_size)

    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        total = 0.0
        for b in range(n_batches):
            batch = sample_batch(view, config.window, config.batch_size, rng, stride=config.stride)
            batch = Batch(ngrams=batch.ngrams, targets=original_index[batch.targets])
            try:
                loss, grads = loss_and_grads(batch, params, config.weight_decay, targets, weights)
            except GradientError as exc:
                raise GradientError(f"epoch {epoch}, batch {b}: {exc}") from exc
            adam_step(params.tensors, grads, state)
            total += loss
        mean_loss = total / max(n_batches, 1)
        epoch_losses.append(mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return params, epoch_losses


def normalized_entropy(probs: Sequence[float]) -> float:
    """Shannon entropy of a candidate distribution divided by log |C|.

    Zero for a one-hot distribution, one for the uniform distribution;
    0 * log 0 is treated as 0.

    Raises:
        EvaluationError: if |C| < 2, any probability is negative, or the
            vector does not sum to 1 within 1e-6.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.size < 2:
        raise EvaluationError("normalized entropy needs at least 2 candidates")
    if np.any(p < 0):
        raise EvaluationError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise EvaluationError("probabilities must sum to 1 within 1e-6")
    nonzero = p[p > 0]
    return float(-(nonzero * np.log(nonzero)).sum() / math.log(p.size))


def reciprocal_rank_ensemble(
    ranking_a: Sequence[str],
    ranking_b: Sequence[str],
) -> list[tuple[str, float]]:
    """Fuse two rankings of one query by the product of reciprocal ranks.

    The candidate universe is the union of both rankings; a candidate
    missing from one ranking is treated as ranked at (universe size + 1)
    in it.  Output is sorted by descending 1/(rank_a * rank_b) with ties
    broken by ascending candidate id.
    """
    universe = sorted(set(ranking_a) | set(ranking_b))
    default = len(universe) + 1
    rank_a = {c: r for r, c in enumerate(ranking_a, start=1)}
    rank_b = {c: r for r, c in enumerate(ranking_b, start=1)}
    scored = [
        (c, 1.0 / (rank_a.get(c, default) * rank_b.get(c, default)))
        for c in universe
    ]
    scored.sort(key=lambda cs: (-cs[1], cs[0]))
    return scored
