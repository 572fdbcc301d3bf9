"""Neural vector space model: forward pass, NCE objective, gradients, training.

The training projection of an n-gram is transform(l2_normalize(mean of
word embeddings)), standardized per feature over the batch, shifted by a
learned frequency bias and clamped by hard-tanh.  The model maximizes the
similarity between that projection and the source document's embedding
against uniformly sampled contrastive documents.  At inference a query is
projected by transform(mean embedding) alone and documents are ranked by
cosine similarity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import Batch, EncodedCorpus, Vocabulary, batches_per_epoch, sample_batch, vocabulary_digest
from .errors import EmptyQueryError, GradientError, OovQueryError
from .ops import cosine, hard_tanh, l2_normalize, log_sigmoid, sigmoid
from .params import AdamState, ModelParams, TrainConfig, adam_step, glorot_init

STD_EPS = 1e-6  # guards the standardization denominator at zero variance


def compose_average(ngram_ids: Sequence[int], word_emb: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the embedding rows selected by an n-gram."""
    ids = np.asarray(ngram_ids)
    if ids.size == 0:
        raise ValueError("ngram must be nonempty")
    return word_emb[ids].mean(axis=0)


def transform(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Linear map from word feature space to document feature space."""
    return weight @ x


def raw_project(ngram_ids: Sequence[int], params: ModelParams) -> np.ndarray:
    """Non-standardized projection: transform(normalize(mean embedding))."""
    avg = compose_average(ngram_ids, params.tensors["word_emb"])
    return transform(l2_normalize(avg), params.tensors["transform"])


@dataclass(frozen=True)
class ProjectedBatch:
    """Raw and standardized projections of one batch plus its statistics."""

    raw: np.ndarray  # (m, doc_dim)
    standardized: np.ndarray  # (m, doc_dim), in [-1, 1]
    batch_mean: np.ndarray  # (doc_dim,)
    batch_var: np.ndarray  # (doc_dim,) population variance


def standardize_activate(raw: np.ndarray, beta: np.ndarray) -> ProjectedBatch:
    """Per-feature batch standardization, bias shift, then hard-tanh.

    Statistics use the population convention (divisor m).  A small epsilon
    under the square root keeps zero-variance features finite, mapping a
    constant column to zeros before the bias shift.
    """
    if raw.shape[0] < 2:
        raise ValueError("standardization needs at least 2 rows")
    mean = raw.mean(axis=0)
    var = raw.var(axis=0)
    standardized = hard_tanh((raw - mean) / np.sqrt(var + STD_EPS) + beta)
    return ProjectedBatch(raw=raw, standardized=standardized, batch_mean=mean, batch_var=var)


def nce_similarity(doc_rep: np.ndarray, proj: np.ndarray) -> float:
    """Probability that a document representation matches a projection."""
    return float(sigmoid(np.dot(doc_rep, proj)))


def instance_log_prob(
    pos_doc: int,
    neg_docs: Sequence[int],
    proj: np.ndarray,
    doc_emb: np.ndarray,
) -> float:
    """Contrastive log-probability of the true document for one n-gram.

    With z negatives:  ((z+1)/(2z)) * (z*log P(pos) + sum_k log(1-P(neg_k))).
    The (z+1)/(2z) reweighting removes the objective's dependence on the
    number of negatives.
    """
    z = len(neg_docs)
    if z < 1:
        raise ValueError("need at least one negative example")
    a_pos = float(np.dot(doc_emb[pos_doc], proj))
    a_neg = doc_emb[np.asarray(neg_docs)] @ proj
    # log(1 - sigmoid(a)) == log(sigmoid(-a))
    total = z * float(log_sigmoid(a_pos)) + float(np.sum(log_sigmoid(-a_neg)))
    return (z + 1) / (2.0 * z) * total


def loss_and_grads(
    batch: Batch,
    params: ModelParams,
    negatives: np.ndarray,
    weight_decay: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and analytic gradients with explicit negative samples.

    The loss is the negated batch mean of :func:`instance_log_prob` plus
    (weight_decay / 2m) * (sum word_emb^2 + sum doc_emb^2 + sum transform^2).
    Batch statistics are functions of the parameters, so the backward pass
    runs through the standardization (mean and variance included).

    Args:
        batch: Training batch; targets are positive document indices.
        params: NVSM parameters (any float dtype; gradients match it).
        negatives: (m, z) array of contrastive document indices.
        weight_decay: Regularization scalar.

    Returns:
        (loss, grads) where grads has entries for all four tensors.
    """
    word_emb = params.tensors["word_emb"]
    doc_emb = params.tensors["doc_emb"]
    weight = params.tensors["transform"]
    beta = params.tensors["beta"]

    ngrams = batch.ngrams
    pos = batch.targets
    m, n = ngrams.shape
    z = negatives.shape[1]
    if negatives.shape[0] != m:
        raise ValueError("negatives rows must match batch size")

    # forward
    avg = word_emb[ngrams].mean(axis=1)  # (m, kw)
    norms = np.linalg.norm(avg, axis=1)
    if np.any(norms == 0.0):
        raise GradientError("zero-norm n-gram composition in batch")
    unit = avg / norms[:, None]
    raw = unit @ weight.T  # (m, kd)
    mean = raw.mean(axis=0)
    var = raw.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + STD_EPS)
    xhat = (raw - mean) * inv_std
    pre_act = xhat + beta
    proj = hard_tanh(pre_act)  # (m, kd)

    a_pos = np.einsum("ij,ij->i", doc_emb[pos], proj)  # (m,)
    a_neg = np.einsum("izj,ij->iz", doc_emb[negatives], proj)  # (m, z)

    scale = (z + 1) / (2.0 * z)
    log_probs = scale * (z * log_sigmoid(a_pos) + log_sigmoid(-a_neg).sum(axis=1))
    data_loss = -float(np.mean(log_probs, dtype=np.float64))
    reg = (weight_decay / (2.0 * m)) * float(
        np.sum(np.square(word_emb), dtype=np.float64)
        + np.sum(np.square(doc_emb), dtype=np.float64)
        + np.sum(np.square(weight), dtype=np.float64)
    )
    loss = data_loss + reg
    if not np.isfinite(loss):
        raise GradientError("non-finite batch loss")

    # backward: d(loss)/d(score)
    d_pos = -(scale * z / m) * (1.0 - sigmoid(a_pos))  # (m,)
    d_neg = (scale / m) * sigmoid(a_neg)  # (m, z)

    grad_doc = np.zeros_like(doc_emb)
    np.add.at(grad_doc, pos, d_pos[:, None] * proj)
    np.add.at(
        grad_doc,
        negatives.reshape(-1),
        (d_neg[:, :, None] * proj[:, None, :]).reshape(-1, proj.shape[1]),
    )

    d_proj = d_pos[:, None] * doc_emb[pos] + np.einsum("iz,izj->ij", d_neg, doc_emb[negatives])

    # hard-tanh passes gradient only strictly inside the clamp
    d_pre = d_proj * (np.abs(pre_act) < 1.0)
    grad_beta = d_pre.sum(axis=0)

    # standardization backward (population variance, divisor m)
    d_xhat = d_pre
    d_raw = (inv_std / m) * (
        m * d_xhat - d_xhat.sum(axis=0) - xhat * (d_xhat * xhat).sum(axis=0)
    )

    grad_weight = d_raw.T @ unit
    d_unit = d_raw @ weight
    d_avg = (d_unit - np.einsum("ij,ij->i", d_unit, unit)[:, None] * unit) / norms[:, None]

    grad_word = np.zeros_like(word_emb)
    np.add.at(grad_word, ngrams.reshape(-1), np.repeat(d_avg / n, n, axis=0))

    decay = weight_decay / m
    grad_word += decay * word_emb
    grad_doc += decay * doc_emb
    grad_weight += decay * weight

    return loss, {
        "word_emb": grad_word,
        "doc_emb": grad_doc,
        "transform": grad_weight,
        "beta": grad_beta,
    }


def batch_loss(
    batch: Batch,
    params: ModelParams,
    num_negatives: int,
    weight_decay: float,
    rng: np.random.Generator,
) -> tuple[float, dict[str, np.ndarray]]:
    """Sample negatives uniformly over documents, then compute loss/grads."""
    n_docs = params.tensors["doc_emb"].shape[0]
    negatives = rng.integers(n_docs, size=(batch.size, num_negatives))
    return loss_and_grads(batch, params, negatives, weight_decay)


def init_params(
    vocab_size: int,
    n_docs: int,
    config: TrainConfig,
    rng: np.random.Generator,
    vocab_hash: str,
    object_ids: Sequence[str],
) -> ModelParams:
    tensors = {
        "word_emb": glorot_init(vocab_size, config.word_dim, rng),
        "doc_emb": glorot_init(n_docs, config.object_dim, rng),
        "transform": glorot_init(config.object_dim, config.word_dim, rng),
        "beta": np.zeros(config.object_dim, dtype=np.float32),
    }
    hyperparams = {
        "window": config.window,
        "word_dim": config.word_dim,
        "object_dim": config.object_dim,
        "num_negatives": config.num_negatives,
        "weight_decay": config.weight_decay,
        "epochs": config.epochs,
        "seed": config.seed,
    }
    return ModelParams(
        kind="nvsm",
        tensors=tensors,
        hyperparams=hyperparams,
        vocab_hash=vocab_hash,
        object_ids=tuple(object_ids),
    )


def train_nvsm(
    corpus: EncodedCorpus,
    config: TrainConfig,
    vocab: Vocabulary | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[ModelParams, list[float]]:
    """Train an NVSM over the corpus; returns final parameters and the
    per-epoch mean losses."""
    rng = np.random.default_rng(config.seed)
    vocab_hash = vocabulary_digest(vocab) if vocab is not None else ""
    params = init_params(corpus.vocab_size, len(corpus), config, rng, vocab_hash, corpus.doc_ids)
    state = AdamState.for_tensors(params.tensors, alpha=config.learning_rate)
    n_batches = batches_per_epoch(corpus, config.window, config.batch_size)

    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        total = 0.0
        for b in range(n_batches):
            batch = sample_batch(
                corpus, config.window, config.batch_size, rng, stride=config.stride
            )
            try:
                loss, grads = batch_loss(
                    batch, params, config.num_negatives, config.weight_decay, rng
                )
            except GradientError as exc:
                raise GradientError(f"epoch {epoch}, batch {b}: {exc}") from exc
            adam_step(params.tensors, grads, state)
            total += loss
        mean_loss = total / max(n_batches, 1)
        epoch_losses.append(mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return params, epoch_losses


def infer_query(tokens: Sequence[str], params: ModelParams, vocab: Vocabulary) -> np.ndarray:
    """Project query tokens to the document feature space.

    The inference map is transform(mean embedding): no normalization,
    no standardization, no bias, no hard-tanh.  Cosine scoring makes the
    dropped normalization irrelevant to the ranking.

    Raises:
        EmptyQueryError: the token list is empty.
        OovQueryError: no token is in the vocabulary.
    """
    if len(tokens) == 0:
        raise EmptyQueryError("query has no tokens")
    ids = vocab.encode_tokens(tokens)
    if not ids:
        raise OovQueryError("no query token is in the vocabulary")
    avg = compose_average(ids, params.tensors["word_emb"])
    return transform(avg, params.tensors["transform"])


def score(query_vec: np.ndarray, doc_rep: np.ndarray) -> float:
    """Cosine similarity between a projected query and a document row."""
    return cosine(query_vec, doc_rep)
