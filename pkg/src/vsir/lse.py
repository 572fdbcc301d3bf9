"""Latent semantic entities model.

Word sequences project into entity space through a smooth affine map,
h(s) = tanh(W * mean_embedding(s) + b), and entities are ranked by cosine
similarity against h(query).  Training discriminates the associated entity
from uniformly sampled contrastive entities; unlike the NVSM objective
there is no batch standardization and no reweighting of the positive term.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .corpus import (
    Batch,
    EncodedCorpus,
    Vocabulary,
    batches_per_epoch,
    sample_entity_batch,
    vocabulary_digest,
)
from .errors import CorpusError, EmptyQueryError, GradientError, OovQueryError, ZeroVectorError
from .ops import log_sigmoid, sigmoid
from .params import AdamState, ModelParams, TrainConfig, adam_step, glorot_init


def lse_project(token_ids: Sequence[int], params: ModelParams) -> np.ndarray:
    """tanh(W * mean(word embeddings) + b); components strictly in (-1, 1)."""
    ids = np.asarray(token_ids)
    if ids.size == 0:
        raise ValueError("token sequence must be nonempty")
    avg = params.tensors["word_emb"][ids].mean(axis=0)
    return np.tanh(params.tensors["transform"] @ avg + params.tensors["bias"])


def lse_instance_log_prob(
    pos_entity: int,
    neg_entities: Sequence[int],
    proj: np.ndarray,
    entity_emb: np.ndarray,
) -> float:
    """log P(pos) + sum_k log(1 - P(neg_k)) without positive reweighting."""
    if len(neg_entities) < 1:
        raise ValueError("need at least one negative example")
    a_pos = float(np.dot(entity_emb[pos_entity], proj))
    a_neg = entity_emb[np.asarray(neg_entities)] @ proj
    return float(log_sigmoid(a_pos)) + float(np.sum(log_sigmoid(-a_neg)))


def loss_and_grads(
    batch: Batch,
    params: ModelParams,
    negatives: np.ndarray,
    weight_decay: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and analytic gradients with explicit negatives.

    Loss: -(1/m) sum lse_instance_log_prob + (weight_decay / 2m) *
    (sum word_emb^2 + sum entity_emb^2 + sum transform^2); the bias vector
    is not regularized.
    """
    word_emb = params.tensors["word_emb"]
    entity_emb = params.tensors["entity_emb"]
    weight = params.tensors["transform"]
    bias = params.tensors["bias"]

    ngrams = batch.ngrams
    pos = batch.targets
    m, n = ngrams.shape
    if negatives.shape[0] != m:
        raise ValueError("negatives rows must match batch size")

    avg = word_emb[ngrams].mean(axis=1)  # (m, kw)
    pre = avg @ weight.T + bias
    proj = np.tanh(pre)  # (m, kd)

    a_pos = np.einsum("ij,ij->i", entity_emb[pos], proj)
    a_neg = np.einsum("izj,ij->iz", entity_emb[negatives], proj)

    log_probs = log_sigmoid(a_pos) + log_sigmoid(-a_neg).sum(axis=1)
    data_loss = -float(np.mean(log_probs, dtype=np.float64))
    reg = (weight_decay / (2.0 * m)) * float(
        np.sum(np.square(word_emb), dtype=np.float64)
        + np.sum(np.square(entity_emb), dtype=np.float64)
        + np.sum(np.square(weight), dtype=np.float64)
    )
    loss = data_loss + reg
    if not np.isfinite(loss):
        raise GradientError("non-finite batch loss")

    d_pos = -(1.0 / m) * (1.0 - sigmoid(a_pos))
    d_neg = (1.0 / m) * sigmoid(a_neg)

    grad_entity = np.zeros_like(entity_emb)
    np.add.at(grad_entity, pos, d_pos[:, None] * proj)
    np.add.at(
        grad_entity,
        negatives.reshape(-1),
        (d_neg[:, :, None] * proj[:, None, :]).reshape(-1, proj.shape[1]),
    )

    d_proj = d_pos[:, None] * entity_emb[pos] + np.einsum("iz,izj->ij", d_neg, entity_emb[negatives])
    d_pre = d_proj * (1.0 - np.square(proj))

    grad_bias = d_pre.sum(axis=0)
    grad_weight = d_pre.T @ avg
    d_avg = d_pre @ weight

    grad_word = np.zeros_like(word_emb)
    np.add.at(grad_word, ngrams.reshape(-1), np.repeat(d_avg / n, n, axis=0))

    decay = weight_decay / m
    grad_word += decay * word_emb
    grad_entity += decay * entity_emb
    grad_weight += decay * weight

    return loss, {
        "word_emb": grad_word,
        "entity_emb": grad_entity,
        "transform": grad_weight,
        "bias": grad_bias,
    }


def lse_batch_loss(
    batch: Batch,
    params: ModelParams,
    num_negatives: int,
    weight_decay: float,
    rng: np.random.Generator,
) -> tuple[float, dict[str, np.ndarray]]:
    """Sample negatives uniformly over entities, then compute loss/grads."""
    n_entities = params.tensors["entity_emb"].shape[0]
    negatives = rng.integers(n_entities, size=(batch.size, num_negatives))
    return loss_and_grads(batch, params, negatives, weight_decay)


def init_params(
    vocab_size: int,
    n_entities: int,
    config: TrainConfig,
    rng: np.random.Generator,
    vocab_hash: str,
    object_ids: Sequence[str],
) -> ModelParams:
    tensors = {
        "word_emb": glorot_init(vocab_size, config.word_dim, rng),
        "entity_emb": glorot_init(n_entities, config.object_dim, rng),
        "transform": glorot_init(config.object_dim, config.word_dim, rng),
        "bias": np.zeros(config.object_dim, dtype=np.float32),
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
        kind="lse",
        tensors=tensors,
        hyperparams=hyperparams,
        vocab_hash=vocab_hash,
        object_ids=tuple(object_ids),
    )


def train_lse(
    corpus: EncodedCorpus,
    config: TrainConfig,
    vocab: Vocabulary | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[ModelParams, list[float]]:
    """Train an LSE over entity-associated documents; returns final
    parameters and per-epoch mean losses."""
    if corpus.associations is None or not corpus.associations:
        raise CorpusError("LSE training requires entity associations")
    rng = np.random.default_rng(config.seed)
    vocab_hash = vocabulary_digest(vocab) if vocab is not None else ""
    entity_ids = corpus.entity_ids
    params = init_params(corpus.vocab_size, len(entity_ids), config, rng, vocab_hash, entity_ids)
    state = AdamState.for_tensors(params.tensors, alpha=config.learning_rate)
    n_batches = batches_per_epoch(corpus, config.window, config.batch_size)

    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        total = 0.0
        for b in range(n_batches):
            batch = sample_entity_batch(
                corpus, config.window, config.batch_size, rng, stride=config.stride
            )
            try:
                loss, grads = lse_batch_loss(
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


def project_query(tokens: Sequence[str], params: ModelParams, vocab: Vocabulary) -> np.ndarray:
    """Encode and project a textual query into entity space."""
    if len(tokens) == 0:
        raise EmptyQueryError("query has no tokens")
    ids = vocab.encode_tokens(tokens)
    if not ids:
        raise OovQueryError("no query token is in the vocabulary")
    return lse_project(ids, params)


def rank_entities(
    tokens: Sequence[str],
    params: ModelParams,
    vocab: Vocabulary,
    cutoff: int = 1000,
) -> list[tuple[int, float]]:
    """Entities sorted by descending cosine similarity to the projected query.

    Ties break by ascending entity index; the list is truncated at cutoff.
    """
    query = project_query(tokens, params, vocab)
    entity_emb = params.tensors["entity_emb"]
    qn = np.linalg.norm(query)
    norms = np.linalg.norm(entity_emb, axis=1)
    if qn == 0.0 or np.any(norms == 0.0):
        raise ZeroVectorError("cosine ranking requires nonzero representations")
    scores = (entity_emb @ query) / (norms * qn)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [(i, float(scores[i])) for i in order[:cutoff]]
