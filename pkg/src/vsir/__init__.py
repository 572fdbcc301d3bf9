"""Unsupervised latent vector space models for document and entity retrieval.

Trains three model families over tokenized collections by gradient
descent, ranks documents or entities against projected textual queries,
fuses models into ensembles, and evaluates rankings with standard
rank-based metrics.
"""

from .corpus import (
    Batch,
    EncodedCorpus,
    Vocabulary,
    batches_per_epoch,
    build_vocabulary,
    encode,
    ngrams_per_entity,
    sample_batch,
    sample_entity_batch,
    tokenize,
)
from .params import AdamState, ModelParams, TrainConfig, adam_step, glorot_init, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Batch",
    "EncodedCorpus",
    "ModelParams",
    "TrainConfig",
    "Vocabulary",
    "adam_step",
    "batches_per_epoch",
    "build_vocabulary",
    "encode",
    "glorot_init",
    "load_model",
    "ngrams_per_entity",
    "sample_batch",
    "sample_entity_batch",
    "save_model",
    "tokenize",
    "__version__",
]
