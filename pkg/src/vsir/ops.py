"""Small numerical building blocks shared by the model modules.

All functions preserve the dtype of their array inputs so the same code
path can run on float32 production tensors and on float64 shadow copies
used by gradient checks.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ZeroVectorError


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), elementwise."""
    return expit(x)


def log_sigmoid(x):
    """log(sigmoid(x)) computed as -log(1 + exp(-x)), stable for large |x|."""
    return -np.logaddexp(0.0, -np.asarray(x))


def hard_tanh(x):
    """Clamp values to the closed interval [-1, 1]."""
    return np.clip(x, -1.0, 1.0)


def l2_normalize(v):
    """Scale a vector to unit Euclidean norm.

    Raises:
        ZeroVectorError: if the input has zero norm; upstream this
            indicates a degenerate (e.g. all-identical-row) composition.
    """
    v = np.asarray(v)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVectorError("cannot L2-normalize a zero vector")
    return v / norm


def cosine(a, b):
    """Cosine similarity of two nonzero vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def softmax(logits, axis=-1):
    """Softmax with max-subtraction for numerical stability."""
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    """log(softmax(logits)), max-subtracted."""
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    return shifted - lse
