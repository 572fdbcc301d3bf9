"""Parameter containers, initialization, the Adam optimizer, and persistence.

Tensors are float32 row-major numpy arrays.  Scalar reductions accumulate
in float64; gradient tensors keep the dtype of the parameters so that
float64 shadow copies flow through the same code during gradient checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    GradientError,
    MagicMismatchError,
    TruncatedFileError,
)

MODEL_MAGIC = b"VSIRMDL1"

# Tensor names per model kind, in persisted order.
TENSOR_ORDER = {
    "nvsm": ("word_emb", "doc_emb", "transform", "beta"),
    "lse": ("word_emb", "entity_emb", "transform", "bias"),
    "loglinear": ("word_emb", "cand_mat", "cand_bias"),
}

ADAM_ALPHA = 0.001
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def glorot_init(rows: int, cols: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Uniform init in [-b, b] with b = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ConfigError("glorot_init requires rows, cols >= 1")
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)


@dataclass
class ModelParams:
    """Named parameter tensors for one model kind plus ranking metadata.

    Attributes:
        kind: One of "nvsm", "lse", "loglinear".
        tensors: Name -> float32 array, names per :data:`TENSOR_ORDER`.
        hyperparams: Scalars recorded at training time (window, dims, ...).
        vocab_hash: Digest of the vocabulary the model was trained against.
        object_ids: External ids of the ranked objects (documents for
            nvsm, entities for lse, candidates for loglinear), row-aligned
            with the object embedding tensor.
    """

    kind: str
    tensors: dict[str, np.ndarray]
    hyperparams: dict
    vocab_hash: str
    object_ids: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in TENSOR_ORDER:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        expected = set(TENSOR_ORDER[self.kind])
        if set(self.tensors) != expected:
            raise DimensionMismatchError(
                f"kind {self.kind!r} requires tensors {sorted(expected)}, "
                f"got {sorted(self.tensors)}"
            )
        self.object_ids = tuple(self.object_ids)
        self._check_dims()

    def _check_dims(self):
        t = self.tensors
        if self.kind == "nvsm":
            v, kw = t["word_emb"].shape
            d, kd = t["doc_emb"].shape
            if t["transform"].shape != (kd, kw):
                raise DimensionMismatchError("transform must be doc_dim x word_dim")
            if t["beta"].shape != (kd,):
                raise DimensionMismatchError("beta must be a doc_dim vector")
            n_objects = d
        elif self.kind == "lse":
            v, kw = t["word_emb"].shape
            x, kd = t["entity_emb"].shape
            if t["transform"].shape != (kd, kw):
                raise DimensionMismatchError("transform must be entity_dim x word_dim")
            if t["bias"].shape != (kd,):
                raise DimensionMismatchError("bias must be an entity_dim vector")
            n_objects = x
        else:
            v, k = t["word_emb"].shape
            c, k2 = t["cand_mat"].shape
            if k2 != k:
                raise DimensionMismatchError("cand_mat width must match word_emb width")
            if t["cand_bias"].shape != (c,):
                raise DimensionMismatchError("cand_bias must be a |C| vector")
            n_objects = c
        if len(self.object_ids) != n_objects:
            raise DimensionMismatchError(
                f"{n_objects} object rows but {len(self.object_ids)} object_ids"
            )

    @property
    def object_embeddings(self) -> np.ndarray:
        """The tensor whose rows represent the ranked objects."""
        name = {"nvsm": "doc_emb", "lse": "entity_emb", "loglinear": "cand_mat"}[self.kind]
        return self.tensors[name]


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    window: int
    batch_size: int
    num_negatives: int = 10
    weight_decay: float = 0.01
    epochs: int = 15
    seed: int = 1
    word_dim: int = 300
    object_dim: int = 256
    learning_rate: float = ADAM_ALPHA
    non_overlapping: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.num_negatives < 1:
            raise ConfigError("num_negatives must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.word_dim < 1 or self.object_dim < 1:
            raise ConfigError("embedding dimensions must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")

    @property
    def stride(self) -> int:
        return self.window if self.non_overlapping else 1


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for Adam."""

    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0
    alpha: float = ADAM_ALPHA
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_tensors(cls, tensors: dict[str, np.ndarray], alpha: float = ADAM_ALPHA) -> "AdamState":
        return cls(
            first={k: np.zeros_like(v) for k, v in tensors.items()},
            second={k: np.zeros_like(v) for k, v in tensors.items()},
            alpha=alpha,
        )


def adam_step(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place to every tensor.

    The update is theta <- theta - alpha * m_hat / (sqrt(v_hat) + eps)
    with m_hat, v_hat the bias-corrected moment estimates.  Because the
    moments decay rather than reset, every parameter moves every step.

    Raises:
        GradientError: if any gradient is non-finite, naming the tensor.
    """
    for name, g in grads.items():
        if name not in tensors:
            raise GradientError(f"gradient for unknown tensor {name!r}")
        if g.shape != tensors[name].shape:
            raise GradientError(f"gradient shape mismatch for tensor {name!r}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient in tensor {name!r}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        m = state.first[name]
        v = state.second[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        tensors[name] -= state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)


# --- persistence -----------------------------------------------------------
#
# Layout: 8-byte magic, 4-byte little-endian header length, UTF-8 JSON
# header {kind, dims, hyperparams, vocab_hash, tensor_order, object_ids},
# then raw little-endian row-major float32 tensor data in declared order.


def save_model(params: ModelParams, path) -> None:
    order = TENSOR_ORDER[params.kind]
    header = {
        "kind": params.kind,
        "dims": {name: list(params.tensors[name].shape) for name in order},
        "hyperparams": params.hyperparams,
        "vocab_hash": params.vocab_hash,
        "tensor_order": list(order),
        "object_ids": list(params.object_ids),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(len(blob).to_bytes(4, "little"))
        f.write(blob)
        for name in order:
            tensor = np.ascontiguousarray(params.tensors[name], dtype=np.float32)
            f.write(tensor.astype("<f4", copy=False).tobytes())


def load_model(path) -> ModelParams:
    with open(path, "rb") as f:
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise MagicMismatchError(f"{path}: bad magic {magic!r}")
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise TruncatedFileError(f"{path}: missing header length")
        header_len = int.from_bytes(raw_len, "little")
        blob = f.read(header_len)
        if len(blob) != header_len:
            raise TruncatedFileError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DimensionMismatchError(f"{path}: unreadable header: {exc}") from exc

        kind = header.get("kind")
        if kind not in TENSOR_ORDER:
            raise DimensionMismatchError(f"{path}: unknown model kind {kind!r}")
        order = header.get("tensor_order")
        if tuple(order or ()) != TENSOR_ORDER[kind]:
            raise DimensionMismatchError(f"{path}: unexpected tensor order {order!r}")

        tensors: dict[str, np.ndarray] = {}
        for name in order:
            shape = tuple(header["dims"][name])
            count = int(np.prod(shape))
            data = f.read(4 * count)
            if len(data) != 4 * count:
                raise TruncatedFileError(
                    f"{path}: tensor {name!r} declares {count} floats but data ends early"
                )
            tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
        if f.read(1):
            raise DimensionMismatchError(f"{path}: trailing bytes after declared tensors")

    return ModelParams(
        kind=kind,
        tensors=tensors,
        hyperparams=header.get("hyperparams", {}),
        vocab_hash=header.get("vocab_hash", ""),
        object_ids=tuple(header.get("object_ids", ())),
    )
