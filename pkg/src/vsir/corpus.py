"""Corpus preparation: tokenization, vocabularies, encoding and batch sampling.

The pipeline is: raw text -> :func:`tokenize` -> :func:`build_vocabulary`
-> :func:`encode` -> an immutable :class:`EncodedCorpus` from which
training batches are drawn with :func:`sample_batch` (documents as
targets) or :func:`sample_entity_batch` (entities as targets).
"""

from __future__ import annotations

import hashlib
import string
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusError

PAD_TOKEN = "<pad>"
NUM_TOKEN = "<num>"

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> list[str]:
    """Split raw text into normalized tokens.

    Tokens are lowercased and whitespace-split; punctuation characters are
    removed; tokens consisting solely of digits collapse to the numeric
    placeholder; stopwords are dropped.  The reserved literals pass through
    unchanged so that tokenize is idempotent on its own output.

    Args:
        text: Arbitrary UTF-8 text.  Empty text yields an empty list.
        stopwords: Tokens to drop after normalization.

    Returns:
        List of token strings.
    """
    out = []
    for raw in text.lower().split():
        if raw in (PAD_TOKEN, NUM_TOKEN):
            token = raw
        else:
            token = raw.translate(_PUNCT_TABLE)
            if not token:
                continue
            if token.isdigit():
                token = NUM_TOKEN
        if token in stopwords:
            continue
        out.append(token)
    return out


@dataclass(frozen=True)
class Vocabulary:
    """Term <-> id mapping with corpus frequencies.

    Ids are dense; id 0 is the padding token, id 1 the numeric
    placeholder, and all remaining ids are terms ordered by descending
    corpus frequency (ties broken lexicographically ascending).
    """

    terms: tuple[str, ...]
    counts: tuple[int, ...]
    pad_id: int = 0
    num_id: int = 1
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.terms) != len(self.counts):
            raise CorpusError("terms and counts must have equal length")
        index = {term: i for i, term in enumerate(self.terms)}
        if len(index) != len(self.terms):
            raise CorpusError("vocabulary terms must be unique")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self._index

    def id_of(self, term: str) -> int | None:
        return self._index.get(term)

    def encode_tokens(self, tokens: Sequence[str]) -> list[int]:
        """Map tokens to ids, silently dropping out-of-vocabulary tokens."""
        ids = []
        for token in tokens:
            i = self._index.get(token)
            if i is not None:
                ids.append(i)
        return ids

    @property
    def reserved_ids(self) -> tuple[int, int]:
        return (self.pad_id, self.num_id)


def build_vocabulary(
    token_streams: Iterable[Sequence[str]],
    max_size: int,
    stopwords: frozenset[str] | set[str] = frozenset(),
) -> Vocabulary:
    """Count tokens over streams and keep the most frequent terms.

    Args:
        token_streams: Iterable of token sequences (one per document).
        max_size: Number of non-reserved terms to retain.  Ties at the
            cutoff are broken lexicographically ascending.
        stopwords: Tokens excluded from the vocabulary.

    Returns:
        Vocabulary with two reserved slots plus at most ``max_size`` terms.

    Raises:
        CorpusError: if no token streams are supplied or max_size < 1.
    """
    if max_size < 1:
        raise CorpusError("max_size must be >= 1")
    counts: dict[str, int] = {}
    n_streams = 0
    for stream in token_streams:
        n_streams += 1
        for token in stream:
            if token in stopwords:
                continue
            counts[token] = counts.get(token, 0) + 1
    if n_streams == 0:
        raise CorpusError("build_vocabulary requires at least one token stream")

    pad_count = counts.pop(PAD_TOKEN, 0)
    num_count = counts.pop(NUM_TOKEN, 0)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]

    terms = [PAD_TOKEN, NUM_TOKEN] + [t for t, _ in ranked]
    freqs = [pad_count, num_count] + [c for _, c in ranked]
    return Vocabulary(terms=tuple(terms), counts=tuple(freqs))


@dataclass(frozen=True)
class EncodedCorpus:
    """Documents as token-id sequences, with optional entity associations.

    Attributes:
        docs: One int32 id array per document (possibly empty).
        doc_ids: External string identifiers, parallel to ``docs``.
        vocab_size: Size of the vocabulary the ids were drawn from.
        associations: Optional map object-id -> document indices.  Entity
            indices used by samplers and models refer to positions in
            :attr:`entity_ids` (ascending object-id order).
    """

    docs: tuple[np.ndarray, ...]
    doc_ids: tuple[str, ...]
    vocab_size: int
    associations: dict[str, frozenset[int]] | None = None

    def __post_init__(self):
        if len(self.docs) == 0:
            raise CorpusError("corpus must contain at least one document")
        if len(self.docs) != len(self.doc_ids):
            raise CorpusError("docs and doc_ids must have equal length")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise CorpusError("doc_ids must be unique")
        for doc in self.docs:
            if doc.size and (doc.min() < 0 or doc.max() >= self.vocab_size):
                raise CorpusError("token id out of vocabulary range")
        if self.associations is not None:
            for obj, idxs in self.associations.items():
                for i in idxs:
                    if not 0 <= i < len(self.docs):
                        raise CorpusError(
                            f"association for {obj!r} references invalid document index {i}"
                        )

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def entity_ids(self) -> tuple[str, ...]:
        """Entity object-ids in canonical (ascending) order."""
        if self.associations is None:
            return ()
        return tuple(sorted(self.associations))

    def doc_candidates(self) -> list[list[int]]:
        """Per-document list of associated entity indices (may be empty)."""
        cands: list[list[int]] = [[] for _ in self.docs]
        for e_idx, obj in enumerate(self.entity_ids):
            for d_idx in sorted(self.associations[obj]):
                cands[d_idx].append(e_idx)
        return cands


def encode(
    docs: Iterable[tuple[str, Sequence[str]]],
    vocab: Vocabulary,
    associations: Iterable[tuple[str, str]] | None = None,
) -> EncodedCorpus:
    """Encode tokenized documents against a vocabulary.

    Out-of-vocabulary tokens are dropped; documents that become empty are
    retained with length zero.

    Args:
        docs: Iterable of (doc_id, tokens) pairs.
        vocab: Vocabulary to encode against.
        associations: Optional iterable of (object_id, doc_id) pairs.

    Raises:
        CorpusError: on duplicate doc_ids or associations referencing
            unknown doc_ids.
    """
    encoded: list[np.ndarray] = []
    doc_ids: list[str] = []
    seen: set[str] = set()
    for doc_id, tokens in docs:
        if doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        doc_ids.append(doc_id)
        encoded.append(np.asarray(vocab.encode_tokens(tokens), dtype=np.int32))

    assoc_map: dict[str, frozenset[int]] | None = None
    if associations is not None:
        index = {doc_id: i for i, doc_id in enumerate(doc_ids)}
        grouped: dict[str, set[int]] = {}
        for object_id, doc_id in associations:
            if doc_id not in index:
                raise CorpusError(
                    f"association {object_id!r} -> {doc_id!r} references unknown document"
                )
            grouped.setdefault(object_id, set()).add(index[doc_id])
        assoc_map = {k: frozenset(v) for k, v in grouped.items()}

    return EncodedCorpus(
        docs=tuple(encoded),
        doc_ids=tuple(doc_ids),
        vocab_size=len(vocab),
        associations=assoc_map,
    )


@dataclass(frozen=True)
class Batch:
    """A mini-batch of fixed-width n-grams paired with target object indices."""

    ngrams: np.ndarray  # (m, n) int32
    targets: np.ndarray  # (m,) int64

    def __post_init__(self):
        if self.ngrams.ndim != 2 or self.ngrams.shape[1] < 1:
            raise CorpusError("ngrams must be a 2-D array with window >= 1")
        if self.ngrams.shape[0] < 2:
            raise CorpusError("batches need at least 2 rows")
        if self.targets.shape != (self.ngrams.shape[0],):
            raise CorpusError("targets must align with ngram rows")

    @property
    def size(self) -> int:
        return self.ngrams.shape[0]

    @property
    def window(self) -> int:
        return self.ngrams.shape[1]


def batches_per_epoch(corpus: EncodedCorpus, window: int, batch_size: int) -> int:
    """Number of batches in one pass: ceil(total n-gram windows / batch size).

    Per-document window counts below zero (documents shorter than the
    window) are clamped to zero.
    """
    if window < 1 or batch_size < 1:
        raise CorpusError("window and batch_size must be >= 1")
    total = sum(max(len(doc) - window + 1, 0) for doc in corpus.docs)
    return (total + batch_size - 1) // batch_size


def ngrams_per_entity(corpus: EncodedCorpus, window: int) -> int:
    """Per-epoch n-gram count per entity: ceil(total windows / |entities|)."""
    if corpus.associations is None or not corpus.associations:
        raise CorpusError("corpus has no entity associations")
    total = sum(max(len(doc) - window + 1, 0) for doc in corpus.docs)
    n_entities = len(corpus.associations)
    return (total + n_entities - 1) // n_entities


def _sample_window(doc: np.ndarray, window: int, pad_id: int, rng, stride: int) -> np.ndarray:
    if len(doc) < window:
        padded = np.full(window, pad_id, dtype=np.int32)
        padded[: len(doc)] = doc
        return padded
    n_starts = (len(doc) - window) // stride + 1
    start = stride * int(rng.integers(n_starts))
    return doc[start : start + window]


def sample_batch(
    corpus: EncodedCorpus,
    window: int,
    batch_size: int,
    rng: np.random.Generator,
    pad_id: int = 0,
    stride: int = 1,
) -> Batch:
    """Draw a batch of (n-gram, source document) pairs.

    Each pair samples a document uniformly with replacement (empty
    documents are rejected and redrawn), then a contiguous window start
    uniformly over valid offsets.  Documents shorter than the window are
    right-padded with ``pad_id``.

    Raises:
        CorpusError: when every document in the corpus is empty.
    """
    if all(len(doc) == 0 for doc in corpus.docs):
        raise CorpusError("cannot sample from a corpus in which every document is empty")
    ngrams = np.empty((batch_size, window), dtype=np.int32)
    targets = np.empty(batch_size, dtype=np.int64)
    n_docs = len(corpus.docs)
    for i in range(batch_size):
        d = int(rng.integers(n_docs))
        while len(corpus.docs[d]) == 0:
            d = int(rng.integers(n_docs))
        ngrams[i] = _sample_window(corpus.docs[d], window, pad_id, rng, stride)
        targets[i] = d
    return Batch(ngrams=ngrams, targets=targets)


def sample_entity_batch(
    corpus: EncodedCorpus,
    window: int,
    batch_size: int,
    rng: np.random.Generator,
    pad_id: int = 0,
    stride: int = 1,
) -> Batch:
    """Draw a batch of (n-gram, entity) pairs.

    Entities are drawn uniformly, imposing a uniform prior over entities
    regardless of how much text each one has.  For a drawn entity, one of
    its non-empty associated documents is chosen uniformly and a window is
    sampled from it as in :func:`sample_batch`.

    Entities with no non-empty associated document are skipped with a
    warning; it is an error if no entity is usable.
    """
    if corpus.associations is None or not corpus.associations:
        raise CorpusError("corpus has no entity associations")
    entity_ids = corpus.entity_ids
    usable: list[tuple[int, list[np.ndarray]]] = []
    for e_idx, obj in enumerate(entity_ids):
        docs = [corpus.docs[d] for d in sorted(corpus.associations[obj]) if len(corpus.docs[d])]
        if docs:
            usable.append((e_idx, docs))
        else:
            warnings.warn(f"entity {obj!r} has no non-empty documents; skipped", stacklevel=2)
    if not usable:
        raise CorpusError("no entity has a usable (non-empty) associated document")

    ngrams = np.empty((batch_size, window), dtype=np.int32)
    targets = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        e_idx, docs = usable[int(rng.integers(len(usable)))]
        doc = docs[int(rng.integers(len(docs)))]
        ngrams[i] = _sample_window(doc, window, pad_id, rng, stride)
        targets[i] = e_idx
    return Batch(ngrams=ngrams, targets=targets)


# --- text formats ---------------------------------------------------------
#
# Corpus input:      <doc_id>\t<raw text>      one document per line
# Associations:      <object_id>\t<doc_id>     one pair per line
# Vocabulary:        <id>\t<term>\t<count>     ids ascending
# Encoded documents: <doc_id>\t<id id id ...>  ids space-separated


def read_corpus_file(path) -> list[tuple[str, str]]:
    """Read raw documents from a tab-separated file."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: expected <doc_id>\\t<text>")
            doc_id, text = line.split("\t", 1)
            out.append((doc_id, text))
    return out


def read_associations_file(path) -> list[tuple[str, str]]:
    """Read (object_id, doc_id) pairs from a tab-separated file."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected <object_id>\\t<doc_id>")
            out.append((parts[0], parts[1]))
    return out


def vocabulary_lines(vocab: Vocabulary) -> list[str]:
    return [f"{i}\t{term}\t{count}" for i, (term, count) in enumerate(zip(vocab.terms, vocab.counts))]


def write_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in vocabulary_lines(vocab):
            f.write(line + "\n")


def read_vocabulary(path) -> Vocabulary:
    terms: list[str] = []
    counts: list[int] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{path}:{lineno}: expected <id>\\t<term>\\t<count>")
            if int(parts[0]) != len(terms):
                raise CorpusError(f"{path}:{lineno}: vocabulary ids must be dense")
            terms.append(parts[1])
            counts.append(int(parts[2]))
    return Vocabulary(terms=tuple(terms), counts=tuple(counts))


def vocabulary_digest(vocab: Vocabulary) -> str:
    """SHA-256 hex digest of the canonical vocabulary serialization."""
    payload = "\n".join(vocabulary_lines(vocab)) + "\n"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_encoded_docs(corpus: EncodedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, doc in zip(corpus.doc_ids, corpus.docs):
            f.write(doc_id + "\t" + " ".join(str(i) for i in doc.tolist()) + "\n")


def read_encoded_docs(path, vocab_size: int) -> tuple[tuple[str, ...], tuple[np.ndarray, ...]]:
    doc_ids: list[str] = []
    docs: list[np.ndarray] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: expected <doc_id>\\t<ids>")
            doc_id, ids = line.split("\t", 1)
            doc_ids.append(doc_id)
            docs.append(np.asarray([int(t) for t in ids.split()], dtype=np.int32))
    return tuple(doc_ids), tuple(docs)
