"""Corpus ingestion: plain-text and sparse bag-of-words loaders, label files,
vocabulary construction, and positional held-out splitting.

All loaders produce an immutable :class:`Corpus` whose documents hold dense
0-based vocabulary ids. Parsers reject malformed lines with line-numbered
errors rather than skipping them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyCorpusError, FormatError


@dataclass(frozen=True)
class Vocabulary:
    """Ordered word-type table with a dense 0-based id per term."""

    terms: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    @classmethod
    def from_terms(cls, terms: Iterable[str]) -> "Vocabulary":
        terms = tuple(terms)
        index = {t: i for i, t in enumerate(terms)}
        if len(index) != len(terms):
            raise ValueError("duplicate terms in vocabulary")
        return cls(terms=terms, index=index)

    def __len__(self) -> int:
        return len(self.terms)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for term in self.terms:
                fh.write(term + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            terms = [line.rstrip("\n") for line in fh if line.strip()]
        return cls.from_terms(terms)


@dataclass(frozen=True)
class Document:
    """Token-id sequence plus an optional label-id set."""

    tokens: np.ndarray
    labels: Optional[frozenset[int]] = None

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        tokens.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.shape[0])


@dataclass(frozen=True)
class Corpus:
    """Immutable collection of documents sharing one vocabulary.

    ``label_space`` and ``label_frequencies`` are populated only after
    :func:`load_labels`; ``label_frequencies[k]`` counts the documents whose
    label set contains ``k``.
    """

    documents: tuple[Document, ...]
    vocabulary: Vocabulary
    label_space: Optional[tuple[str, ...]] = None
    label_frequencies: Optional[np.ndarray] = None

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @property
    def n_tokens(self) -> int:
        return sum(d.n_tokens for d in self.documents)

    @property
    def n_terms(self) -> int:
        return len(self.vocabulary)

    @property
    def n_labels(self) -> int:
        return 0 if self.label_space is None else len(self.label_space)

    def doc_lengths(self) -> np.ndarray:
        return np.array([d.n_tokens for d in self.documents], dtype=np.int64)

    def validate(self) -> None:
        V = len(self.vocabulary)
        K = self.n_labels
        for i, doc in enumerate(self.documents):
            if doc.n_tokens and (doc.tokens.min() < 0 or doc.tokens.max() >= V):
                raise ValueError(f"document {i}: token id out of range [0, {V})")
            if doc.labels is not None and self.label_space is not None:
                if any(l < 0 or l >= K for l in doc.labels):
                    raise ValueError(f"document {i}: label id out of range [0, {K})")
        if self.label_frequencies is not None:
            freq = np.zeros(K, dtype=np.int64)
            for doc in self.documents:
                for l in doc.labels or ():
                    freq[l] += 1
            if not np.array_equal(freq, self.label_frequencies):
                raise ValueError("label_frequencies inconsistent with documents")


def load_plaintext(
    path,
    lowercase: bool = False,
    stopwords: Optional[Iterable[str]] = None,
    min_count: int = 1,
) -> Corpus:
    """Read a one-document-per-line, whitespace-tokenized corpus.

    Vocabulary ids follow first appearance among retained tokens. The
    ``min_count`` filter is corpus-global and applied before id assignment;
    documents emptied by filtering are kept (estimators handle N_d = 0).
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    stop = set(stopwords) if stopwords else set()
    raw_docs: list[list[str]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            words = line.split()
            if lowercase:
                words = [w.lower() for w in words]
            raw_docs.append([w for w in words if w not in stop])
    counts = Counter(w for doc in raw_docs for w in doc)
    kept = {w for w, c in counts.items() if c >= min_count}

    terms: list[str] = []
    index: dict[str, int] = {}
    docs = []
    for words in raw_docs:
        ids = []
        for w in words:
            if w not in kept:
                continue
            if w not in index:
                index[w] = len(terms)
                terms.append(w)
            ids.append(index[w])
        docs.append(Document(tokens=np.array(ids, dtype=np.int64)))
    if not docs or not terms:
        raise EmptyCorpusError(f"no documents with retained tokens in {path}")
    return Corpus(documents=tuple(docs), vocabulary=Vocabulary.from_terms(terms))


def load_sparse_bow(docword_path, vocab_path) -> Corpus:
    """Read a sparse "docId wordId count" triple file (1-based ids) plus a
    one-term-per-line vocabulary file.

    Counts expand into repeated token ids, ordered by ascending word id
    within each document; gaps in the doc-id range become empty documents.
    """
    vocab = Vocabulary.load(vocab_path)
    V = len(vocab)
    per_doc: dict[int, list[tuple[int, int]]] = {}
    max_doc = 0
    with open(docword_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(
                    f"expected 'docId wordId count', got {line.strip()!r}",
                    path=docword_path, line=lineno,
                )
            try:
                doc_id, word_id, count = (int(p) for p in parts)
            except ValueError:
                raise FormatError(
                    f"non-integer field in {line.strip()!r}",
                    path=docword_path, line=lineno,
                ) from None
            if doc_id < 1:
                raise FormatError(f"docId {doc_id} < 1", path=docword_path, line=lineno)
            if not (1 <= word_id <= V):
                raise FormatError(
                    f"wordId {word_id} outside [1, {V}]", path=docword_path, line=lineno
                )
            if count < 1:
                raise FormatError(f"count {count} < 1", path=docword_path, line=lineno)
            per_doc.setdefault(doc_id, []).append((word_id - 1, count))
            max_doc = max(max_doc, doc_id)
    if max_doc == 0:
        raise EmptyCorpusError(f"no entries in {docword_path}")
    docs = []
    for d in range(1, max_doc + 1):
        entries = sorted(per_doc.get(d, ()))
        ids = np.repeat(
            np.array([w for w, _ in entries], dtype=np.int64),
            np.array([c for _, c in entries], dtype=np.int64),
        ) if entries else np.empty(0, dtype=np.int64)
        docs.append(Document(tokens=ids))
    return Corpus(documents=tuple(docs), vocabulary=vocab)


def save_sparse_bow(corpus: Corpus, docword_path, vocab_path) -> None:
    """Serialize a corpus to the sparse triple format (inverse of
    :func:`load_sparse_bow`, idempotent under a round trip)."""
    corpus.vocabulary.save(vocab_path)
    with open(docword_path, "w", encoding="utf-8") as fh:
        for d, doc in enumerate(corpus.documents, start=1):
            if doc.n_tokens == 0:
                continue
            ids, counts = np.unique(doc.tokens, return_counts=True)
            for w, c in zip(ids, counts):
                fh.write(f"{d} {w + 1} {c}\n")


def save_plaintext(corpus: Corpus, path) -> None:
    """Write one whitespace-joined document per line, preserving token
    order (inverse of :func:`load_plaintext` with default options)."""
    terms = corpus.vocabulary.terms
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(" ".join(terms[t] for t in doc.tokens) + "\n")


def load_labels(path, corpus: Corpus) -> Corpus:
    """Attach label sets from "docId label1 label2 ..." lines (1-based doc ids).

    The label space is the union of observed labels in first-appearance
    order; documents without a line get empty label sets.
    """
    label_index: dict[str, int] = {}
    labels: list[set[int]] = [set() for _ in corpus.documents]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                doc_id = int(parts[0])
            except ValueError:
                raise FormatError(
                    f"non-integer docId {parts[0]!r}", path=path, line=lineno
                ) from None
            if not (1 <= doc_id <= corpus.n_docs):
                raise FormatError(
                    f"docId {doc_id} outside [1, {corpus.n_docs}]", path=path, line=lineno
                )
            for name in parts[1:]:
                if name not in label_index:
                    label_index[name] = len(label_index)
                labels[doc_id - 1].add(label_index[name])
    space = tuple(sorted(label_index, key=label_index.get))
    freq = np.zeros(len(space), dtype=np.int64)
    for ls in labels:
        for l in ls:
            freq[l] += 1
    docs = tuple(
        Document(tokens=doc.tokens, labels=frozenset(ls))
        for doc, ls in zip(corpus.documents, labels)
    )
    return Corpus(
        documents=docs,
        vocabulary=corpus.vocabulary,
        label_space=space,
        label_frequencies=freq,
    )


def save_labels(corpus: Corpus, path) -> None:
    if corpus.label_space is None:
        raise ValueError("corpus carries no labels")
    with open(path, "w", encoding="utf-8") as fh:
        for d, doc in enumerate(corpus.documents, start=1):
            if doc.labels:
                names = " ".join(corpus.label_space[l] for l in sorted(doc.labels))
                fh.write(f"{d} {names}\n")


def split_heldout(
    corpus: Corpus, fraction: float = 0.5, seed: int = 0
) -> tuple[Corpus, Corpus]:
    """Split every document positionally: the first ceil(fraction * N_d)
    tokens form the observed part, the rest the held-out part.

    The collapsed likelihood is exchangeable over token order, so the
    position-based split is as valid as a shuffled one and is deterministic;
    ``seed`` is reserved for an optional shuffled variant.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    obs_docs, held_docs = [], []
    for doc in corpus.documents:
        cut = math.ceil(fraction * doc.n_tokens)
        obs_docs.append(Document(tokens=doc.tokens[:cut], labels=doc.labels))
        held_docs.append(Document(tokens=doc.tokens[cut:], labels=doc.labels))
    observed = Corpus(
        documents=tuple(obs_docs),
        vocabulary=corpus.vocabulary,
        label_space=corpus.label_space,
        label_frequencies=corpus.label_frequencies,
    )
    heldout = Corpus(
        documents=tuple(held_docs),
        vocabulary=corpus.vocabulary,
        label_space=corpus.label_space,
        label_frequencies=corpus.label_frequencies,
    )
    return observed, heldout


def align_vocabulary(corpus: Corpus, vocabulary: Vocabulary) -> Corpus:
    """Re-express a corpus in another vocabulary's ids, matching terms by
    string and dropping tokens the target vocabulary does not contain. Used
    to score test text against a model trained on a different load."""
    docs = []
    for doc in corpus.documents:
        ids = [
            vocabulary.index[corpus.vocabulary.terms[t]]
            for t in doc.tokens
            if corpus.vocabulary.terms[t] in vocabulary.index
        ]
        docs.append(Document(tokens=np.array(ids, dtype=np.int64), labels=doc.labels))
    return Corpus(
        documents=tuple(docs),
        vocabulary=vocabulary,
        label_space=corpus.label_space,
        label_frequencies=corpus.label_frequencies,
    )


def from_token_lists(
    token_lists: Sequence[Sequence[int]],
    n_terms: Optional[int] = None,
    labels: Optional[Sequence[Iterable[int]]] = None,
    label_space: Optional[Sequence[str]] = None,
) -> Corpus:
    """Build a corpus directly from integer token-id lists (test and
    synthetic-data convenience)."""
    if n_terms is None:
        n_terms = 1 + max((max(t) for t in token_lists if len(t)), default=-1)
    vocab = Vocabulary.from_terms(f"w{i}" for i in range(n_terms))
    docs = []
    for i, toks in enumerate(token_lists):
        ls = frozenset(labels[i]) if labels is not None else None
        docs.append(Document(tokens=np.array(toks, dtype=np.int64), labels=ls))
    space = None
    freq = None
    if labels is not None:
        if label_space is None:
            n_lab = 1 + max((max(ls, default=-1) for ls in labels), default=-1)
            label_space = [f"label{i}" for i in range(n_lab)]
        space = tuple(label_space)
        freq = np.zeros(len(space), dtype=np.int64)
        for ls in labels:
            for l in ls:
                freq[l] += 1
    return Corpus(
        documents=tuple(docs), vocabulary=vocab,
        label_space=space, label_frequencies=freq,
    )
