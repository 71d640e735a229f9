"""Documents and corpus JSONL ingestion.

A corpus directory holds ``train.jsonl``, ``dev.jsonl`` and ``test.jsonl``;
each line is ``{"doc_id": str, "text": str, "labels": [str]}``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from ahdd.errors import FormatError
from ahdd.hierarchy import CodeHierarchy
from ahdd.text import Vocabulary, build_vocab, tokenize

DEFAULT_MAX_LENGTH = 2500
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Document:
    """A tokenized note with its gold code set.

    ``words`` keeps the surface tokens (after truncation) so a document can
    be written back out and visualized; ``tokens`` are the vocabulary ids.
    """

    doc_id: str
    tokens: tuple[int, ...]
    labels: frozenset[str]
    words: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValueError(f"document {self.doc_id!r} has no tokens")
        if self.words and len(self.words) != len(self.tokens):
            raise ValueError(f"document {self.doc_id!r}: words/tokens length mismatch")

    def __len__(self) -> int:
        return len(self.tokens)

    def target(self, hierarchy: CodeHierarchy) -> np.ndarray:
        y = np.zeros(len(hierarchy), dtype=np.float64)
        for code in self.labels:
            y[hierarchy.index_of(code)] = 1.0
        return y


def _iter_records(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or not {"doc_id", "text", "labels"} <= rec.keys():
                raise FormatError(f"{path}:{line_no}: record needs 'doc_id', 'text' and 'labels'")
            if not isinstance(rec["labels"], list) or not all(isinstance(c, str) for c in rec["labels"]):
                raise FormatError(f"{path}:{line_no}: 'labels' must be a list of code strings")
            if not isinstance(rec["text"], str):
                raise FormatError(f"{path}:{line_no}: 'text' must be a string")
            yield line_no, rec


def read_token_streams(path) -> Iterator[list[str]]:
    """Tokenized texts of a JSONL split, for vocabulary building."""
    for _, rec in _iter_records(path):
        yield tokenize(rec["text"])


def corpus_vocab(train_path, hierarchy: CodeHierarchy, min_count: int = 1) -> Vocabulary:
    """Vocabulary over the training split plus every description token."""
    desc_tokens = {tok for code in hierarchy for tok in hierarchy.description(code)}
    return build_vocab(read_token_streams(train_path), min_count=min_count, always_include=desc_tokens)


def load_jsonl(
    path,
    vocab: Vocabulary,
    hierarchy: CodeHierarchy,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> list[Document]:
    """Read, tokenize, id-map and truncate (keeping the prefix) a JSONL split.

    Raises:
        FormatError: malformed line (with line number), a label missing from
            the hierarchy (naming the code), or a record with no usable tokens.
    """
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    docs = []
    for line_no, rec in _iter_records(path):
        unknown = sorted(c for c in rec["labels"] if c not in hierarchy)
        if unknown:
            raise FormatError(f"{path}:{line_no}: document {rec['doc_id']!r} has unknown label(s) {', '.join(unknown)}")
        words = tokenize(rec["text"])[:max_length]
        if not words:
            raise FormatError(f"{path}:{line_no}: document {rec['doc_id']!r} has no tokens")
        docs.append(Document(
            doc_id=str(rec["doc_id"]),
            tokens=tuple(vocab.encode(words)),
            labels=frozenset(rec["labels"]),
            words=tuple(words),
        ))
    return docs


def write_jsonl(path, docs: Iterable[Document], vocab: Optional[Vocabulary] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            words = doc.words if doc.words else vocab.decode(doc.tokens)
            rec = {"doc_id": doc.doc_id, "text": " ".join(words), "labels": sorted(doc.labels)}
            fh.write(json.dumps(rec) + "\n")


def label_counts(docs: Sequence[Document], hierarchy: CodeHierarchy) -> np.ndarray:
    """Number of documents carrying each label, in label-index order."""
    counts = Counter(code for doc in docs for code in doc.labels)
    return np.array([counts.get(code, 0) for code in hierarchy.labels], dtype=np.int64)


def target_matrix(docs: Sequence[Document], hierarchy: CodeHierarchy) -> np.ndarray:
    return np.stack([doc.target(hierarchy) for doc in docs]) if docs else np.zeros((0, len(hierarchy)))


def split_path(corpus_dir, split: str) -> Path:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
    return Path(corpus_dir) / f"{split}.jsonl"
