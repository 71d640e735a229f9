"""Tokenization and vocabulary."""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

from ahdd.errors import ConfigurationError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_WORD_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text``, split on non-alphanumeric boundaries, and drop
    tokens that contain no alphabetic character.

    >>> tokenize("Initial hematocrit 27.8")
    ['initial', 'hematocrit']
    """
    return [tok for tok in _WORD_RE.findall(text.lower()) if any(ch.isalpha() for ch in tok)]


class Vocabulary:
    """Token/id bijection with id 0 reserved for padding and id 1 for unknown."""

    def __init__(self, tokens: Sequence[str] = ()):
        self._itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self._stoi: dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for tok in tokens:
            if tok in self._stoi:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self._stoi[tok] = len(self._itos)
            self._itos.append(tok)

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi and self._stoi[token] >= 2

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def id_of(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._stoi.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._itos[i] for i in ids]

    @property
    def tokens(self) -> list[str]:
        """Real tokens in id order (ids 2, 3, ...)."""
        return self._itos[2:]


def build_vocab(
    token_streams: Iterable[Sequence[str]],
    min_count: int = 1,
    always_include: Iterable[str] = (),
) -> Vocabulary:
    """Build a vocabulary from tokenized documents.

    Tokens seen at least ``min_count`` times get ids in descending frequency
    order, ties broken lexicographically. Tokens in ``always_include`` (the
    code-description tokens) are kept regardless of their count.

    Args:
        token_streams: One token sequence per document.
        min_count: Minimum corpus frequency for a token to get its own id.
        always_include: Tokens that are admitted whatever their count.

    Raises:
        ConfigurationError: If ``min_count`` < 1 or the corpus is empty.
    """
    if min_count < 1:
        raise ConfigurationError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    n_docs = 0
    for tokens in token_streams:
        n_docs += 1
        counts.update(tokens)
    if n_docs == 0 or not counts:
        raise ConfigurationError("cannot build a vocabulary from an empty corpus")
    keep = {tok for tok, n in counts.items() if n >= min_count}
    keep.update(always_include)
    keep.discard(PAD_TOKEN)
    keep.discard(UNK_TOKEN)
    ordered = sorted(keep, key=lambda tok: (-counts.get(tok, 0), tok))
    return Vocabulary(ordered)
