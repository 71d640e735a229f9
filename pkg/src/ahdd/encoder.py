"""Word embeddings and the shared token encoders.

All encoders map an ``(N, emb_dim)`` embedding sequence to an ``(N, h)``
hidden matrix, one row per token. The same encoder instance is used for
notes, description pseudo-documents and the code descriptions themselves.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from ahdd.errors import FormatError
from ahdd.text import PAD_ID, Vocabulary

logger = logging.getLogger(__name__)

ENCODER_KINDS = ("linear", "cnn", "rnn")


class EmbeddingTable(nn.Module):
    """Embedding matrix whose padding row stays zero and receives no updates."""

    def __init__(self, vocab_size: int, emb_dim: int, init_scale: float = 1.0):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, emb_dim, padding_idx=PAD_ID)
        with torch.no_grad():
            self.embedding.weight.uniform_(-init_scale, init_scale)
            self.embedding.weight[PAD_ID].zero_()

    @property
    def weight(self) -> torch.Tensor:
        return self.embedding.weight

    @property
    def vocab_size(self) -> int:
        return self.embedding.num_embeddings

    @property
    def dim(self) -> int:
        return self.embedding.embedding_dim

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.embedding(tokens)


def as_token_tensor(tokens) -> torch.Tensor:
    if isinstance(tokens, torch.Tensor):
        return tokens.long()
    return torch.as_tensor(list(tokens), dtype=torch.long)


def embed(tokens, table: EmbeddingTable) -> torch.Tensor:
    """Look up one embedding row per token id."""
    ids = as_token_tensor(tokens)
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.vocab_size):
        raise IndexError(f"token id out of range [0, {table.vocab_size})")
    return table(ids)


class LinearEncoder(nn.Module):
    """Per-position affine projection."""

    def __init__(self, emb_dim: int, hidden: int):
        super().__init__()
        self.input_dim, self.hidden = emb_dim, hidden
        self.proj = nn.Linear(emb_dim, hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(x)


class ConvEncoder(nn.Module):
    """1-d convolution over positions with same-length padding and tanh."""

    def __init__(self, emb_dim: int, hidden: int, kernel_size: int = 3):
        super().__init__()
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be a positive odd integer, got {kernel_size}")
        self.input_dim, self.hidden = emb_dim, hidden
        self.conv = nn.Conv1d(emb_dim, hidden, kernel_size, padding=kernel_size // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.conv(x.t().unsqueeze(0)).squeeze(0).t())


class RecurrentEncoder(nn.Module):
    """Bidirectional GRU; forward and backward states are concatenated."""

    def __init__(self, emb_dim: int, hidden: int):
        super().__init__()
        if hidden % 2:
            raise ValueError(f"recurrent encoder needs an even hidden size, got {hidden}")
        self.input_dim, self.hidden = emb_dim, hidden
        self.rnn = nn.GRU(emb_dim, hidden // 2, batch_first=True, bidirectional=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.rnn(x.unsqueeze(0))
        return out.squeeze(0)


def make_encoder(kind: str, emb_dim: int, hidden: int, kernel_size: int = 3) -> nn.Module:
    if kind == "linear":
        return LinearEncoder(emb_dim, hidden)
    if kind == "cnn":
        return ConvEncoder(emb_dim, hidden, kernel_size)
    if kind == "rnn":
        return RecurrentEncoder(emb_dim, hidden)
    raise ValueError(f"unknown encoder kind {kind!r}; expected one of {ENCODER_KINDS}")


def encode(x: torch.Tensor, enc: nn.Module) -> torch.Tensor:
    """Run ``enc`` over an ``(N, emb_dim)`` sequence, returning ``(N, h)``."""
    if x.dim() != 2 or x.shape[0] == 0:
        raise ValueError(f"expected a non-empty (N, emb_dim) sequence, got shape {tuple(x.shape)}")
    if x.shape[1] != enc.input_dim:
        raise ValueError(f"embedding width {x.shape[1]} does not match encoder input width {enc.input_dim}")
    return enc(x)


def encode_description(desc_tokens, table: EmbeddingTable, enc: nn.Module) -> torch.Tensor:
    """Coordinate-wise max over the encoded rows of a code description."""
    ids = as_token_tensor(desc_tokens)
    if ids.numel() == 0:
        raise ValueError("cannot encode an empty description")
    return encode(embed(ids, table), enc).max(dim=0).values


def build_code_matrix(descriptions: Sequence[Sequence[int]], table: EmbeddingTable, enc: nn.Module) -> torch.Tensor:
    """Stack ``encode_description`` of every code, in label-index order."""
    return torch.stack([encode_description(d, table, enc) for d in descriptions])


def description_token_ids(hierarchy, vocab: Vocabulary) -> list[list[int]]:
    """Description token ids for every code, in label-index order."""
    return [vocab.encode(hierarchy.description(code)) for code in hierarchy.labels]


def read_embedding_file(path) -> tuple[dict[str, np.ndarray], int]:
    """Read ``token v1 ... vD`` lines; a leading ``count dim`` header is skipped."""
    vectors: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if line_no == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            try:
                vec = np.asarray(parts[1:], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{line_no}: non-numeric vector entry") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(f"{path}:{line_no}: expected {dim} values, got {vec.size}")
            vectors[parts[0]] = vec
    if dim is None:
        raise FormatError(f"{path}: no vectors found")
    return vectors, dim


def load_pretrained(table: EmbeddingTable, vocab: Vocabulary, path) -> int:
    """Copy vectors for known tokens into ``table``; returns how many were found.

    Tokens missing from the file keep their (seeded) random initialization.
    """
    vectors, dim = read_embedding_file(path)
    if dim != table.dim:
        raise FormatError(f"{path}: vectors have dimension {dim}, model expects {table.dim}")
    found = 0
    with torch.no_grad():
        for tok in vocab.tokens:
            vec = vectors.get(tok)
            if vec is not None:
                table.weight[vocab.id_of(tok)] = torch.as_tensor(vec, dtype=table.weight.dtype)
                found += 1
    logger.info("loaded %d/%d pretrained vectors from %s", found, len(vocab.tokens), path)
    return found
