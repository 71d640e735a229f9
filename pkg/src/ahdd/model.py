"""The full network: embeddings, shared encoder, label attention and head."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import torch
from torch import nn

from ahdd.attention import CodeAwareAttention, PlainAttention, label_specific_repr
from ahdd.encoder import EmbeddingTable, as_token_tensor, embed, encode, make_encoder
from ahdd.output import DESCRIPTION_AWARE, PLAIN, OutputHead, probabilities


@dataclass(frozen=True)
class ModelSpec:
    vocab_size: int
    n_labels: int
    emb_dim: int = 100
    hidden: int = 64
    encoder: str = "cnn"
    kernel_size: int = 3
    code_aware_attention: bool = True
    description_aware_output: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


class AHDDModel(nn.Module):
    """Parameters are created in a fixed order so checkpoints are stable.

    ``stats`` counts encoder calls by role so callers can check what a code
    path actually computed.
    """

    def __init__(self, spec: ModelSpec, descriptions: Sequence[Sequence[int]]):
        super().__init__()
        if len(descriptions) != spec.n_labels:
            raise ValueError(f"{len(descriptions)} descriptions for {spec.n_labels} labels")
        self.spec = spec
        self.descriptions = [tuple(d) for d in descriptions]
        self.embedding = EmbeddingTable(spec.vocab_size, spec.emb_dim)
        self.encoder = make_encoder(spec.encoder, spec.emb_dim, spec.hidden, spec.kernel_size)
        if spec.code_aware_attention:
            self.attention = CodeAwareAttention(spec.hidden)
        else:
            self.attention = PlainAttention(spec.n_labels, spec.hidden)
        self.head = OutputHead(spec.n_labels, spec.hidden,
                               DESCRIPTION_AWARE if spec.description_aware_output else PLAIN)
        self.stats: Counter[str] = Counter()

    @property
    def needs_code_matrix(self) -> bool:
        return self.attention.uses_code_matrix or self.head.uses_code_matrix

    def hidden_states(self, tokens, role: str = "document") -> torch.Tensor:
        self.stats[f"encode_{role}"] += 1
        return encode(embed(as_token_tensor(tokens), self.embedding), self.encoder)

    def code_matrix(self) -> torch.Tensor:
        """``H_C``: max-pooled encoding of every code description."""
        self.stats["code_matrix_builds"] += 1
        rows = []
        for desc in self.descriptions:
            rows.append(self.hidden_states(desc, role="description").max(dim=0).values)
        return torch.stack(rows)

    def label_repr(self, tokens, H_C: Optional[torch.Tensor], role: str = "document"):
        """Attention weights and label-specific representation for a token sequence."""
        H = self.hidden_states(tokens, role)
        weights = self.attention(H, H_C)
        return weights, label_specific_repr(weights, H)

    def score(self, V: torch.Tensor, H_C: Optional[torch.Tensor]) -> torch.Tensor:
        return self.head(V, H_C)

    def forward(self, tokens, H_C: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Probabilities for one document; builds ``H_C`` if not supplied."""
        if H_C is None and self.needs_code_matrix:
            H_C = self.code_matrix()
        _, V = self.label_repr(tokens, H_C)
        return probabilities(self.score(V, H_C))

    def parameter_inventory(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(p.shape)) for name, p in self.named_parameters()]


def build_model(spec: ModelSpec, descriptions: Sequence[Sequence[int]], seed: int = 0,
                dtype: torch.dtype = torch.float64) -> AHDDModel:
    """Construct a model with deterministic initialization."""
    gen_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(seed)
        model = AHDDModel(spec, descriptions)
    finally:
        torch.random.set_rng_state(gen_state)
    return model.to(dtype)
