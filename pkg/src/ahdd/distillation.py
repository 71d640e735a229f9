"""Associated and sibling description documents and the cosine losses.

The associated document concatenates the gold codes' descriptions; the
sibling document concatenates the descriptions of every code that shares a
parent with a gold code but is not itself gold. Both are run through the
same encoder and attention as the note, and the note's label-specific
representation is pulled toward the first and pushed away from the second.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import torch

from ahdd.hierarchy import CodeHierarchy
from ahdd.text import Vocabulary

ZERO_NORM = 1e-12


@dataclass(frozen=True)
class DistillationPair:
    assoc_doc: tuple[int, ...]
    sibling_doc: Optional[tuple[int, ...]]
    assoc_codes: frozenset[str]
    sibling_codes: frozenset[str]


def build_distillation_pair(labels: Iterable[str], hierarchy: CodeHierarchy, vocab: Vocabulary) -> DistillationPair:
    """Build the associated and sibling description documents for a gold set.

    Raises:
        ValueError: empty label set.
        KeyError: a label not in the hierarchy.
    """
    gold = frozenset(labels)
    if not gold:
        raise ValueError("distillation needs at least one gold label")
    for code in gold:
        hierarchy.node(code)
    siblings = frozenset().union(*(hierarchy.siblings_of(c) for c in gold)) - gold

    def concat(codes):
        ordered = sorted(codes, key=hierarchy.index_of)
        return tuple(t for c in ordered for t in vocab.encode(hierarchy.description(c)))

    return DistillationPair(
        assoc_doc=concat(gold),
        sibling_doc=concat(siblings) if siblings else None,
        assoc_codes=gold,
        sibling_codes=siblings,
    )


def mean_label_cosine(A: torch.Tensor, B: torch.Tensor) -> torch.Tensor:
    """Mean over labels of the cosine between corresponding rows.

    Row pairs where either row has norm below 1e-12 contribute 0.
    """
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {tuple(A.shape)} vs {tuple(B.shape)}")
    na = A.norm(dim=-1)
    nb = B.norm(dim=-1)
    ok = (na >= ZERO_NORM) & (nb >= ZERO_NORM)
    denom = torch.where(ok, na * nb, torch.ones_like(na))
    cos = torch.where(ok, (A * B).sum(dim=-1) / denom, torch.zeros_like(na))
    return cos.clamp(-1.0, 1.0).mean()


def loss_sim(V_d: torch.Tensor, V_cA: torch.Tensor) -> torch.Tensor:
    return 1.0 - mean_label_cosine(V_d, V_cA)


def loss_dis(V_d: torch.Tensor, V_cS: Optional[torch.Tensor]) -> torch.Tensor:
    """Cosine to the sibling representation; 0 when there are no siblings."""
    if V_cS is None:
        return V_d.new_zeros(())
    return mean_label_cosine(V_d, V_cS)
