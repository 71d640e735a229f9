"""Label-wise attention producing one representation per code.

Weights are ``softmax(Q H^T)`` row-wise over token positions, unscaled, and
the label-specific representation is ``weights @ H``. Queries come either
from the encoded code descriptions (``H_C W_Q``) or from a free learned
matrix ``U``.
"""

from __future__ import annotations

import torch
from torch import nn


def attention_weights(queries: torch.Tensor, H: torch.Tensor) -> torch.Tensor:
    """Row-stochastic ``(N_L, N_d)`` weights of ``queries`` over rows of ``H``."""
    if H.dim() != 2 or H.shape[0] == 0:
        raise ValueError(f"cannot attend over an empty hidden matrix (shape {tuple(H.shape)})")
    if queries.shape[-1] != H.shape[-1]:
        raise ValueError(f"query width {queries.shape[-1]} != hidden width {H.shape[-1]}")
    logits = queries @ H.t()
    logits = logits - logits.max(dim=1, keepdim=True).values.detach()
    e = torch.exp(logits)
    return e / e.sum(dim=1, keepdim=True)


def code_aware_attention(H_C: torch.Tensor, W_Q: torch.Tensor, H_d: torch.Tensor) -> torch.Tensor:
    return attention_weights(H_C @ W_Q, H_d)


def plain_label_attention(U: torch.Tensor, H_d: torch.Tensor) -> torch.Tensor:
    return attention_weights(U, H_d)


def label_specific_repr(weights: torch.Tensor, H: torch.Tensor) -> torch.Tensor:
    """Row ``i`` is the ``weights[i]``-weighted sum of the rows of ``H``."""
    if weights.shape[1] != H.shape[0]:
        raise ValueError(f"weights cover {weights.shape[1]} positions but H has {H.shape[0]} rows")
    return weights @ H


class CodeAwareAttention(nn.Module):
    """Queries are the code matrix projected by a learned ``h x h`` matrix."""

    uses_code_matrix = True

    def __init__(self, hidden: int):
        super().__init__()
        self.W_Q = nn.Parameter(torch.empty(hidden, hidden))
        nn.init.eye_(self.W_Q)

    def forward(self, H_d: torch.Tensor, H_C: torch.Tensor) -> torch.Tensor:
        return code_aware_attention(H_C, self.W_Q, H_d)


class PlainAttention(nn.Module):
    """Free ``N_L x h`` query matrix; ignores the code descriptions."""

    uses_code_matrix = False

    def __init__(self, n_labels: int, hidden: int):
        super().__init__()
        self.U = nn.Parameter(torch.empty(n_labels, hidden))
        nn.init.xavier_uniform_(self.U)

    def forward(self, H_d: torch.Tensor, H_C=None) -> torch.Tensor:
        return plain_label_attention(self.U, H_d)
