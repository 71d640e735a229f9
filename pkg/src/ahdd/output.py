"""Per-label classification head.

The plain head scores label ``i`` as ``V_d[i] . W[:, i]``. The
description-aware head adds ``V_d[i] . (H_C W_l)[i]``, i.e. the diagonal of
``V_d (H_C W_l)^T``. No bias term.
"""

from __future__ import annotations

import torch
from torch import nn

DESCRIPTION_AWARE = "description_aware"
PLAIN = "plain"


def scores(V_d: torch.Tensor, W: torch.Tensor, H_C: torch.Tensor = None, W_l: torch.Tensor = None) -> torch.Tensor:
    """Score vector of length ``N_L``; ``W_l=None`` gives the plain head."""
    if W.shape != (V_d.shape[1], V_d.shape[0]):
        raise ValueError(f"W has shape {tuple(W.shape)}, expected {(V_d.shape[1], V_d.shape[0])}")
    out = (V_d * W.t()).sum(dim=1)
    if W_l is not None:
        if H_C is None or H_C.shape != V_d.shape:
            raise ValueError("description-aware scoring needs H_C with the same shape as V_d")
        out = out + (V_d * (H_C @ W_l)).sum(dim=1)
    return out


def probabilities(s: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(s)


class OutputHead(nn.Module):
    def __init__(self, n_labels: int, hidden: int, mode: str = DESCRIPTION_AWARE):
        super().__init__()
        if mode not in (DESCRIPTION_AWARE, PLAIN):
            raise ValueError(f"unknown output mode {mode!r}")
        self.mode = mode
        self.W = nn.Parameter(torch.empty(hidden, n_labels))
        nn.init.xavier_uniform_(self.W)
        if mode == DESCRIPTION_AWARE:
            self.W_l = nn.Parameter(torch.empty(hidden, hidden))
            nn.init.eye_(self.W_l)
        else:
            self.W_l = None

    @property
    def uses_code_matrix(self) -> bool:
        return self.mode == DESCRIPTION_AWARE

    def forward(self, V_d: torch.Tensor, H_C: torch.Tensor = None) -> torch.Tensor:
        return scores(V_d, self.W, H_C, self.W_l)
