"""Multi-label evaluation: AUC, F1, precision@K and grouped F1.

Conventions:
    * predictions are positive when ``prob > threshold``;
    * a label with no gold and no predicted positives has F1 = 0 and still
      counts toward the macro mean;
    * macro AUC averages only labels that have both classes present; ties
      get midranks.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

logger = logging.getLogger(__name__)

FREQUENCY_BANDS = ((1, 10), (11, 50), (51, 100), (101, 500), (501, None))
LENGTH_BANDS = ((0, 500), (501, 1000), (1001, 1500), (1501, 2000), (2001, None))


@dataclass(frozen=True)
class PredictionMatrix:
    probs: np.ndarray
    gold: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        gold = np.asarray(self.gold)
        if probs.ndim != 2 or probs.shape != gold.shape:
            raise ValueError(f"probs {probs.shape} and gold {gold.shape} must be equal 2-d shapes")
        if probs.size and (np.nanmin(probs) < 0 or np.nanmax(probs) > 1 or np.isnan(probs).any()):
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.isin(gold, (0, 1)).all():
            raise ValueError("gold matrix must be binary")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "gold", gold.astype(bool))

    @property
    def n_docs(self) -> int:
        return self.probs.shape[0]

    @property
    def n_labels(self) -> int:
        return self.probs.shape[1]

    def columns(self, idx: Sequence[int]) -> "PredictionMatrix":
        idx = np.asarray(idx, dtype=int)
        return PredictionMatrix(self.probs[:, idx], self.gold[:, idx])


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, fp, fn))
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(denom), where=denom > 0)


def micro_macro_f1(pred: PredictionMatrix, threshold: float = 0.5) -> tuple[float, float]:
    """Return ``(macro_f1, micro_f1)`` after binarizing at ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if pred.probs.size == 0:
        raise ValueError("empty prediction matrix")
    yhat = pred.probs > threshold
    y = pred.gold
    tp = (yhat & y).sum(axis=0)
    fp = (yhat & ~y).sum(axis=0)
    fn = (~yhat & y).sum(axis=0)
    macro = float(_f1(tp, fp, fn).mean())
    micro = float(_f1(tp.sum(), fp.sum(), fn.sum()))
    return macro, micro


def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def micro_macro_auc(pred: PredictionMatrix) -> tuple[float, float]:
    """Return ``(macro_auc, micro_auc)`` via the Mann-Whitney rank statistic.

    Raises:
        ValueError: no label has both positive and negative documents.
    """
    per_label = []
    for j in range(pred.n_labels):
        col = pred.gold[:, j]
        if 0 < col.sum() < col.size:
            per_label.append(_rank_auc(pred.probs[:, j], col))
    if not per_label:
        raise ValueError("AUC undefined: no label has both positive and negative examples")
    flat_y = pred.gold.ravel()
    micro = _rank_auc(pred.probs.ravel(), flat_y)
    return float(np.mean(per_label)), micro


def precision_at_k(pred: PredictionMatrix, k: int) -> float:
    """Mean over documents of the gold fraction among the top-``k`` labels.

    Ties in score are broken toward the lower label index.
    """
    if not 1 <= k <= pred.n_labels:
        raise ValueError(f"K must be in [1, {pred.n_labels}], got {k}")
    if pred.n_docs == 0:
        raise ValueError("empty prediction matrix")
    top = np.argsort(-pred.probs, axis=1, kind="stable")[:, :k]
    hits = np.take_along_axis(pred.gold, top, axis=1).sum(axis=1)
    return float(np.mean(hits / k))


def band_name(lo: int, hi: Optional[int]) -> str:
    return f"[{lo},{'inf' if hi is None else hi}]"


def _in_band(v, lo, hi) -> bool:
    return v >= lo and (hi is None or v <= hi)


def _group_f1(pred: PredictionMatrix, values: np.ndarray, bands, threshold: float) -> dict[str, tuple[float, float]]:
    out = {}
    for lo, hi in bands:
        idx = [j for j, v in enumerate(values) if not np.isnan(v) and _in_band(v, lo, hi)]
        if idx:
            out[band_name(lo, hi)] = micro_macro_f1(pred.columns(idx), threshold)
    return out


def frequency_group_f1(pred: PredictionMatrix, train_label_counts: Sequence[int],
                       threshold: float = 0.5) -> dict[str, tuple[float, float]]:
    """``(macro, micro)`` F1 per training-frequency band; empty bands omitted.

    Labels never seen in training fall outside every band.
    """
    counts = np.asarray(train_label_counts, dtype=np.float64)
    if counts.shape != (pred.n_labels,):
        raise ValueError(f"need one count per label ({pred.n_labels}), got {counts.shape}")
    return _group_f1(pred, counts, FREQUENCY_BANDS, threshold)


def label_average_lengths(gold: np.ndarray, doc_lengths: Sequence[int]) -> np.ndarray:
    """Mean length of the notes carrying each label (NaN if none do)."""
    gold = np.asarray(gold, dtype=np.float64)
    lengths = np.asarray(doc_lengths, dtype=np.float64)
    n = gold.sum(axis=0)
    total = lengths @ gold
    return np.divide(total, n, out=np.full(n.shape, np.nan), where=n > 0)


def length_group_f1(pred: PredictionMatrix, doc_lengths: Sequence[int],
                    threshold: float = 0.5) -> dict[str, tuple[float, float]]:
    """``(macro, micro)`` F1 per band of average note length of each label."""
    if len(doc_lengths) != pred.n_docs:
        raise ValueError(f"need one length per document ({pred.n_docs}), got {len(doc_lengths)}")
    avg = label_average_lengths(pred.gold, doc_lengths)
    return _group_f1(pred, avg, LENGTH_BANDS, threshold)


@dataclass
class MetricsReport:
    macro_auc: float
    micro_auc: float
    macro_f1: float
    micro_f1: float
    precision_at_k: dict[int, float] = field(default_factory=dict)
    frequency_group_f1: dict[str, tuple[float, float]] = field(default_factory=dict)
    length_group_f1: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_flat_dict(self) -> dict[str, float]:
        flat = {
            "macro_auc": self.macro_auc,
            "micro_auc": self.micro_auc,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
        }
        for k, v in sorted(self.precision_at_k.items()):
            flat[f"p@{k}"] = v
        for prefix, groups in (("freq", self.frequency_group_f1), ("length", self.length_group_f1)):
            for name, (macro, micro) in groups.items():
                flat[f"{prefix}{name}_macro_f1"] = macro
                flat[f"{prefix}{name}_micro_f1"] = micro
        return flat

    def to_json(self) -> str:
        return json.dumps(self.to_flat_dict(), indent=2)

    def to_table(self) -> str:
        lines = [f"{'metric':<28}{'value':>10}", "-" * 38]
        for key, value in self.to_flat_dict().items():
            lines.append(f"{key:<28}{value:>10.4f}")
        return "\n".join(lines) + "\n"


def evaluate(
    pred: PredictionMatrix,
    ks: Iterable[int] = (5, 8),
    threshold: float = 0.5,
    train_label_counts: Optional[Sequence[int]] = None,
    doc_lengths: Optional[Sequence[int]] = None,
) -> MetricsReport:
    """Compute the whole suite; group analyses only when their inputs are given."""
    macro_f1, micro_f1 = micro_macro_f1(pred, threshold)
    try:
        macro_auc, micro_auc = micro_macro_auc(pred)
    except ValueError:
        logger.warning("AUC undefined for this split; reporting NaN")
        macro_auc = micro_auc = float("nan")
    report = MetricsReport(macro_auc, micro_auc, macro_f1, micro_f1)
    for k in ks:
        if k > pred.n_labels:
            logger.warning("skipping P@%d: only %d labels", k, pred.n_labels)
            continue
        report.precision_at_k[k] = precision_at_k(pred, k)
    if train_label_counts is not None:
        report.frequency_group_f1 = frequency_group_f1(pred, train_label_counts, threshold)
    if doc_lengths is not None:
        report.length_group_f1 = length_group_f1(pred, doc_lengths, threshold)
    return report
