"""Joint objective, mini-batch training and the inference path.

Per document the objective is

    bce(note) + lambda_sim * L_sim + bce(associated descriptions) + lambda_dis * L_dis

where the associated-description pseudo-document is classified against the
note's own targets. Prediction only ever runs the note path; the code
matrix is built once per ``Predictor``.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from ahdd import distillation
from ahdd.corpus import Document, target_matrix
from ahdd.distillation import DistillationPair, loss_dis, loss_sim
from ahdd.encoder import ENCODER_KINDS, description_token_ids
from ahdd.errors import ConfigurationError, DivergenceError
from ahdd.hierarchy import CodeHierarchy
from ahdd.metrics import MetricsReport, PredictionMatrix, evaluate, micro_macro_f1
from ahdd.model import AHDDModel, ModelSpec, build_model
from ahdd.output import probabilities
from ahdd.text import Vocabulary

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
LOG_COLUMNS = ("epoch", "bce_doc", "bce_assoc", "l_sim", "l_dis", "total", "dev_micro_f1")


@dataclass
class TrainingConfig:
    lambda_sim: float = 0.1
    lambda_dis: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 16
    seed: int = 42
    encoder: str = "cnn"
    emb_dim: int = 100
    hidden: int = 64
    kernel_size: int = 3
    no_add: bool = False
    no_hdd: bool = False
    no_d_att: bool = False
    no_d_output: bool = False
    threshold: float = 0.5
    max_length: int = 2500
    min_count: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.lambda_sim < 0 or self.lambda_dis < 0:
            problems.append("lambda_sim and lambda_dis must be >= 0")
        if not self.learning_rate >= 0:
            problems.append("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            problems.append("epochs and batch_size must be >= 1")
        if self.encoder not in ENCODER_KINDS:
            problems.append(f"encoder must be one of {ENCODER_KINDS}")
        if not 0.0 < self.threshold < 1.0:
            problems.append("threshold must be in (0, 1)")
        if self.emb_dim < 1 or self.hidden < 1 or self.max_length < 1 or self.min_count < 1:
            problems.append("emb_dim, hidden, max_length and min_count must be >= 1")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def model_spec(self, vocab_size: int, n_labels: int) -> ModelSpec:
        return ModelSpec(
            vocab_size=vocab_size, n_labels=n_labels, emb_dim=self.emb_dim, hidden=self.hidden,
            encoder=self.encoder, kernel_size=self.kernel_size,
            code_aware_attention=not self.no_d_att, description_aware_output=not self.no_d_output,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class LossBundle:
    """Loss components for one document (or a mean over several)."""

    bce_doc: torch.Tensor
    bce_assoc: torch.Tensor
    l_sim: torch.Tensor
    l_dis: torch.Tensor
    total: torch.Tensor

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("bce_doc", "bce_assoc", "l_sim", "l_dis", "total")}

    def recompose(self, lambda_sim: float, lambda_dis: float) -> float:
        v = self.values()
        return v["bce_doc"] + lambda_sim * v["l_sim"] + v["bce_assoc"] + lambda_dis * v["l_dis"]


def bce(probs: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Summed binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7]."""
    if probs.shape != y.shape:
        raise ValueError(f"probability vector {tuple(probs.shape)} vs target {tuple(y.shape)}")
    p = probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).sum()


def make_pair(doc: Document, model: AHDDModel, hierarchy: CodeHierarchy, vocab: Vocabulary) -> DistillationPair:
    model.stats["distillation_pairs"] += 1
    return distillation.build_distillation_pair(doc.labels, hierarchy, vocab)


def forward(
    doc: Document,
    model: AHDDModel,
    config: TrainingConfig,
    hierarchy: CodeHierarchy,
    vocab: Vocabulary,
    H_C: Optional[torch.Tensor] = None,
    pair: Optional[DistillationPair] = None,
) -> tuple[torch.Tensor, LossBundle]:
    """Training-time forward pass for one document.

    Args:
        doc: Document with at least one gold label.
        H_C: Code matrix to reuse across a batch; built here if needed and absent.
        pair: Precomputed distillation documents; built here if needed and absent.

    Returns:
        The note's probability vector and its ``LossBundle``.
    """
    if not doc.labels:
        raise ValueError(f"document {doc.doc_id!r} has no gold labels")
    if H_C is None and model.needs_code_matrix:
        H_C = model.code_matrix()
    y = torch.as_tensor(doc.target(hierarchy), dtype=model.head.W.dtype)
    zero = y.new_zeros(())

    _, V_d = model.label_repr(doc.tokens, H_C, role="document")
    probs = probabilities(model.score(V_d, H_C))
    bce_doc = bce(probs, y)

    bce_assoc = l_sim = l_dis = zero
    if not (config.no_add and config.no_hdd):
        if pair is None:
            pair = make_pair(doc, model, hierarchy, vocab)
        if not config.no_add:
            _, V_cA = model.label_repr(pair.assoc_doc, H_C, role="assoc")
            l_sim = loss_sim(V_d, V_cA)
            bce_assoc = bce(probabilities(model.score(V_cA, H_C)), y)
        if not config.no_hdd and pair.sibling_doc is not None:
            _, V_cS = model.label_repr(pair.sibling_doc, H_C, role="sibling")
            l_dis = loss_dis(V_d, V_cS)

    total = bce_doc + config.lambda_sim * l_sim + bce_assoc + config.lambda_dis * l_dis
    return probs, LossBundle(bce_doc, bce_assoc, l_sim, l_dis, total)


class Predictor:
    """Frozen inference path: note encoding, attention and head only.

    The code matrix is computed once at construction and reused.
    """

    def __init__(self, model: AHDDModel, hierarchy: CodeHierarchy):
        self.model = model
        self.hierarchy = hierarchy
        self._was_training = model.training
        model.eval()
        with torch.no_grad():
            self.H_C = model.code_matrix() if model.needs_code_matrix else None

    def probabilities(self, doc: Document) -> np.ndarray:
        with torch.no_grad():
            _, V = self.model.label_repr(doc.tokens, self.H_C)
            return probabilities(self.model.score(V, self.H_C)).numpy()

    def attention(self, doc: Document) -> np.ndarray:
        """``(N_L, N_d)`` attention weights over the note's tokens."""
        with torch.no_grad():
            weights, _ = self.model.label_repr(doc.tokens, self.H_C)
            return weights.numpy()

    def matrix(self, docs: Sequence[Document]) -> np.ndarray:
        return np.stack([self.probabilities(d) for d in docs]) if docs else np.zeros((0, len(self.hierarchy)))

    def close(self) -> None:
        self.model.train(self._was_training)


def predict(doc: Document, predictor: Predictor, threshold: float = 0.5) -> tuple[np.ndarray, set[str]]:
    """Probabilities and the codes whose probability exceeds ``threshold``."""
    p = predictor.probabilities(doc)
    return p, {predictor.hierarchy.code_of(i) for i in np.flatnonzero(p > threshold)}


def evaluate_docs(
    docs: Sequence[Document],
    model: AHDDModel,
    hierarchy: CodeHierarchy,
    threshold: float = 0.5,
    ks: Sequence[int] = (5, 8),
    train_label_counts=None,
) -> MetricsReport:
    predictor = Predictor(model, hierarchy)
    try:
        pred = PredictionMatrix(predictor.matrix(docs), target_matrix(docs, hierarchy))
    finally:
        predictor.close()
    return evaluate(pred, ks=ks, threshold=threshold, train_label_counts=train_label_counts,
                    doc_lengths=[len(d) for d in docs])


def dev_micro_f1(docs: Sequence[Document], model: AHDDModel, hierarchy: CodeHierarchy, threshold: float) -> float:
    predictor = Predictor(model, hierarchy)
    try:
        pred = PredictionMatrix(predictor.matrix(docs), target_matrix(docs, hierarchy))
    finally:
        predictor.close()
    return micro_macro_f1(pred, threshold)[1]


@dataclass
class EpochLog:
    epoch: int
    bce_doc: float
    bce_assoc: float
    l_sim: float
    l_dis: float
    total: float
    dev_micro_f1: float

    def row(self) -> list:
        return [getattr(self, c) for c in LOG_COLUMNS]


@dataclass
class TrainResult:
    model: AHDDModel
    log: list[EpochLog]
    best_epoch: int
    step_losses: list[dict[str, float]] = field(default_factory=list)


def new_model(config: TrainingConfig, vocab: Vocabulary, hierarchy: CodeHierarchy) -> AHDDModel:
    spec = config.model_spec(len(vocab), len(hierarchy))
    return build_model(spec, description_token_ids(hierarchy, vocab), seed=config.seed)


def train(
    train_docs: Sequence[Document],
    dev_docs: Sequence[Document],
    model: AHDDModel,
    config: TrainingConfig,
    hierarchy: CodeHierarchy,
    vocab: Vocabulary,
    on_epoch: Optional[Callable[[EpochLog], None]] = None,
) -> TrainResult:
    """Adam-trained mini-batches with per-document gradient accumulation.

    The returned model carries the parameters of the epoch with the best dev
    micro-F1 (the last epoch when there is no dev split).

    Raises:
        DivergenceError: a non-finite loss, naming the epoch and batch.
    """
    train_docs = [d for d in train_docs if d.labels]
    if not train_docs:
        raise ConfigurationError("training split is empty (or has no labelled documents)")
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    use_pairs = not (config.no_add and config.no_hdd)
    pairs = [make_pair(d, model, hierarchy, vocab) if use_pairs else None for d in train_docs]

    log: list[EpochLog] = []
    step_losses: list[dict[str, float]] = []
    best_f1, best_epoch, best_state = -math.inf, 0, None
    model.train()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_docs))
        sums = dict.fromkeys(("bce_doc", "bce_assoc", "l_sim", "l_dis", "total"), 0.0)
        for b, start in enumerate(range(0, len(order), config.batch_size), start=1):
            batch = order[start:start + config.batch_size]
            optimizer.zero_grad()
            H_C = model.code_matrix() if model.needs_code_matrix else None
            batch_total = None
            for i in batch:
                _, bundle = forward(train_docs[i], model, config, hierarchy, vocab, H_C=H_C, pair=pairs[i])
                values = bundle.values()
                if not all(math.isfinite(v) for v in values.values()):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b} "
                                          f"(document {train_docs[i].doc_id!r}): {values}")
                step_losses.append(values)
                for k, v in values.items():
                    sums[k] += v
                batch_total = bundle.total if batch_total is None else batch_total + bundle.total
            (batch_total / len(batch)).backward()
            optimizer.step()

        n = len(train_docs)
        f1 = dev_micro_f1(dev_docs, model, hierarchy, config.threshold) if dev_docs else float("nan")
        entry = EpochLog(epoch, *(sums[k] / n for k in ("bce_doc", "bce_assoc", "l_sim", "l_dis", "total")), f1)
        log.append(entry)
        logger.info("epoch %d total %.4f dev micro-F1 %.4f", epoch, entry.total, f1)
        if on_epoch is not None:
            on_epoch(entry)
        score = f1 if dev_docs else epoch
        if score > best_f1:
            best_f1, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())
        model.train()

    model.load_state_dict(best_state)
    return TrainResult(model=model, log=log, best_epoch=best_epoch, step_losses=step_losses)


def write_loss_log(path, log: Sequence[EpochLog]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(LOG_COLUMNS) + "\n")
        for e in log:
            fh.write("\t".join([str(e.epoch)] + [repr(float(v)) for v in e.row()[1:]]) + "\n")


def read_loss_log(path) -> list[dict[str, float]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        return [dict(zip(header, map(float, line.rstrip("\n").split("\t")))) for line in fh if line.strip()]
