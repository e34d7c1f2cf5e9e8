"""Training objectives: separated cross-entropy, supervised contrastive
loss, multi-level supervision, and cross-expert self-distillation.

Class ids index logit columns directly. Losses that restrict the class
support do so by slicing columns, so parameters feeding excluded
columns receive exactly zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    as_tensor,
    logsumexp,
    masked_logsumexp,
    normalize_rows,
    pick,
    row_norms,
    take_columns,
    take_rows,
)
from .network import ExpertOutputs

DISTILL_DIRECTIONS = ("reverse", "forward")


@dataclass
class LossConfig:
    current_task_classes: tuple = ()
    seen_classes: tuple = ()
    temperature: float = 0.07
    ce_weight: float = 1.0
    scl_weight: float = 1.0
    rsd_enabled: bool = True
    rsd_student_index: int | None = None  # 1-based expert index; None means the last expert
    distill_direction: str = "reverse"

    def validate(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.distill_direction not in DISTILL_DIRECTIONS:
            raise ValueError(f"distill_direction must be one of {DISTILL_DIRECTIONS}")
        if not set(self.current_task_classes) <= set(self.seen_classes):
            raise ValueError("current task classes must be a subset of seen classes")
        if self.rsd_student_index is not None and self.rsd_student_index < 1:
            raise ValueError("rsd_student_index is 1-based and must be at least 1")


@dataclass
class BatchSplit:
    """Row bookkeeping for a combined (incoming + replay) batch."""

    labels: np.ndarray
    new_rows: np.ndarray
    buffer_rows: np.ndarray


def _sorted_subset(class_subset) -> np.ndarray:
    subset = np.unique(np.asarray(class_subset, dtype=np.int64))
    if subset.size == 0:
        raise ValueError("class subset must be non-empty")
    return subset


def cross_entropy(logits, labels, class_subset) -> Tensor:
    """Mean negative log-likelihood with the softmax restricted to
    `class_subset` columns. Labels must belong to the subset."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cross_entropy on an empty batch")
    subset = _sorted_subset(class_subset)
    if subset[0] < 0 or subset[-1] >= logits.data.shape[1]:
        raise ValueError("class subset indexes outside the logit columns")
    missing = np.setdiff1d(labels, subset)
    if missing.size:
        raise ValueError(f"labels {missing.tolist()} are outside the class subset")
    restricted = take_columns(logits, subset)
    positions = np.searchsorted(subset, labels)
    return (logsumexp(restricted) - pick(restricted, positions)).mean()


def separated_ce(logits_new, logits_buf, labels_new, labels_buf, cfg: LossConfig) -> Tensor:
    """Cross-entropy with separated class support: the incoming batch is
    scored only against the current task's classes, the replay batch
    against everything seen so far. An empty replay batch contributes 0."""
    loss = cross_entropy(logits_new, labels_new, cfg.current_task_classes)
    labels_buf = np.asarray(labels_buf, dtype=np.int64) if labels_buf is not None else np.empty(0, np.int64)
    if labels_buf.size == 0:
        return loss
    return loss + cross_entropy(logits_buf, labels_buf, cfg.seen_classes)


def sup_con(projections, labels, temperature: float) -> Tensor:
    """Supervised contrastive loss over row-normalized projections.

    For each anchor with at least one same-label partner, averages
    -log softmax(sim/t) over its positives; anchors without positives
    are skipped, and the result is the mean over contributing anchors.
    Returns a constant zero when no anchor has a positive.
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    projections = as_tensor(projections)
    labels = np.asarray(labels, dtype=np.int64)
    n = projections.data.shape[0]
    if n < 2:
        raise ValueError("batch too small: contrastive loss needs at least 2 samples")
    if labels.shape != (n,):
        raise ValueError("labels must be one per projection row")

    q = normalize_rows(projections)
    sims = (q @ q.T) * (1.0 / temperature)

    off_diag = ~np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & off_diag
    pos_counts = positives.sum(axis=1)
    contributing = pos_counts > 0
    n_contrib = int(contributing.sum())
    if n_contrib == 0:
        return Tensor(0.0)

    # loss_i = logsumexp_j!=i(s_ij) - mean_{p in P(i)} s_ip
    weights = positives / np.maximum(pos_counts, 1)[:, None]
    denom = masked_logsumexp(sims, off_diag)
    total = (denom * contributing.astype(np.float64)).sum() - (sims * weights).sum()
    return total * (1.0 / n_contrib)


def expert_loss(logits, projections, split: BatchSplit, cfg: LossConfig) -> Tensor:
    """One expert's supervision: separated CE plus contrastive loss."""
    logits_new = take_rows(logits, split.new_rows)
    logits_buf = take_rows(logits, split.buffer_rows) if len(split.buffer_rows) else None
    ce = separated_ce(
        logits_new,
        logits_buf,
        split.labels[split.new_rows],
        split.labels[split.buffer_rows] if len(split.buffer_rows) else None,
        cfg,
    )
    scl = sup_con(projections, split.labels, cfg.temperature)
    return ce * cfg.ce_weight + scl * cfg.scl_weight


def mls_loss(outputs: ExpertOutputs, split: BatchSplit, cfg: LossConfig) -> Tensor:
    """Multi-level supervision: sum of per-expert losses."""
    total = None
    for i in range(outputs.n_experts):
        term = expert_loss(outputs.logits[i], outputs.projections[i], split, cfg)
        total = term if total is None else total + term
    return total


def rsd_loss(aligned, cfg: LossConfig) -> Tensor:
    """Self-distillation between aligned features.

    All non-student experts act as teachers. Features are row-normalized
    and the loss is the batch mean of the L2 distance to each teacher,
    summed over teachers. In "reverse" mode the teachers are detached so
    only the student branch learns; "forward" detaches the student so
    the teachers chase it. The value is identical either way; only the
    gradient routing differs. Returns a constant zero with one expert.
    """
    n = len(aligned)
    if n < 2:
        return Tensor(0.0)
    student = cfg.rsd_student_index if cfg.rsd_student_index is not None else n
    if not 1 <= student <= n:
        raise ValueError(f"rsd_student_index must be in 1..{n}")
    if cfg.distill_direction not in DISTILL_DIRECTIONS:
        raise ValueError(f"distill_direction must be one of {DISTILL_DIRECTIONS}")
    s = student - 1
    if cfg.distill_direction == "reverse":
        student_feat = normalize_rows(aligned[s])
        teachers = [normalize_rows(aligned[i].detach()) for i in range(n) if i != s]
    else:
        student_feat = normalize_rows(aligned[s].detach())
        teachers = [normalize_rows(aligned[i]) for i in range(n) if i != s]
    total = None
    for teacher in teachers:
        term = row_norms(teacher - student_feat).mean()
        total = term if total is None else total + term
    return total


def mose_loss(outputs: ExpertOutputs, split: BatchSplit, cfg: LossConfig) -> Tensor:
    """Full objective: multi-level supervision plus self-distillation."""
    loss = mls_loss(outputs, split, cfg)
    if cfg.rsd_enabled:
        loss = loss + rsd_loss(outputs.aligned, cfg)
    return loss


def er_loss(logits, labels, class_support) -> Tensor:
    """Replay baseline objective: plain CE over the seen classes."""
    return cross_entropy(logits, labels, class_support)


def scr_loss(projections, labels, temperature: float) -> Tensor:
    """Contrastive-replay baseline objective."""
    return sup_con(projections, labels, temperature)
