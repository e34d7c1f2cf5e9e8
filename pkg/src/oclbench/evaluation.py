"""Evaluation: nearest-class-mean classification from buffer exemplars,
linear readout, the task-by-checkpoint accuracy matrix, and the
headline metrics (average accuracy, forgetting, buffer overfitting).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .autodiff import no_grad
from .memory import MemoryBuffer
from .network import ExpertModel

EVAL_MODES = (
    "final-expert-ncm",
    "per-expert-ncm",
    "moe-ncm",
    "max-oracle",
    "final-linear",
    "moe-linear",
)


def _normalize(rows: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.sqrt((rows * rows).sum(axis=1))
    safe = norms >= eps
    denom = np.where(safe, norms, 1.0)
    return np.where(safe[:, None], rows / denom[:, None], 0.0)


@dataclass
class ClassMeans:
    expert_index: int  # 1-based
    classes: np.ndarray  # sorted class ids present in the buffer
    means: np.ndarray  # (len(classes), aligned_dim), means of normalized features
    counts: np.ndarray  # exemplars per class


def compute_class_means(model: ExpertModel, buffer: MemoryBuffer, expert_index: int) -> ClassMeans:
    """Mean of row-normalized aligned features per class, from the
    buffer's exemplars, for one expert (1-based index)."""
    if len(buffer) == 0:
        raise ValueError("cannot compute class means from an empty buffer")
    if not 1 <= expert_index <= model.config.n_experts:
        raise ValueError(f"expert_index must be in 1..{model.config.n_experts}")
    snap = buffer.contents()
    with no_grad():
        outputs = model.forward_all(snap.features)
    feats = _normalize(outputs.aligned[expert_index - 1].data)
    classes = np.unique(snap.labels)
    means = np.stack([feats[snap.labels == c].mean(axis=0) for c in classes])
    counts = np.asarray([(snap.labels == c).sum() for c in classes])
    return ClassMeans(expert_index, classes, means, counts)


def ncm_predict(feature: np.ndarray, class_means: ClassMeans) -> int:
    """Nearest class mean for one feature row (normalized first). Ties
    go to the smallest class id."""
    feature = np.asarray(feature, dtype=np.float64).reshape(1, -1)
    return int(class_means.classes[_ncm_distances(feature, class_means).argmin(axis=1)[0]])


def _ncm_distances(features: np.ndarray, class_means: ClassMeans) -> np.ndarray:
    """Euclidean distances from normalized features to each class mean:
    (n, n_classes), columns in sorted-class order."""
    q = _normalize(features)
    diff = q[:, None, :] - class_means.means[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    return float((predictions == labels).mean())


def evaluate(model: ExpertModel, test_sets, buffer: MemoryBuffer | None, mode: str) -> np.ndarray:
    """Accuracy on each test set under one eval mode.

    NCM modes classify against the classes present in the buffer; test
    samples of absent classes can never be predicted and count as
    errors. Returns shape (len(test_sets),), except "per-expert-ncm"
    which returns (n_experts, len(test_sets)).

    Modes: final-expert-ncm (last expert's features), per-expert-ncm,
    moe-ncm (average of negative distances across experts), max-oracle
    (best single expert per test set), final-linear (last expert's
    logits), moe-linear (averaged logits).
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}")
    n_experts = model.config.n_experts
    needs_ncm = mode in ("final-expert-ncm", "per-expert-ncm", "moe-ncm", "max-oracle")
    if needs_ncm:
        if buffer is None or len(buffer) == 0:
            raise ValueError(f"eval mode {mode} needs a non-empty buffer")
        if mode == "final-expert-ncm":
            means = [compute_class_means(model, buffer, n_experts)]
        else:
            means = [compute_class_means(model, buffer, i) for i in range(1, n_experts + 1)]

    per_task = []
    for test in test_sets:
        with no_grad():
            outputs = model.forward_all(test.features)
        if mode == "final-linear":
            preds = outputs.logits[-1].data.argmax(axis=1)
            per_task.append(_accuracy(preds, test.labels))
        elif mode == "moe-linear":
            stacked = np.mean([lg.data for lg in outputs.logits], axis=0)
            per_task.append(_accuracy(stacked.argmax(axis=1), test.labels))
        elif mode == "final-expert-ncm":
            dists = _ncm_distances(outputs.aligned[-1].data, means[0])
            preds = means[0].classes[dists.argmin(axis=1)]
            per_task.append(_accuracy(preds, test.labels))
        elif mode == "moe-ncm":
            scores = np.mean(
                [-_ncm_distances(outputs.aligned[i].data, means[i]) for i in range(n_experts)],
                axis=0,
            )
            preds = means[0].classes[scores.argmax(axis=1)]
            per_task.append(_accuracy(preds, test.labels))
        else:  # per-expert-ncm, max-oracle
            accs = []
            for i in range(n_experts):
                dists = _ncm_distances(outputs.aligned[i].data, means[i])
                preds = means[i].classes[dists.argmin(axis=1)]
                accs.append(_accuracy(preds, test.labels))
            per_task.append(max(accs) if mode == "max-oracle" else accs)

    result = np.asarray(per_task, dtype=np.float64)
    return result.T if mode == "per-expert-ncm" else result


class AccuracyMatrix:
    """a[t][j]: accuracy on task t's test set after training task j.

    Entries exist for t <= j (a task is only evaluated once seen);
    unset entries are NaN. Task and checkpoint indices are 1-based.
    """

    def __init__(self, task_count: int):
        if task_count < 1:
            raise ValueError("task_count must be at least 1")
        self.task_count = task_count
        self.values = np.full((task_count, task_count), np.nan)

    def record(self, task: int, checkpoint: int, accuracy: float):
        if not 1 <= task <= self.task_count or not 1 <= checkpoint <= self.task_count:
            raise ValueError("task and checkpoint indices are 1-based, up to task_count")
        if task > checkpoint:
            raise ValueError("a task is only evaluated at checkpoints at or after it")
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError("accuracy must be in [0, 1]")
        self.values[task - 1, checkpoint - 1] = accuracy

    def get(self, task: int, checkpoint: int) -> float:
        return float(self.values[task - 1, checkpoint - 1])

    def is_complete(self) -> bool:
        t = np.arange(self.task_count)
        return not np.isnan(self.values[t[:, None] <= t[None, :]]).any()

    def to_csv(self) -> str:
        """Checkpoint-major rows; floats via repr for lossless round trips."""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["checkpoint"] + [f"task{t}" for t in range(1, self.task_count + 1)])
        for j in range(self.task_count):
            row = [str(j + 1)]
            for t in range(self.task_count):
                v = self.values[t, j]
                row.append("" if np.isnan(v) else repr(float(v)))
            writer.writerow(row)
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AccuracyMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][0] != "checkpoint":
            raise ValueError("not an accuracy matrix CSV")
        task_count = len(rows[0]) - 1
        if len(rows) != task_count + 1:
            raise ValueError("accuracy matrix CSV must have one row per checkpoint")
        matrix = cls(task_count)
        for row in rows[1:]:
            j = int(row[0])
            for t in range(task_count):
                cell = row[t + 1]
                if cell:
                    matrix.values[t, j - 1] = float(cell)
        return matrix


def acc_af(matrix: AccuracyMatrix):
    """Headline metrics from a complete matrix.

    ACC: mean final-checkpoint accuracy over tasks. AF: mean over all
    but the last task of (best earlier-checkpoint accuracy minus final
    accuracy); 0 for a single task.
    """
    if not matrix.is_complete():
        raise ValueError("accuracy matrix has unset entries below the diagonal")
    values = matrix.values
    task_count = matrix.task_count
    acc = float(values[:, task_count - 1].mean())
    if task_count == 1:
        return acc, 0.0
    drops = []
    for t in range(task_count - 1):
        best_earlier = values[t, t:task_count - 1].max()
        drops.append(best_earlier - values[t, task_count - 1])
    return acc, float(np.mean(drops))


def bof(buffer_accuracy: float, test_accuracy: float) -> float:
    """Buffer overfitting: relative gap between accuracy on stored
    exemplars and on held-out data."""
    if not 0.0 <= buffer_accuracy <= 1.0 or not 0.0 <= test_accuracy <= 1.0:
        raise ValueError("accuracies must be in [0, 1]")
    if test_accuracy <= 0.0:
        raise ValueError("test accuracy must be positive to measure relative overfitting")
    return (buffer_accuracy - test_accuracy) / test_accuracy
