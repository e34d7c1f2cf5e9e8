"""Synthetic data generation, the binary dataset format, and the
one-pass task stream protocol.

A stream partitions the class set into disjoint tasks and serves each
task's samples exactly once, in batches, through a strict protocol:
a task must be opened and drained before the next one starts, and the
end of a task is signaled by a single ``None``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"OCL1"


class ProtocolViolation(RuntimeError):
    """Raised when the one-pass stream discipline is broken."""


@dataclass
class Batch:
    features: np.ndarray  # (n, dim) float64
    labels: np.ndarray  # (n,) int64
    ids: np.ndarray | None = None  # (n,) int64 sample ids, when streamed
    image_shape: tuple | None = None  # (channels, height, width) when image-like

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass
class DatasetSource:
    kind: str  # provenance tag: "synthetic", "file-backed", "buffer"
    features: np.ndarray  # (count, dim) float64
    labels: np.ndarray  # (count,) int64
    class_count: int
    image_shape: tuple | None = None

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


@dataclass
class TaskSpec:
    task_index: int  # 1-based position in the stream
    class_set: frozenset
    sample_ids: np.ndarray  # ordered row indices into the source


def generate_synthetic(class_count: int, per_class: int, dim: int, spread: float, seed: int) -> DatasetSource:
    """Gaussian blobs: one standard-normal mean per class, samples at
    mean + spread * noise. spread=0 puts every sample exactly on its
    class mean."""
    if class_count < 2:
        raise ValueError("class_count must be at least 2")
    if per_class < 1:
        raise ValueError("per_class must be at least 1")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((class_count, dim))
    features = np.repeat(means, per_class, axis=0)
    if spread > 0:
        features = features + spread * rng.standard_normal(features.shape)
    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)
    return DatasetSource("synthetic", features, labels, class_count)


def split_by_class(source: DatasetSource, holdout_per_class: int, seed: int):
    """Split off `holdout_per_class` samples of every class (for test
    sets). Returns (remainder, holdout), both sharing the source's
    class ids."""
    if holdout_per_class < 1:
        raise ValueError("holdout_per_class must be at least 1")
    rng = np.random.default_rng(seed)
    hold_idx = []
    for c in range(source.class_count):
        rows = np.flatnonzero(source.labels == c)
        if rows.size <= holdout_per_class:
            raise ValueError(f"class {c} has only {rows.size} samples, cannot hold out {holdout_per_class}")
        hold_idx.append(rng.choice(rows, size=holdout_per_class, replace=False))
    hold_idx = np.sort(np.concatenate(hold_idx))
    keep = np.setdiff1d(np.arange(len(source)), hold_idx)
    remainder = DatasetSource(source.kind, source.features[keep].copy(), source.labels[keep].copy(),
                              source.class_count, source.image_shape)
    holdout = DatasetSource(source.kind, source.features[hold_idx].copy(), source.labels[hold_idx].copy(),
                            source.class_count, source.image_shape)
    return remainder, holdout


class TaskStream:
    """One-pass stream over a disjoint class-partitioned task sequence."""

    def __init__(self, source: DatasetSource, tasks: list, batch_size: int):
        self.source = source
        self.tasks = tasks
        self.batch_size = batch_size
        self._cursor = [0] * len(tasks)
        self._ended = [False] * len(tasks)  # True once the None marker was served

    @property
    def task_count(self) -> int:
        return len(self.tasks)

    def task_classes(self, task_index: int) -> frozenset:
        self._check_index(task_index)
        return self.tasks[task_index - 1].class_set

    def _check_index(self, task_index: int):
        if not 1 <= task_index <= len(self.tasks):
            raise ValueError(f"task_index must be in 1..{len(self.tasks)}")

    def next_batch(self, task_index: int):
        """Next batch of the given task, or None exactly once at its end.

        Tasks must be consumed in order; revisiting a finished task or
        skipping ahead raises ProtocolViolation.
        """
        self._check_index(task_index)
        t = task_index - 1
        if self._ended[t]:
            raise ProtocolViolation(f"task {task_index} was already fully consumed")
        if any(not self._ended[u] for u in range(t)):
            raise ProtocolViolation(f"task {task_index} requested before earlier tasks finished")
        spec = self.tasks[t]
        start = self._cursor[t]
        if start >= len(spec.sample_ids):
            self._ended[t] = True
            return None
        stop = min(start + self.batch_size, len(spec.sample_ids))
        self._cursor[t] = stop
        ids = spec.sample_ids[start:stop]
        return self._batch_for(ids)

    def _batch_for(self, ids: np.ndarray) -> Batch:
        return Batch(
            features=self.source.features[ids].copy(),
            labels=self.source.labels[ids].copy(),
            ids=ids.copy(),
            image_shape=self.source.image_shape,
        )

    def task_batches(self, task_index: int):
        """Drain one task through the protocol, yielding its batches."""
        while True:
            batch = self.next_batch(task_index)
            if batch is None:
                return
            yield batch

    def replay_epoch(self, task_index: int, rng: np.random.Generator):
        """Extra pass over an already-streamed task, reshuffled. Used by
        multi-epoch sweeps; does not touch the one-pass protocol state."""
        self._check_index(task_index)
        spec = self.tasks[task_index - 1]
        order = rng.permutation(len(spec.sample_ids))
        ids = spec.sample_ids[order]
        return [self._batch_for(ids[i:i + self.batch_size]) for i in range(0, len(ids), self.batch_size)]


def build_task_stream(source: DatasetSource, num_tasks: int, classes_per_task: int,
                      batch_size: int, seed: int) -> TaskStream:
    """Partition classes into `num_tasks` disjoint sets of
    `classes_per_task` (seeded permutation of class ids, then chunks)
    and arrange each task's samples in a seeded order."""
    if num_tasks < 1:
        raise ValueError("num_tasks must be at least 1")
    if classes_per_task < 1:
        raise ValueError("classes_per_task must be at least 1")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if num_tasks * classes_per_task > source.class_count:
        raise ValueError(
            f"{num_tasks} tasks x {classes_per_task} classes exceed the {source.class_count} available classes"
        )
    rng = np.random.default_rng(seed)
    class_order = rng.permutation(source.class_count)
    tasks = []
    for t in range(num_tasks):
        class_set = class_order[t * classes_per_task:(t + 1) * classes_per_task]
        member_rows = np.flatnonzero(np.isin(source.labels, class_set))
        if member_rows.size == 0:
            raise ValueError(f"task {t + 1} has no samples")
        order = rng.permutation(member_rows.size)
        tasks.append(TaskSpec(t + 1, frozenset(int(c) for c in class_set), member_rows[order]))
    return TaskStream(source, tasks, batch_size)


# -- binary dataset format ---------------------------------------------
#
# Little-endian layout:
#   magic "OCL1"
#   u32 count, u32 dim, u32 class_count
#   per sample: float32 x dim features, u32 label


def save_dataset(source: DatasetSource, path):
    record = np.dtype([("x", "<f4", (source.dim,)), ("y", "<u4")])
    rows = np.empty(len(source), dtype=record)
    rows["x"] = source.features.astype("<f4")
    rows["y"] = source.labels.astype("<u4")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<3I", len(source), source.dim, source.class_count))
        fh.write(rows.tobytes())


def load_dataset(path) -> DatasetSource:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DATASET_MAGIC:
        raise ValueError("not a dataset file: bad magic")
    if len(blob) < 16:
        raise ValueError("truncated dataset header")
    count, dim, class_count = struct.unpack_from("<3I", blob, 4)
    if dim < 1 or class_count < 2:
        raise ValueError("dataset header declares invalid dimensions")
    record = np.dtype([("x", "<f4", (dim,)), ("y", "<u4")])
    payload = blob[16:]
    if len(payload) != count * record.itemsize:
        raise ValueError(
            f"dataset payload holds {len(payload)} bytes, header declares {count} samples of {record.itemsize}"
        )
    rows = np.frombuffer(payload, dtype=record)
    labels = rows["y"].astype(np.int64)
    if count and labels.max() >= class_count:
        raise ValueError("dataset contains labels outside the declared class count")
    features = rows["x"].astype(np.float64).reshape(count, dim)
    return DatasetSource("file-backed", features, labels, class_count)
