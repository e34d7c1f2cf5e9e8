"""Replay memory with reservoir sampling.

A buffer of fixed capacity M sees a lifetime stream of samples; after
N >= M arrivals every past sample is retained with probability M/N.
Retrieval draws uniformly without replacement and never mutates the
buffer.
"""

from __future__ import annotations

import numpy as np

from .datastream import Batch, DatasetSource


class MemoryBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.seen_count = 0  # lifetime arrivals
        self._features: list = []  # slot -> (dim,) float64
        self._labels: list = []  # slot -> int
        self._image_shape = None

    def __len__(self) -> int:
        return len(self._features)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self._labels, dtype=np.int64)

    def class_set(self) -> set:
        return set(int(y) for y in self._labels)

    def contents(self) -> Batch:
        """Snapshot of every stored sample, in slot order (copies)."""
        if not self._features:
            return Batch(np.zeros((0, 0)), np.zeros(0, dtype=np.int64), None, self._image_shape)
        return Batch(np.stack(self._features).copy(), self.labels, None, self._image_shape)

    def reservoir_update(self, batch: Batch, rng: np.random.Generator):
        """Offer a batch to the reservoir, in row order.

        Arrival k (1-based, lifetime) is stored directly while the buffer
        is filling; afterwards it replaces a random slot with probability
        M/k, by drawing j ~ U{0..k-1} and accepting when j < M.
        """
        n = len(batch)
        if n == 0:
            return
        if self._image_shape is None:
            self._image_shape = batch.image_shape
        arrival = self.seen_count + 1 + np.arange(n)
        overflow = arrival > self.capacity
        for row in np.flatnonzero(~overflow):
            self._features.append(batch.features[row].astype(np.float64).copy())
            self._labels.append(int(batch.labels[row]))
        overflow_rows = np.flatnonzero(overflow)
        if overflow_rows.size:
            draws = rng.integers(0, arrival[overflow_rows])
            for row, j in zip(overflow_rows, draws):
                if j < self.capacity:
                    self._features[j] = batch.features[row].astype(np.float64).copy()
                    self._labels[j] = int(batch.labels[row])
        self.seen_count += n

    def random_retrieve(self, request_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample without replacement, clamped to the current
        fill. Returns copies; the buffer is left untouched."""
        if request_size < 0:
            raise ValueError("request_size must be non-negative")
        size = min(request_size, len(self._features))
        if size == 0:
            return Batch(np.zeros((0, 0)), np.zeros(0, dtype=np.int64), None, self._image_shape)
        idx = rng.choice(len(self._features), size=size, replace=False)
        features = np.stack([self._features[i] for i in idx]).copy()
        labels = np.asarray([self._labels[i] for i in idx], dtype=np.int64)
        return Batch(features, labels, None, self._image_shape)

    def to_source(self, class_count: int) -> DatasetSource:
        """Buffer contents as a dataset source (e.g. to write the binary
        dataset format for post-hoc analysis)."""
        snap = self.contents()
        return DatasetSource("buffer", snap.features, snap.labels, class_count, self._image_shape)


def reservoir_update(buffer: MemoryBuffer, batch: Batch, rng: np.random.Generator):
    buffer.reservoir_update(batch, rng)


def random_retrieve(buffer: MemoryBuffer, request_size: int, rng: np.random.Generator) -> Batch:
    return buffer.random_retrieve(request_size, rng)
