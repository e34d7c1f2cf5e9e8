"""Online training loops.

Each stream step retrieves a replay batch, stacks it with the incoming
batch, doubles the result with an augmented copy, takes one optimizer
step on the method's objective, and only then offers the raw incoming
batch to the reservoir. Methods share this skeleton and differ only in
the loss.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .augment import double_with_aug
from .datastream import Batch, TaskStream
from .evaluation import bof, evaluate
from .losses import BatchSplit, LossConfig, er_loss, mose_loss, scr_loss
from .memory import MemoryBuffer
from .network import ExpertModel

logger = logging.getLogger(__name__)

METHODS = ("mose", "er", "scr", "buffer-joint")


@dataclass
class TrainConfig:
    method: str = "mose"
    batch_size: int = 10
    buffer_batch_size: int = 64
    memory_size: int = 500
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 1

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.batch_size < 1 or self.buffer_batch_size < 0:
            raise ValueError("batch sizes must be positive (buffer batch may be 0)")
        if self.memory_size < 1:
            raise ValueError("memory_size must be at least 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("betas must be in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


class Adam:
    """Adam with classic L2 weight decay folded into the gradient."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(optimizer: Adam):
    optimizer.step()


def _combine(incoming: Batch, replay: Batch) -> tuple:
    """Stack incoming and replay rows; remember which rows are which."""
    if len(replay) == 0:
        features = incoming.features
        labels = incoming.labels
    else:
        features = np.concatenate([incoming.features, replay.features], axis=0)
        labels = np.concatenate([incoming.labels, replay.labels])
    batch = Batch(features, labels, None, incoming.image_shape)
    new_rows = np.arange(len(incoming))
    buf_rows = np.arange(len(incoming), len(batch))
    return batch, new_rows, buf_rows


class OnlineTrainer:
    """Drives one model through the task stream with a replay buffer."""

    def __init__(self, model: ExpertModel, buffer: MemoryBuffer, cfg: TrainConfig,
                 loss_cfg: LossConfig, policy, rng_buffer: np.random.Generator,
                 rng_augment: np.random.Generator, augment_enabled: bool = True,
                 inner_flip_doubling: bool = False):
        cfg.validate()
        loss_cfg.validate()
        self.model = model
        self.buffer = buffer
        self.cfg = cfg
        self.loss_cfg = loss_cfg
        self.policy = policy
        self.augment_enabled = augment_enabled
        self.inner_flip_doubling = inner_flip_doubling
        self.rng_buffer = rng_buffer
        self.rng_augment = rng_augment
        self.optimizer = Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1,
                              beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay)
        self.seen_classes: set = set()
        self.touch_counts: Counter = Counter()  # sample id -> stream visits
        self.step_count = 0

    def train_task(self, stream: TaskStream, task_index: int) -> list:
        """One pass (or cfg.epochs passes) over a task. Returns per-step
        loss values. Reservoir updates happen only on the first pass."""
        task_classes = stream.task_classes(task_index)
        self.seen_classes |= set(task_classes)
        losses = []
        for batch in stream.task_batches(task_index):
            self.touch_counts.update(int(i) for i in batch.ids)
            losses.append(self._step(batch, task_classes, update_buffer=True))
        for _ in range(1, self.cfg.epochs):
            for batch in stream.replay_epoch(task_index, self.rng_augment):
                losses.append(self._step(batch, task_classes, update_buffer=False))
        logger.debug("task %d: %d steps, mean loss %.4f", task_index, len(losses),
                     float(np.mean(losses)) if losses else float("nan"))
        return losses

    def _step(self, incoming: Batch, task_classes, update_buffer: bool) -> float:
        replay = self.buffer.random_retrieve(self.cfg.buffer_batch_size, self.rng_buffer)
        combined, new_rows, buf_rows = _combine(incoming, replay)
        if self.augment_enabled:
            n = len(combined)
            batch = double_with_aug(combined, self.policy, self.rng_augment,
                                    use_inner_flip=self.inner_flip_doubling and combined.image_shape is not None)
            new_rows = np.concatenate([new_rows, new_rows + n])
            buf_rows = np.concatenate([buf_rows, buf_rows + n])
        else:
            batch = combined
        split = BatchSplit(batch.labels, new_rows, buf_rows)
        outputs = self.model.forward_all(batch.features)

        cfg = replace(self.loss_cfg,
                      current_task_classes=tuple(sorted(task_classes)),
                      seen_classes=tuple(sorted(self.seen_classes)))
        if self.cfg.method == "mose":
            loss = mose_loss(outputs, split, cfg)
        elif self.cfg.method == "er":
            loss = er_loss(outputs.logits[-1], batch.labels, cfg.seen_classes)
        elif self.cfg.method == "scr":
            loss = scr_loss(outputs.projections[-1], batch.labels, cfg.temperature)
        else:
            raise ValueError(f"method {self.cfg.method} does not stream-train")

        # A loss with no graph (e.g. contrastive loss with no positive
        # pairs) carries no learning signal; skip the step entirely so
        # weight decay does not move parameters either.
        if loss.has_graph:
            self.model.zero_grads()
            loss.backward()
            self.optimizer.step()
        self.step_count += 1
        if update_buffer:
            self.buffer.reservoir_update(incoming, self.rng_buffer)
        return float(loss.data)


@dataclass
class JointTrainRecord:
    bof_series: list
    buffer_acc_series: list
    test_acc_series: list


def buffer_joint_train(model: ExpertModel, buffer: MemoryBuffer, test_batch: Batch,
                       epochs: int, cfg: TrainConfig, rng: np.random.Generator,
                       policy=None) -> JointTrainRecord:
    """Train only on buffer contents for a number of epochs, tracking
    buffer/test accuracy and their overfitting gap after each epoch.

    Uses plain CE on the final expert's logits over the buffer's class
    set. With epochs=0 the model is untouched and the series are empty.
    An optional augmentation policy doubles each training batch;
    accuracy is always measured on raw exemplars.
    """
    cfg.validate()
    record = JointTrainRecord([], [], [])
    if epochs == 0:
        return record
    if len(buffer) == 0:
        raise ValueError("cannot joint-train on an empty buffer")
    optimizer = Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1,
                     beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay)
    support = tuple(sorted(buffer.class_set()))
    snap = buffer.contents()
    for _ in range(epochs):
        order = rng.permutation(len(snap))
        for start in range(0, len(order), cfg.buffer_batch_size):
            rows = order[start:start + cfg.buffer_batch_size]
            batch = Batch(snap.features[rows], snap.labels[rows], None, snap.image_shape)
            if policy is not None:
                batch = double_with_aug(batch, policy, rng)
            outputs = model.forward_all(batch.features)
            loss = er_loss(outputs.logits[-1], batch.labels, support)
            model.zero_grads()
            loss.backward()
            optimizer.step()
        buffer_acc = float(evaluate(model, [snap], None, "final-linear")[0])
        test_acc = float(evaluate(model, [test_batch], None, "final-linear")[0])
        record.buffer_acc_series.append(buffer_acc)
        record.test_acc_series.append(test_acc)
        record.bof_series.append(bof(buffer_acc, test_acc) if test_acc > 0 else None)
    return record
