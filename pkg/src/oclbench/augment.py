"""Batch augmentation pipeline.

A policy is an ordered list of ops. Image ops (flip, grayscale, crop)
need the batch to carry an image shape; gaussian jitter works on any
flat feature rows. RNG consumption is fixed per op so augmented batches
are reproducible from the augment substream alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datastream import Batch


class ShapeMismatchError(ValueError):
    """Image-space op applied to a batch without image geometry."""


@dataclass
class HorizontalFlip:
    probability: float = 0.5

    def validate(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("flip probability must be in [0, 1]")


@dataclass
class Grayscale:
    probability: float = 0.2

    def validate(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("grayscale probability must be in [0, 1]")


@dataclass
class ResizedCrop:
    """Crop a random area fraction in [min_scale, max_scale], then resize
    back to the original geometry with nearest-neighbor index maps."""

    min_scale: float = 0.6
    max_scale: float = 1.0

    def validate(self):
        if not 0.0 < self.min_scale <= self.max_scale <= 1.0:
            raise ValueError("crop scales must satisfy 0 < min <= max <= 1")


@dataclass
class GaussianJitter:
    sigma: float = 0.1

    def validate(self):
        if self.sigma < 0.0:
            raise ValueError("jitter sigma must be non-negative")


def _as_images(features: np.ndarray, image_shape) -> np.ndarray:
    if image_shape is None:
        raise ShapeMismatchError("image-space op needs a batch with an image shape")
    c, h, w = image_shape
    if features.shape[1] != c * h * w:
        raise ShapeMismatchError(
            f"batch rows have {features.shape[1]} features, image shape {image_shape} needs {c * h * w}"
        )
    return features.reshape(features.shape[0], c, h, w)


def _apply_op(op, features: np.ndarray, image_shape, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    if isinstance(op, GaussianJitter):
        return features + rng.standard_normal(features.shape) * op.sigma
    images = _as_images(features, image_shape)
    if isinstance(op, HorizontalFlip):
        chosen = rng.random(n) < op.probability
        out = images.copy()
        out[chosen] = out[chosen][..., ::-1]
        return out.reshape(n, -1)
    if isinstance(op, Grayscale):
        chosen = rng.random(n) < op.probability
        out = images.copy()
        out[chosen] = out[chosen].mean(axis=1, keepdims=True)
        return out.reshape(n, -1)
    if isinstance(op, ResizedCrop):
        _, h, w = image_shape
        out = np.empty_like(images)
        for i in range(n):
            scale = rng.uniform(op.min_scale, op.max_scale)
            side = np.sqrt(scale)
            ch = max(1, int(round(h * side)))
            cw = max(1, int(round(w * side)))
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            row_map = top + (np.arange(h) * ch // h)
            col_map = left + (np.arange(w) * cw // w)
            out[i] = images[i][:, row_map][:, :, col_map]
        return out.reshape(n, -1)
    raise TypeError(f"unknown augmentation op {type(op).__name__}")


def validate_policy(policy):
    for op in policy:
        op.validate()


def augment_batch(batch: Batch, policy, rng: np.random.Generator) -> Batch:
    """Apply the policy ops in order. Labels and ids pass through."""
    validate_policy(policy)
    features = batch.features.astype(np.float64, copy=True)
    for op in policy:
        features = _apply_op(op, features, batch.image_shape, rng)
    return Batch(features, batch.labels.copy(),
                 None if batch.ids is None else batch.ids.copy(), batch.image_shape)


def inner_flip(features: np.ndarray, image_shape) -> np.ndarray:
    """Mirror the bottom half of each image left-to-right, keeping the
    top half. An involution: applying it twice is the identity."""
    features = np.asarray(features, dtype=np.float64)
    images = _as_images(features, image_shape)
    _, h, _ = image_shape
    if h % 2 != 0:
        raise ShapeMismatchError("inner flip needs an even image height")
    out = images.copy()
    out[:, :, h // 2:, :] = out[:, :, h // 2:, ::-1]
    return out.reshape(features.shape[0], -1)


def double_with_aug(batch: Batch, policy, rng: np.random.Generator,
                    use_inner_flip: bool = False) -> Batch:
    """Stack the batch with an augmented copy of itself.

    The first half is the original, bit for bit; the second half runs
    the policy (plus inner flip when requested and image-shaped).
    Labels repeat in the same order.
    """
    augmented = augment_batch(batch, policy, rng)
    second = augmented.features
    if use_inner_flip:
        second = inner_flip(second, batch.image_shape)
    features = np.concatenate([batch.features, second], axis=0)
    labels = np.concatenate([batch.labels, batch.labels])
    return Batch(features, labels, None, batch.image_shape)
