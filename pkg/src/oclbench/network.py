"""Stacked expert network: shared trunk of blocks with per-expert heads.

Expert i reads the output of block i. Each expert owns an alignment map
into a common feature width (the last expert's alignment is the
identity), a linear classification head, and a linear projection head
for the contrastive loss.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, matmul, normalize_rows, relu  # noqa: F401 (normalize_rows re-exported)

MAGIC = b"MOSE"


@dataclass
class ModelConfig:
    input_dim: int
    class_count: int
    n_experts: int = 4
    block_widths: tuple = ()
    aligned_dim: int = 64
    projection_dim: int = 32
    seed: int = 0

    def resolved_widths(self) -> tuple:
        if self.block_widths:
            return tuple(int(w) for w in self.block_widths)
        return (self.aligned_dim,) * self.n_experts

    def validate(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if self.n_experts < 1:
            raise ValueError("n_experts must be at least 1")
        if self.aligned_dim < 1 or self.projection_dim < 1:
            raise ValueError("aligned_dim and projection_dim must be at least 1")
        widths = self.resolved_widths()
        if len(widths) != self.n_experts:
            raise ValueError("block_widths must list one width per expert")
        if any(w < 1 for w in widths):
            raise ValueError("block widths must be at least 1")
        if widths[-1] != self.aligned_dim:
            raise ValueError(
                "last block width must equal aligned_dim (the final alignment is the identity)"
            )


@dataclass
class ExpertOutputs:
    """Per-expert activations for one forward pass (lists indexed 0-based)."""

    features: list
    aligned: list
    logits: list
    projections: list

    @property
    def n_experts(self) -> int:
        return len(self.features)


class Linear:
    """Affine map with Glorot-uniform weights and zero biases."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class ExpertModel:
    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        widths = config.resolved_widths()
        rng = np.random.default_rng(config.seed)
        # Draw order fixes initialization determinism: blocks, then
        # alignments, then class heads, then projection heads.
        self.blocks = []
        fan_in = config.input_dim
        for w in widths:
            self.blocks.append(Linear(rng, fan_in, w))
            fan_in = w
        self.alignments = [Linear(rng, widths[i], config.aligned_dim) for i in range(config.n_experts - 1)]
        self.alignments.append(None)  # last expert: identity
        self.class_heads = [Linear(rng, config.aligned_dim, config.class_count) for _ in range(config.n_experts)]
        self.proj_heads = [Linear(rng, config.aligned_dim, config.projection_dim) for _ in range(config.n_experts)]

    def parameters(self):
        params = []
        for block in self.blocks:
            params.extend(block.parameters())
        for align in self.alignments:
            if align is not None:
                params.extend(align.parameters())
        for head in self.class_heads:
            params.extend(head.parameters())
        for head in self.proj_heads:
            params.extend(head.parameters())
        return params

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def forward_all(self, inputs) -> ExpertOutputs:
        """Run every expert on a batch of flat feature rows."""
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected inputs of shape (n, {self.config.input_dim}), got {x.shape}"
            )
        h = Tensor(x)
        features, aligned, logits, projections = [], [], [], []
        for i in range(self.config.n_experts):
            h = relu(self.blocks[i](h))
            features.append(h)
            a = self.alignments[i](h) if self.alignments[i] is not None else h
            aligned.append(a)
            logits.append(self.class_heads[i](a))
            projections.append(self.proj_heads[i](a))
        return ExpertOutputs(features, aligned, logits, projections)


def init_model(config: ModelConfig) -> ExpertModel:
    return ExpertModel(config)


def zero_grads(model: ExpertModel):
    model.zero_grads()


def backward(loss: Tensor):
    """Run reverse-mode accumulation from a scalar loss."""
    loss.backward()


# -- checkpoint format -------------------------------------------------
#
# Layout (little-endian):
#   magic "MOSE"
#   u32 x 7: n_experts, input_dim, aligned_dim, projection_dim,
#            class_count, seed, width_count
#   u32 x width_count: block widths
#   per parameter, in self.parameters() order:
#     u32 ndim, u32 x ndim dims, float64 x prod(dims) values


def save_model(model: ExpertModel, path):
    cfg = model.config
    widths = cfg.resolved_widths()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<7I",
                cfg.n_experts,
                cfg.input_dim,
                cfg.aligned_dim,
                cfg.projection_dim,
                cfg.class_count,
                cfg.seed,
                len(widths),
            )
        )
        fh.write(struct.pack(f"<{len(widths)}I", *widths))
        for p in model.parameters():
            dims = p.data.shape
            fh.write(struct.pack("<I", len(dims)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims))
            fh.write(p.data.astype("<f8").tobytes())


def load_model(path) -> ExpertModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError("not a model checkpoint: bad magic")
    off = 4
    n_experts, input_dim, aligned_dim, projection_dim, class_count, seed, width_count = struct.unpack_from(
        "<7I", blob, off
    )
    off += 28
    widths = struct.unpack_from(f"<{width_count}I", blob, off)
    off += 4 * width_count
    config = ModelConfig(
        input_dim=input_dim,
        class_count=class_count,
        n_experts=n_experts,
        block_widths=tuple(widths),
        aligned_dim=aligned_dim,
        projection_dim=projection_dim,
        seed=seed,
    )
    model = ExpertModel(config)
    for p in model.parameters():
        if off + 4 > len(blob):
            raise ValueError("truncated checkpoint")
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        if dims != p.data.shape:
            raise ValueError(f"checkpoint shape {dims} does not match model shape {p.data.shape}")
        count = int(np.prod(dims)) if dims else 1
        end = off + 8 * count
        if end > len(blob):
            raise ValueError("truncated checkpoint")
        p.data = np.frombuffer(blob[off:end], dtype="<f8").reshape(dims).astype(np.float64)
        off = end
    if off != len(blob):
        raise ValueError("trailing bytes after checkpoint payload")
    return model
