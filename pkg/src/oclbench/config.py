"""Flat key=value experiment configs.

Text format: one ``section.key = value`` per line, ``#`` comments and
blank lines ignored. Unknown keys and malformed values are rejected
before anything runs, and the error names the first offending key, so
an invalid config never produces partial run artifacts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .augment import GaussianJitter, Grayscale, HorizontalFlip, ResizedCrop, validate_policy
from .evaluation import EVAL_MODES
from .losses import DISTILL_DIRECTIONS, LossConfig
from .network import ModelConfig
from .trainer import METHODS, TrainConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    classes: int = 10
    per_class: int = 200
    test_per_class: int = 50
    dim: int = 32
    spread: float = 1.0
    seed: int = 0
    path: str = ""
    image_shape: tuple | None = None


@dataclass
class StreamSpec:
    tasks: int = 5
    classes_per_task: int = 2


@dataclass
class AugmentSettings:
    enabled: bool = True
    ops: tuple = ("jitter:0.1",)
    inner_flip: bool = False

    def build_policy(self) -> list:
        return [_parse_op(spec) for spec in self.ops]


@dataclass
class EvalSettings:
    modes: tuple = ()  # empty means method default
    bof: bool = True
    schedule: str = "every-task"


@dataclass
class RunSettings:
    out_dir: str = "runs"
    seeds: tuple = (0,)


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    stream: StreamSpec
    model: ModelConfig
    train: TrainConfig
    loss: LossConfig
    augment: AugmentSettings
    eval: EvalSettings
    run: RunSettings
    echo: dict = field(default_factory=dict)  # every resolved key, as text

    def eval_modes(self) -> tuple:
        if self.eval.modes:
            return self.eval.modes
        if self.train.method in ("er", "buffer-joint"):
            return ("final-linear",)
        return ("final-expert-ncm",)

    def config_hash(self) -> str:
        canon = "\n".join(f"{k}={self.echo[k]}" for k in sorted(self.echo))
        return hashlib.sha256(canon.encode()).hexdigest()


def _parse_op(spec: str):
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "jitter":
            return GaussianJitter(float(args[0])) if args else GaussianJitter()
        if name == "flip":
            return HorizontalFlip(float(args[0])) if args else HorizontalFlip()
        if name == "grayscale":
            return Grayscale(float(args[0])) if args else Grayscale()
        if name == "crop":
            if len(args) == 2:
                return ResizedCrop(float(args[0]), float(args[1]))
            if not args:
                return ResizedCrop()
            raise ValueError("crop takes min:max scales")
    except (ValueError, IndexError) as exc:
        raise ValueError(f"bad op spec '{spec}': {exc}") from None
    raise ValueError(f"unknown augmentation op '{name}'")


def parse_config_text(text: str) -> dict:
    """Parse the flat format into a key -> raw string dict."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got '{line}'")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in pairs:
            raise ConfigError(key, "duplicate key")
        pairs[key] = value
    return pairs


# -- typed schema, in validation order ----------------------------------

def _to_int(v):
    return int(v, 0) if isinstance(v, str) else int(v)


def _to_float(v):
    return float(v)


def _to_bool(v):
    s = str(v).strip().lower()
    if s in ("true", "1", "yes", "on"):
        return True
    if s in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{v}'")


def _to_str(v):
    return str(v).strip()


def _to_int_list(v):
    s = str(v).strip()
    if not s:
        return ()
    return tuple(int(x.strip()) for x in s.split(","))


def _to_str_list(v):
    s = str(v).strip()
    if not s:
        return ()
    return tuple(x.strip() for x in s.split(","))


def _to_shape(v):
    s = str(v).strip()
    if not s:
        return None
    dims = tuple(int(x) for x in s.lower().split("x"))
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError("image shape must be CxHxW with positive dims")
    return dims


SCHEMA = (
    ("dataset.kind", _to_str, "synthetic"),
    ("dataset.path", _to_str, ""),
    ("dataset.classes", _to_int, "10"),
    ("dataset.per_class", _to_int, "200"),
    ("dataset.test_per_class", _to_int, "50"),
    ("dataset.dim", _to_int, "32"),
    ("dataset.spread", _to_float, "1.0"),
    ("dataset.seed", _to_int, "0"),
    ("dataset.image_shape", _to_shape, ""),
    ("stream.tasks", _to_int, "5"),
    ("stream.classes_per_task", _to_int, "2"),
    ("model.experts", _to_int, "4"),
    ("model.block_widths", _to_int_list, ""),
    ("model.aligned_dim", _to_int, "64"),
    ("model.projection_dim", _to_int, "32"),
    ("train.method", _to_str, "mose"),
    ("train.batch_size", _to_int, "10"),
    ("train.buffer_batch_size", _to_int, "64"),
    ("train.memory", _to_int, "500"),
    ("train.lr", _to_float, "0.001"),
    ("train.weight_decay", _to_float, "0.0001"),
    ("train.beta1", _to_float, "0.9"),
    ("train.beta2", _to_float, "0.999"),
    ("train.eps", _to_float, "1e-8"),
    ("train.epochs", _to_int, "1"),
    ("loss.temperature", _to_float, "0.07"),
    ("loss.ce_weight", _to_float, "1.0"),
    ("loss.scl_weight", _to_float, "1.0"),
    ("loss.rsd", _to_bool, "true"),
    ("loss.rsd_student", _to_str, ""),
    ("loss.distill_direction", _to_str, "reverse"),
    ("augment.enabled", _to_bool, "true"),
    ("augment.ops", _to_str_list, "jitter:0.1"),
    ("augment.inner_flip", _to_bool, "false"),
    ("eval.modes", _to_str_list, ""),
    ("eval.bof", _to_bool, "true"),
    ("eval.schedule", _to_str, "every-task"),
    ("run.out_dir", _to_str, "runs"),
    ("run.seeds", _to_int_list, "0"),
)

_SCHEMA_KEYS = tuple(key for key, _, _ in SCHEMA)


def build_config(pairs: dict) -> ExperimentConfig:
    """Coerce and validate raw pairs into an ExperimentConfig. Raises
    ConfigError naming the first invalid field (schema order, then
    cross-field checks)."""
    for key in pairs:
        if key not in _SCHEMA_KEYS:
            raise ConfigError(key, "unknown key")

    values = {}
    echo = {}
    for key, coerce, default in SCHEMA:
        raw = pairs.get(key, default)
        try:
            values[key] = coerce(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(key, str(exc)) from None
        echo[key] = str(raw).strip()

    def fail(key, msg):
        raise ConfigError(key, msg)

    v = values
    if v["dataset.kind"] not in ("synthetic", "file"):
        fail("dataset.kind", "must be 'synthetic' or 'file'")
    if v["dataset.kind"] == "file" and not v["dataset.path"]:
        fail("dataset.path", "required when dataset.kind=file")
    if v["dataset.classes"] < 2:
        fail("dataset.classes", "must be at least 2")
    if v["dataset.per_class"] < 1:
        fail("dataset.per_class", "must be at least 1")
    if v["dataset.test_per_class"] < 1:
        fail("dataset.test_per_class", "must be at least 1")
    if v["dataset.dim"] < 2:
        fail("dataset.dim", "must be at least 2")
    if v["dataset.spread"] < 0:
        fail("dataset.spread", "must be non-negative")
    if v["dataset.image_shape"] is not None:
        c, h, w = v["dataset.image_shape"]
        if c * h * w != v["dataset.dim"]:
            fail("dataset.image_shape", f"{c}x{h}x{w} does not match dataset.dim={v['dataset.dim']}")
    if v["stream.tasks"] < 1:
        fail("stream.tasks", "must be at least 1")
    if v["stream.classes_per_task"] < 1:
        fail("stream.classes_per_task", "must be at least 1")
    if v["stream.tasks"] * v["stream.classes_per_task"] > v["dataset.classes"]:
        fail("stream.tasks", "tasks x classes_per_task exceeds dataset.classes")
    if v["model.experts"] < 1:
        fail("model.experts", "must be at least 1")
    widths = v["model.block_widths"]
    if widths and len(widths) != v["model.experts"]:
        fail("model.block_widths", "must list one width per expert")
    if widths and widths[-1] != v["model.aligned_dim"]:
        fail("model.block_widths", "last width must equal model.aligned_dim")
    if v["train.method"] not in METHODS:
        fail("train.method", f"must be one of {METHODS}")
    if v["train.batch_size"] < 1:
        fail("train.batch_size", "must be at least 1")
    if v["train.buffer_batch_size"] < 0:
        fail("train.buffer_batch_size", "must be non-negative")
    if v["train.memory"] < 1:
        fail("train.memory", "must be at least 1")
    if v["train.lr"] <= 0:
        fail("train.lr", "must be positive")
    if v["train.weight_decay"] < 0:
        fail("train.weight_decay", "must be non-negative")
    if not 0 <= v["train.beta1"] < 1:
        fail("train.beta1", "must be in [0, 1)")
    if not 0 <= v["train.beta2"] < 1:
        fail("train.beta2", "must be in [0, 1)")
    if v["train.eps"] <= 0:
        fail("train.eps", "must be positive")
    if v["train.epochs"] < 0:
        fail("train.epochs", "must be non-negative")
    if v["loss.temperature"] <= 0:
        fail("loss.temperature", "must be positive")
    rsd_student = None
    if v["loss.rsd_student"]:
        try:
            rsd_student = int(v["loss.rsd_student"])
        except ValueError:
            fail("loss.rsd_student", "must be an integer expert index")
        if not 1 <= rsd_student <= v["model.experts"]:
            fail("loss.rsd_student", f"must be in 1..{v['model.experts']}")
    if v["loss.distill_direction"] not in DISTILL_DIRECTIONS:
        fail("loss.distill_direction", f"must be one of {DISTILL_DIRECTIONS}")
    augment = AugmentSettings(v["augment.enabled"], v["augment.ops"], v["augment.inner_flip"])
    try:
        validate_policy(augment.build_policy())
    except ValueError as exc:
        raise ConfigError("augment.ops", str(exc)) from None
    if augment.inner_flip and v["dataset.image_shape"] is None:
        fail("augment.inner_flip", "needs dataset.image_shape")
    for mode in v["eval.modes"]:
        if mode not in EVAL_MODES:
            fail("eval.modes", f"'{mode}' is not one of {EVAL_MODES}")
    if v["eval.schedule"] not in ("every-task", "final"):
        fail("eval.schedule", "must be 'every-task' or 'final'")
    if not v["run.seeds"]:
        fail("run.seeds", "must list at least one seed")

    model = ModelConfig(
        input_dim=v["dataset.dim"],
        class_count=v["dataset.classes"],
        n_experts=v["model.experts"],
        block_widths=widths,
        aligned_dim=v["model.aligned_dim"],
        projection_dim=v["model.projection_dim"],
    )
    try:
        model.validate()
    except ValueError as exc:
        raise ConfigError("model.experts", str(exc)) from None
    train = TrainConfig(
        method=v["train.method"],
        batch_size=v["train.batch_size"],
        buffer_batch_size=v["train.buffer_batch_size"],
        memory_size=v["train.memory"],
        lr=v["train.lr"],
        weight_decay=v["train.weight_decay"],
        beta1=v["train.beta1"],
        beta2=v["train.beta2"],
        eps=v["train.eps"],
        epochs=v["train.epochs"],
    )
    try:
        train.validate()
    except ValueError as exc:
        raise ConfigError("train.method", str(exc)) from None
    loss = LossConfig(
        temperature=v["loss.temperature"],
        ce_weight=v["loss.ce_weight"],
        scl_weight=v["loss.scl_weight"],
        rsd_enabled=v["loss.rsd"],
        rsd_student_index=rsd_student,
        distill_direction=v["loss.distill_direction"],
    )
    try:
        loss.validate()
    except ValueError as exc:
        raise ConfigError("loss.temperature", str(exc)) from None

    return ExperimentConfig(
        dataset=DatasetSpec(
            kind=v["dataset.kind"],
            classes=v["dataset.classes"],
            per_class=v["dataset.per_class"],
            test_per_class=v["dataset.test_per_class"],
            dim=v["dataset.dim"],
            spread=v["dataset.spread"],
            seed=v["dataset.seed"],
            path=v["dataset.path"],
            image_shape=v["dataset.image_shape"],
        ),
        stream=StreamSpec(v["stream.tasks"], v["stream.classes_per_task"]),
        model=model,
        train=train,
        loss=loss,
        augment=augment,
        eval=EvalSettings(v["eval.modes"], v["eval.bof"], v["eval.schedule"]),
        run=RunSettings(v["run.out_dir"], v["run.seeds"]),
        echo=echo,
    )


def load_config(text: str) -> ExperimentConfig:
    return build_config(parse_config_text(text))
