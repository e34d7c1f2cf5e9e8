"""Online continual learning engine and benchmark harness.

Core pieces: a one-pass task stream over synthetic or file-backed data,
a reservoir replay buffer, a stacked-expert network trained with
multi-level supervision and cross-expert self-distillation, replay
baselines, and an evaluation suite (NCM and linear readouts, accuracy
matrix, forgetting and buffer-overfitting metrics). A FastAPI service
plus thin CLI wrap experiment runs, sweeps, and plot-data export.
"""

__version__ = "0.1.0"

from .augment import GaussianJitter, Grayscale, HorizontalFlip, ResizedCrop, augment_batch, double_with_aug, inner_flip
from .autodiff import Tensor, no_grad
from .config import ConfigError, ExperimentConfig, load_config
from .datastream import (
    Batch,
    DatasetSource,
    ProtocolViolation,
    TaskStream,
    build_task_stream,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_by_class,
)
from .evaluation import AccuracyMatrix, acc_af, bof, compute_class_means, evaluate, ncm_predict
from .experiment import RunRecord, emit_plot_data, run_experiment, run_from_config_text, run_sweep_text
from .losses import (
    BatchSplit,
    LossConfig,
    cross_entropy,
    er_loss,
    expert_loss,
    mls_loss,
    mose_loss,
    rsd_loss,
    scr_loss,
    separated_ce,
    sup_con,
)
from .memory import MemoryBuffer, random_retrieve, reservoir_update
from .network import ExpertModel, ExpertOutputs, ModelConfig, init_model, load_model, normalize_rows, save_model
from .trainer import Adam, OnlineTrainer, TrainConfig, buffer_joint_train

__all__ = [
    "__version__",
    "Adam",
    "AccuracyMatrix",
    "Batch",
    "BatchSplit",
    "ConfigError",
    "DatasetSource",
    "ExperimentConfig",
    "ExpertModel",
    "ExpertOutputs",
    "GaussianJitter",
    "Grayscale",
    "HorizontalFlip",
    "LossConfig",
    "MemoryBuffer",
    "ModelConfig",
    "OnlineTrainer",
    "ProtocolViolation",
    "ResizedCrop",
    "RunRecord",
    "TaskStream",
    "Tensor",
    "TrainConfig",
    "acc_af",
    "augment_batch",
    "bof",
    "build_task_stream",
    "buffer_joint_train",
    "compute_class_means",
    "cross_entropy",
    "double_with_aug",
    "emit_plot_data",
    "er_loss",
    "evaluate",
    "expert_loss",
    "generate_synthetic",
    "init_model",
    "inner_flip",
    "load_config",
    "load_dataset",
    "load_model",
    "mls_loss",
    "mose_loss",
    "ncm_predict",
    "no_grad",
    "normalize_rows",
    "random_retrieve",
    "reservoir_update",
    "rsd_loss",
    "run_experiment",
    "run_from_config_text",
    "run_sweep_text",
    "save_dataset",
    "save_model",
    "scr_loss",
    "separated_ce",
    "split_by_class",
    "sup_con",
]
