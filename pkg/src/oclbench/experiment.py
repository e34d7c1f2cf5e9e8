"""Experiment orchestration: build data and model from a config, run
the stream, evaluate at checkpoints, and persist run artifacts.

Run directories are named ``<config-hash-12>-s<seed>`` under the output
root, which resolves as: OCL_OUT_DIR env var, then the config's
run.out_dir, then ``runs/``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, parse_config_text, build_config
from .datastream import Batch, DatasetSource, TaskStream, build_task_stream, generate_synthetic, load_dataset, split_by_class
from .evaluation import AccuracyMatrix, acc_af, bof, evaluate
from .memory import MemoryBuffer
from .network import init_model
from .trainer import OnlineTrainer, buffer_joint_train

logger = logging.getLogger(__name__)

SWEEP_AXES = {
    "epochs": "train.epochs",
    "n_experts": "model.experts",
    "memory": "train.memory",
    "augment": "augment.enabled",
    "rsd": "loss.rsd",
    "distill_direction": "loss.distill_direction",
    "rsd_student": "loss.rsd_student",
}


@dataclass
class RunRecord:
    method: str
    seed: int
    matrix: AccuracyMatrix
    extra_matrices: dict = field(default_factory=dict)  # eval mode -> AccuracyMatrix
    task_classes: list = field(default_factory=list)  # sorted class ids per task
    eval_modes: list = field(default_factory=list)  # primary mode first
    new_task_acc: list = field(default_factory=list)  # a[t][t] per task
    bof_series: list = field(default_factory=list)  # avg old-task BOF per checkpoint (None if undefined)
    task_seconds: list = field(default_factory=list)
    acc: float | None = None
    af: float | None = None
    config_echo: dict = field(default_factory=dict)
    touch_counts: dict = field(default_factory=dict)  # sample id -> stream visits (epochs=1: all 1)


def _seed_streams(seed: int):
    """Derive independent substream seeds: stream order, model init,
    buffer ops, augmentation noise."""
    state = np.random.SeedSequence(seed).generate_state(4)
    return tuple(int(s) for s in state)


def build_sources(cfg: ExperimentConfig):
    """Train/test sources per the dataset section. Synthetic data is
    generated with test_per_class extra samples per class, then split."""
    d = cfg.dataset
    if d.kind == "file":
        full = load_dataset(d.path)
    else:
        full = generate_synthetic(d.classes, d.per_class + d.test_per_class, d.dim, d.spread, d.seed)
    if d.image_shape is not None:
        full = DatasetSource(full.kind, full.features, full.labels, full.class_count, d.image_shape)
    return split_by_class(full, d.test_per_class, d.seed)


def _test_batches(test_source: DatasetSource, stream: TaskStream):
    """One test batch per task, restricted to that task's classes."""
    batches = []
    for t in range(1, stream.task_count + 1):
        classes = sorted(stream.task_classes(t))
        rows = np.flatnonzero(np.isin(test_source.labels, classes))
        batches.append(Batch(test_source.features[rows].copy(), test_source.labels[rows].copy(),
                             None, test_source.image_shape))
    return batches


def _old_task_bof(model, buffer, stream, matrix, checkpoint, mode):
    """Average relative buffer-overfitting over tasks before `checkpoint`,
    measured on raw buffer exemplars. Tasks without buffer samples or
    with zero test accuracy are skipped; returns None if nothing counts."""
    snap = buffer.contents()
    if len(snap) == 0:
        return None
    values = []
    for t in range(1, checkpoint):
        classes = sorted(stream.task_classes(t))
        rows = np.flatnonzero(np.isin(snap.labels, classes))
        if rows.size == 0:
            continue
        task_batch = Batch(snap.features[rows], snap.labels[rows], None, snap.image_shape)
        buffer_acc = float(evaluate(model, [task_batch], buffer, mode)[0])
        test_acc = matrix.get(t, checkpoint)
        if test_acc <= 0.0:
            continue
        values.append(bof(buffer_acc, test_acc))
    return float(np.mean(values)) if values else None


def run_experiment(cfg: ExperimentConfig, train_source: DatasetSource,
                   test_source: DatasetSource, seed: int) -> RunRecord:
    """One seeded run: stream every task once, evaluate per the
    schedule, and compute headline metrics."""
    stream_seed, init_seed, buffer_seed, augment_seed = _seed_streams(seed)
    stream = build_task_stream(train_source, cfg.stream.tasks, cfg.stream.classes_per_task,
                               cfg.train.batch_size, stream_seed)
    model_cfg = replace(cfg.model, input_dim=train_source.dim,
                        class_count=train_source.class_count, seed=init_seed)
    model = init_model(model_cfg)
    buffer = MemoryBuffer(cfg.train.memory_size)
    rng_buffer = np.random.default_rng(buffer_seed)
    rng_augment = np.random.default_rng(augment_seed)
    tests = _test_batches(test_source, stream)
    modes = cfg.eval_modes()
    primary = modes[0]

    record = RunRecord(cfg.train.method, seed, AccuracyMatrix(stream.task_count),
                       config_echo=dict(cfg.echo))
    record.task_classes = [sorted(stream.task_classes(t)) for t in range(1, stream.task_count + 1)]
    record.eval_modes = list(modes)

    def extra_matrix(name):
        if name not in record.extra_matrices:
            record.extra_matrices[name] = AccuracyMatrix(stream.task_count)
        return record.extra_matrices[name]

    def evaluate_checkpoint(checkpoint):
        for mode in modes:
            accs = evaluate(model, tests[:checkpoint], buffer, mode)
            if mode == "per-expert-ncm":
                for e in range(accs.shape[0]):
                    for t in range(1, checkpoint + 1):
                        extra_matrix(f"per-expert-ncm-e{e + 1}").record(t, checkpoint, float(accs[e, t - 1]))
                continue
            target = record.matrix if mode == primary else extra_matrix(mode)
            for t in range(1, checkpoint + 1):
                target.record(t, checkpoint, float(accs[t - 1]))

    if cfg.train.method == "buffer-joint":
        # Stream only feeds the reservoir; training happens afterwards
        # on the frozen buffer.
        for t in range(1, stream.task_count + 1):
            t0 = time.perf_counter()
            for batch in stream.task_batches(t):
                buffer.reservoir_update(batch, rng_buffer)
            record.task_seconds.append(time.perf_counter() - t0)
        policy = cfg.augment.build_policy() if cfg.augment.enabled else None
        joint = buffer_joint_train(model, buffer, _concat_batches(tests), cfg.train.epochs,
                                   cfg.train, rng_augment, policy=policy)
        record.bof_series = list(joint.bof_series)
        evaluate_checkpoint(stream.task_count)
        final_column = record.matrix.values[:, -1]
        record.acc = float(final_column.mean()) if not np.isnan(final_column).any() else None
        record.af = None
        return record

    trainer = OnlineTrainer(model, buffer, cfg.train, cfg.loss,
                            cfg.augment.build_policy(), rng_buffer, rng_augment,
                            augment_enabled=cfg.augment.enabled,
                            inner_flip_doubling=cfg.augment.inner_flip)
    for t in range(1, stream.task_count + 1):
        t0 = time.perf_counter()
        trainer.train_task(stream, t)
        record.task_seconds.append(time.perf_counter() - t0)
        if cfg.eval.schedule == "every-task" or t == stream.task_count:
            evaluate_checkpoint(t)
            record.new_task_acc.append(record.matrix.get(t, t))
            if cfg.eval.bof:
                record.bof_series.append(
                    _old_task_bof(model, buffer, stream, record.matrix, t, primary) if t > 1 else None
                )
    record.touch_counts = dict(trainer.touch_counts)
    if cfg.eval.schedule == "every-task":
        record.acc, record.af = acc_af(record.matrix)
    else:
        record.acc = float(record.matrix.values[:, -1].mean())
        record.af = None
    logger.info("run method=%s seed=%d acc=%s af=%s", record.method, seed, record.acc, record.af)
    return record


def _concat_batches(batches) -> Batch:
    return Batch(np.concatenate([b.features for b in batches], axis=0),
                 np.concatenate([b.labels for b in batches]),
                 None, batches[0].image_shape)


# -- persistence ---------------------------------------------------------


def resolve_out_root(cfg: ExperimentConfig) -> Path:
    env = os.environ.get("OCL_OUT_DIR", "").strip()
    return Path(env) if env else Path(cfg.run.out_dir)


def run_dir_name(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.config_hash()[:12]}-s{seed}"


def persist_run(record: RunRecord, cfg: ExperimentConfig, out_root: Path) -> Path:
    run_dir = out_root / run_dir_name(cfg, record.seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "accuracy_matrix.csv").write_text(record.matrix.to_csv())
    for mode, matrix in record.extra_matrices.items():
        (run_dir / f"accuracy_matrix_{mode.replace('-', '_')}.csv").write_text(matrix.to_csv())
    bof_csv = io.StringIO()
    writer = csv.writer(bof_csv, lineterminator="\n")
    writer.writerow(["index", "bof"])
    for i, value in enumerate(record.bof_series, start=1):
        writer.writerow([i, "" if value is None else repr(float(value))])
    (run_dir / "bof.csv").write_text(bof_csv.getvalue())
    summary = {
        "method": record.method,
        "seed": record.seed,
        "acc": record.acc,
        "af": record.af,
        "task_classes": record.task_classes,
        "new_task_acc": record.new_task_acc,
        "bof_series": record.bof_series,
        "task_seconds": record.task_seconds,
        "eval_modes": record.eval_modes,
        "config": record.config_echo,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return run_dir


def run_from_config_text(text: str):
    """Full entry point: validate, run every seed, persist. Returns
    (config, [(seed, run_dir, record)])."""
    cfg = load_config(text)
    train_source, test_source = build_sources(cfg)
    out_root = resolve_out_root(cfg)
    results = []
    for seed in cfg.run.seeds:
        record = run_experiment(cfg, train_source, test_source, seed)
        run_dir = persist_run(record, cfg, out_root)
        results.append((seed, run_dir, record))
    return cfg, results


# -- sweeps ----------------------------------------------------------------


def run_sweep_text(text: str, axis: str, values) -> dict:
    """Run the base config once per axis value (all seeds each), then
    write an aggregate CSV of mean/std headline metrics per value."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("values", "must list at least one value")
    base_pairs = parse_config_text(text)
    key = SWEEP_AXES[axis]
    rows = []
    sweep_cfgs = []
    for value in values:
        pairs = dict(base_pairs)
        pairs[key] = str(value)
        cfg = build_config(pairs)  # validated per value before anything runs
        sweep_cfgs.append((str(value), cfg))

    out_root = resolve_out_root(sweep_cfgs[0][1])
    sweep_dir = out_root / f"sweep-{axis}-{sweep_cfgs[0][1].config_hash()[:12]}"
    for value, cfg in sweep_cfgs:
        train_source, test_source = build_sources(cfg)
        accs, afs, run_dirs = [], [], []
        for seed in cfg.run.seeds:
            record = run_experiment(cfg, train_source, test_source, seed)
            run_dirs.append(str(persist_run(record, cfg, sweep_dir)))
            if record.acc is not None:
                accs.append(record.acc)
            if record.af is not None:
                afs.append(record.af)
        rows.append({
            "value": value,
            "runs": len(cfg.run.seeds),
            "acc_mean": float(np.mean(accs)) if accs else None,
            "acc_std": float(np.std(accs)) if accs else None,
            "af_mean": float(np.mean(afs)) if afs else None,
            "af_std": float(np.std(afs)) if afs else None,
            "run_dirs": run_dirs,
        })

    sweep_dir.mkdir(parents=True, exist_ok=True)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["axis", "value", "runs", "acc_mean", "acc_std", "af_mean", "af_std"])
    for row in rows:
        writer.writerow([axis, row["value"], row["runs"]]
                        + ["" if row[k] is None else repr(row[k])
                           for k in ("acc_mean", "acc_std", "af_mean", "af_std")])
    aggregate = sweep_dir / "aggregate.csv"
    aggregate.write_text(out.getvalue())
    return {"sweep_dir": str(sweep_dir), "aggregate_csv": str(aggregate), "rows": rows}


# -- plot data ---------------------------------------------------------------


def emit_plot_data(run_dir) -> list:
    """Collect every summary.json under run_dir into one tidy CSV
    (series, x, y, seed) covering accuracy-vs-task curves, BOF curves,
    and headline metrics against epochs and memory size."""
    root = Path(run_dir)
    if not root.exists():
        raise FileNotFoundError(f"no such run directory: {run_dir}")
    summaries = sorted(root.rglob("summary.json"))
    if not summaries:
        raise FileNotFoundError(f"no run summaries under {run_dir}")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["series", "x", "y", "seed"])

    def emit(series, x, y, seed):
        if y is None:
            return
        writer.writerow([series, repr(float(x)), repr(float(y)), seed])

    for summary_path in summaries:
        summary = json.loads(summary_path.read_text())
        seed = summary["seed"]
        config = summary.get("config", {})
        epochs = config.get("train.epochs", "")
        memory = config.get("train.memory", "")
        for t, acc in enumerate(summary.get("new_task_acc", []), start=1):
            emit("new_task_acc_vs_task", t, acc, seed)
        for t, value in enumerate(summary.get("bof_series", []), start=1):
            emit("bof_vs_task", t, value, seed)
        matrix_path = summary_path.parent / "accuracy_matrix.csv"
        if matrix_path.exists():
            matrix = AccuracyMatrix.from_csv(matrix_path.read_text())
            for t in range(1, matrix.task_count + 1):
                final = matrix.values[t - 1, matrix.task_count - 1]
                if not np.isnan(final):
                    emit("final_task_acc_vs_task", t, float(final), seed)
        if epochs != "":
            emit("acc_vs_epochs", float(epochs), summary.get("acc"), seed)
            emit("af_vs_epochs", float(epochs), summary.get("af"), seed)
        if memory != "":
            emit("acc_vs_memory", float(memory), summary.get("acc"), seed)
            emit("af_vs_memory", float(memory), summary.get("af"), seed)

    target = root / "plot_data.csv"
    target.write_text(out.getvalue())
    return [str(target)]
