"""Full runs from configs: artifacts, determinism, sweeps, plot data."""

import json
from pathlib import Path

import numpy as np
import pytest

from oclbench.config import ConfigError, load_config
from oclbench.evaluation import AccuracyMatrix
from oclbench.experiment import (
    build_sources,
    emit_plot_data,
    run_experiment,
    run_from_config_text,
    run_sweep_text,
)

TINY = """
dataset.classes = 4
dataset.per_class = 25
dataset.test_per_class = 8
dataset.dim = 8
dataset.spread = 1.0
stream.tasks = 2
stream.classes_per_task = 2
model.experts = 2
model.aligned_dim = 12
model.projection_dim = 6
train.memory = 60
train.buffer_batch_size = 16
run.seeds = 0
"""


def run_tiny(extra="", seed=0):
    cfg = load_config(TINY + extra)
    train_source, test_source = build_sources(cfg)
    return run_experiment(cfg, train_source, test_source, seed)


def test_run_produces_a_complete_triangular_matrix():
    record = run_tiny()
    assert record.matrix.is_complete()
    assert np.isnan(record.matrix.values[1, 0])  # future tasks never evaluated early
    assert record.acc is not None and record.af is not None
    assert len(record.new_task_acc) == 2
    assert record.bof_series[0] is None  # no old tasks at the first checkpoint
    assert len(record.bof_series) == 2
    assert len(record.task_seconds) == 2


def test_three_task_run_fills_six_cells():
    cfg = load_config(TINY.replace("stream.tasks = 2", "stream.tasks = 3")
                      .replace("stream.classes_per_task = 2", "stream.classes_per_task = 1"))
    train_source, test_source = build_sources(cfg)
    record = run_experiment(cfg, train_source, test_source, 0)
    filled = (~np.isnan(record.matrix.values)).sum()
    assert filled == 6


def test_single_task_run_has_zero_forgetting():
    cfg = load_config(TINY.replace("stream.tasks = 2", "stream.tasks = 1"))
    train_source, test_source = build_sources(cfg)
    record = run_experiment(cfg, train_source, test_source, 0)
    assert record.af == 0.0
    assert record.acc == record.matrix.get(1, 1)


def test_stream_composition_is_method_independent():
    mose = run_tiny()
    er = run_tiny(extra="train.method = er\n")
    scr = run_tiny(extra="train.method = scr\n")
    assert mose.task_classes == er.task_classes == scr.task_classes
    assert sorted(mose.touch_counts) == sorted(er.touch_counts) == sorted(scr.touch_counts)


def test_one_pass_audit_counts_every_sample_once():
    record = run_tiny()
    assert set(record.touch_counts.values()) == {1}
    assert len(record.touch_counts) == 4 * 25


def test_identical_runs_are_identical_and_seeds_differ():
    a = run_tiny(seed=3)
    b = run_tiny(seed=3)
    c = run_tiny(seed=4)
    assert a.matrix.to_csv() == b.matrix.to_csv()
    assert np.array_equal(a.matrix.values, b.matrix.values, equal_nan=True)
    assert a.matrix.to_csv() != c.matrix.to_csv()


def test_final_schedule_skips_intermediate_checkpoints():
    record = run_tiny(extra="eval.schedule = final\neval.bof = false\n")
    assert np.isnan(record.matrix.values[0, 0])
    assert not np.isnan(record.matrix.values[0, 1])
    assert record.af is None
    assert record.acc is not None


def test_run_from_config_writes_all_artifacts(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path / "out"))
    text = TINY + "run.seeds = 1, 2\n"
    _, results = run_from_config_text(text.replace("run.seeds = 0\n", ""))
    assert len(results) == 2
    for seed, run_dir, record in results:
        assert run_dir.name.endswith(f"-s{seed}")
        assert (run_dir / "summary.json").is_file()
        assert (run_dir / "accuracy_matrix.csv").is_file()
        assert (run_dir / "bof.csv").is_file()
        summary = json.loads((run_dir / "summary.json").read_text())
        assert summary["seed"] == seed
        assert summary["acc"] == record.acc
        assert summary["config"]["dataset.classes"] == "4"
        matrix = AccuracyMatrix.from_csv((run_dir / "accuracy_matrix.csv").read_text())
        assert matrix.is_complete()


def test_out_dir_resolution_prefers_env(tmp_path, monkeypatch):
    config_dir = tmp_path / "from_config"
    env_dir = tmp_path / "from_env"
    text = TINY + f"run.out_dir = {config_dir}\n"
    monkeypatch.delenv("OCL_OUT_DIR", raising=False)
    _, results = run_from_config_text(text)
    assert results[0][1].parent == config_dir
    monkeypatch.setenv("OCL_OUT_DIR", str(env_dir))
    _, results = run_from_config_text(text)
    assert results[0][1].parent == env_dir


def test_runs_are_byte_identical_across_invocations(tmp_path, monkeypatch):
    texts = []
    for sub in ("a", "b"):
        monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path / sub))
        _, results = run_from_config_text(TINY)
        texts.append((results[0][1] / "accuracy_matrix.csv").read_bytes())
    assert texts[0] == texts[1]


def test_buffer_joint_method_runs_and_records_bof_series(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    text = TINY + "train.method = buffer-joint\ntrain.epochs = 3\n"
    _, results = run_from_config_text(text)
    _, run_dir, record = results[0]
    assert len(record.bof_series) == 3
    assert record.acc is not None
    assert record.af is None
    assert (run_dir / "bof.csv").read_text().count("\n") == 4  # header + 3 rows


def test_invalid_config_produces_no_artifacts(tmp_path, monkeypatch):
    out = tmp_path / "out"
    monkeypatch.setenv("OCL_OUT_DIR", str(out))
    with pytest.raises(ConfigError, match="dataset.classes"):
        run_from_config_text(TINY + "dataset.classes = 1\n")
    assert not out.exists()


def test_sweep_runs_every_value_and_aggregates(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    text = TINY + "run.seeds = 0, 1\n"
    result = run_sweep_text(text.replace("run.seeds = 0\n", ""), "epochs", ["1", "2"])
    assert len(result["rows"]) == 2
    for row in result["rows"]:
        assert row["runs"] == 2
        assert len(row["run_dirs"]) == 2
        assert row["acc_mean"] is not None
    lines = Path(result["aggregate_csv"]).read_text().strip().splitlines()
    assert lines[0] == "axis,value,runs,acc_mean,acc_std,af_mean,af_std"
    assert len(lines) == 3


def test_sweep_duplicate_seeds_have_zero_std(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    text = TINY.replace("run.seeds = 0", "run.seeds = 5, 5")
    result = run_sweep_text(text, "memory", ["40"])
    row = result["rows"][0]
    assert row["acc_std"] == 0.0
    assert row["af_std"] == 0.0


def test_sweep_rejects_unknown_axis_and_bad_values(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    with pytest.raises(ConfigError, match="axis"):
        run_sweep_text(TINY, "width", ["1"])
    with pytest.raises(ConfigError, match="train.epochs"):
        run_sweep_text(TINY, "epochs", ["banana"])
    assert not (tmp_path / "sweep-epochs").exists()


def test_sweep_axis_reaches_the_right_knob(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    result = run_sweep_text(TINY, "n_experts", ["1", "3"])
    dirs = [d for row in result["rows"] for d in row["run_dirs"]]
    experts = []
    for d in dirs:
        summary = json.loads((Path(d) / "summary.json").read_text())
        experts.append(summary["config"]["model.experts"])
    assert experts == ["1", "3"]


def test_plot_data_round_trips_summary_numbers(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    _, results = run_from_config_text(TINY)
    _, run_dir, record = results[0]
    files = emit_plot_data(tmp_path)
    assert len(files) == 1
    rows = [line.split(",") for line in open(files[0]).read().strip().splitlines()[1:]]
    by_series = {}
    for series, x, y, seed in rows:
        by_series.setdefault(series, []).append((float(x), float(y), int(seed)))
    acc_rows = by_series["acc_vs_memory"]
    assert acc_rows == [(60.0, record.acc, 0)]
    finals = sorted(by_series["final_task_acc_vs_task"])
    assert finals[0][1] == record.matrix.get(1, 2)
    assert finals[1][1] == record.matrix.get(2, 2)
    new_rows = sorted(by_series["new_task_acc_vs_task"])
    assert [y for _, y, _ in new_rows] == record.new_task_acc
    bof_rows = by_series["bof_vs_task"]
    assert len(bof_rows) == 1  # the None first entry is skipped


def test_plot_data_errors_without_runs(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plot_data(tmp_path)
    with pytest.raises(FileNotFoundError):
        emit_plot_data(tmp_path / "missing")


def test_file_backed_dataset_runs_end_to_end(tmp_path, monkeypatch):
    from oclbench.datastream import generate_synthetic, save_dataset

    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path / "out"))
    data = tmp_path / "data.bin"
    save_dataset(generate_synthetic(4, 30, 8, 1.0, 0), data)
    text = f"""
dataset.kind = file
dataset.path = {data}
dataset.classes = 4
dataset.dim = 8
dataset.test_per_class = 5
stream.tasks = 2
stream.classes_per_task = 2
model.experts = 2
model.aligned_dim = 12
train.memory = 40
run.seeds = 0
"""
    _, results = run_from_config_text(text)
    assert results[0][2].matrix.is_complete()
