"""HTTP surface of the experiment service."""

import json

import pytest
from fastapi.testclient import TestClient

from oclbench.service import create_app

CONFIG = """
dataset.classes = 4
dataset.per_class = 20
dataset.test_per_class = 5
dataset.dim = 8
stream.tasks = 2
stream.classes_per_task = 2
model.experts = 2
model.aligned_dim = 12
model.projection_dim = 6
train.memory = 40
train.buffer_batch_size = 16
run.seeds = 0
"""


@pytest.fixture()
def client(tmp_path, monkeypatch):
    monkeypatch.setenv("OCL_OUT_DIR", str(tmp_path))
    return TestClient(create_app())


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_run_endpoint_returns_metrics_and_writes_artifacts(client, tmp_path):
    response = client.post("/runs", json={"config_text": CONFIG})
    assert response.status_code == 200
    runs = response.json()["runs"]
    assert len(runs) == 1
    run = runs[0]
    assert run["method"] == "mose"
    assert 0.0 <= run["acc"] <= 1.0
    assert (tmp_path / run["run_dir"].split("/")[-1] / "summary.json").is_file()


def test_run_endpoint_rejects_invalid_config_with_the_field_name(client):
    response = client.post("/runs", json={"config_text": "train.lr = -1"})
    assert response.status_code == 422
    assert "train.lr" in response.json()["detail"]


def test_run_endpoint_rejects_missing_dataset_file(client):
    config = CONFIG + "dataset.kind = file\ndataset.path = /nope/missing.bin\n"
    response = client.post("/runs", json={"config_text": config})
    assert response.status_code == 404


def test_sweep_endpoint_aggregates(client, tmp_path):
    response = client.post("/sweeps", json={
        "config_text": CONFIG, "axis": "memory", "values": ["20", "40"],
    })
    assert response.status_code == 200
    body = response.json()
    assert len(body["rows"]) == 2
    assert body["rows"][0]["value"] == "20"
    assert (tmp_path / body["aggregate_csv"].split("/")[-2] / "aggregate.csv").is_file()


def test_sweep_endpoint_validates_axis(client):
    response = client.post("/sweeps", json={
        "config_text": CONFIG, "axis": "nope", "values": ["1"],
    })
    assert response.status_code == 422


def test_plot_data_endpoint(client, tmp_path):
    client.post("/runs", json={"config_text": CONFIG})
    response = client.post("/plot-data", json={"run_dir": str(tmp_path)})
    assert response.status_code == 200
    files = response.json()["files"]
    assert len(files) == 1
    header = open(files[0]).readline().strip()
    assert header == "series,x,y,seed"


def test_plot_data_endpoint_404_on_empty_dir(client, tmp_path):
    response = client.post("/plot-data", json={"run_dir": str(tmp_path / "void")})
    assert response.status_code == 404


def test_request_body_validation_is_pydantic(client):
    response = client.post("/runs", json={})
    assert response.status_code == 422
    response = client.post("/sweeps", json={"config_text": CONFIG, "axis": "memory", "values": []})
    assert response.status_code == 422
