"""Request/response bodies for the experiment service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    config_text: str = Field(description="experiment config in the flat key=value format")


class RunResult(BaseModel):
    run_dir: str
    seed: int
    method: str
    acc: float | None
    af: float | None


class RunResponse(BaseModel):
    runs: list[RunResult]


class SweepRequest(BaseModel):
    config_text: str
    axis: str
    values: list[str] = Field(min_length=1)


class SweepRow(BaseModel):
    value: str
    runs: int
    acc_mean: float | None
    acc_std: float | None
    af_mean: float | None
    af_std: float | None
    run_dirs: list[str]


class SweepResponse(BaseModel):
    sweep_dir: str
    aggregate_csv: str
    rows: list[SweepRow]


class PlotDataRequest(BaseModel):
    run_dir: str


class PlotDataResponse(BaseModel):
    files: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
