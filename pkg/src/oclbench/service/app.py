"""FastAPI app exposing runs, sweeps, and plot-data extraction.

Execution is synchronous: a run request returns once every seed has
finished and its artifacts are on disk.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigError
from ..experiment import emit_plot_data, run_from_config_text, run_sweep_text
from .schemas import (
    HealthResponse,
    PlotDataRequest,
    PlotDataResponse,
    RunRequest,
    RunResponse,
    RunResult,
    SweepRequest,
    SweepResponse,
    SweepRow,
)


def create_app() -> FastAPI:
    app = FastAPI(title="oclbench", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/runs", response_model=RunResponse)
    def runs(request: RunRequest):
        try:
            _, results = run_from_config_text(request.config_text)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return RunResponse(runs=[
            RunResult(run_dir=str(run_dir), seed=seed, method=record.method,
                      acc=record.acc, af=record.af)
            for seed, run_dir, record in results
        ])

    @app.post("/sweeps", response_model=SweepResponse)
    def sweeps(request: SweepRequest):
        try:
            result = run_sweep_text(request.config_text, request.axis, request.values)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return SweepResponse(sweep_dir=result["sweep_dir"], aggregate_csv=result["aggregate_csv"],
                             rows=[SweepRow(**row) for row in result["rows"]])

    @app.post("/plot-data", response_model=PlotDataResponse)
    def plot_data(request: PlotDataRequest):
        try:
            files = emit_plot_data(request.run_dir)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return PlotDataResponse(files=files)

    return app
