"""Command-line client for the experiment service.

Every subcommand except ``serve`` talks HTTP: to a remote server when
``--server`` is given, otherwise to the FastAPI app mounted in-process,
so no deployment is needed for local work.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oclbench",
                                     description="online continual learning benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a config (all its seeds) and persist artifacts")
    run.add_argument("config", help="path to a key=value config file")
    run.add_argument("--server", default=None, help="base URL of a running service")

    sweep = sub.add_parser("sweep", help="run a config across an axis of values")
    sweep.add_argument("config")
    sweep.add_argument("--axis", required=True,
                       help="one of: epochs, n_experts, memory, augment, rsd, distill_direction, rsd_student")
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sweep.add_argument("--server", default=None)

    plot = sub.add_parser("plot-data", help="emit tidy plot CSVs from run artifacts")
    plot.add_argument("run_dir")
    plot.add_argument("--server", default=None)

    serve = sub.add_parser("serve", help="start the experiment service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


async def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=None) as client:
            response = await client.post(path, json=payload)
    else:
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://oclbench.local",
                                     timeout=None) as client:
            response = await client.post(path, json=payload)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise SystemExit(f"error: {detail}")
    return response.json()


def _read_config(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise SystemExit(f"error: config file not found: {path}")
    return p.read_text()


def cmd_run(args) -> int:
    body = asyncio.run(_post(args.server, "/runs", {"config_text": _read_config(args.config)}))
    for run in body["runs"]:
        af = "-" if run["af"] is None else f"{run['af']:.4f}"
        acc = "-" if run["acc"] is None else f"{run['acc']:.4f}"
        print(f"seed {run['seed']}: method={run['method']} acc={acc} af={af} -> {run['run_dir']}")
    return 0


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    body = asyncio.run(_post(args.server, "/sweeps", {
        "config_text": _read_config(args.config),
        "axis": args.axis,
        "values": values,
    }))
    for row in body["rows"]:
        acc = "-" if row["acc_mean"] is None else f"{row['acc_mean']:.4f}"
        print(f"{args.axis}={row['value']}: runs={row['runs']} acc_mean={acc}")
    print(f"aggregate: {body['aggregate_csv']}")
    return 0


def cmd_plot_data(args) -> int:
    body = asyncio.run(_post(args.server, "/plot-data", {"run_dir": args.run_dir}))
    for path in body["files"]:
        print(path)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "plot-data": cmd_plot_data,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
