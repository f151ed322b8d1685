"""Command-line client for the estimation service.

Subcommands: ``estimate`` and ``tune`` run on a CSV dataset, ``simulate``
and ``toy`` drive the Monte Carlo harness, ``serve`` starts the HTTP
service.  By default requests run against an in-process copy of the
service; ``--server URL`` targets a remote one instead.  Reports print as
JSON with sorted keys, so identical arguments give byte-identical output.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

from .core import AnalysisError
from .dataio import CsvSchema, load_dataset
from .sim import report_to_csv, toy_report_to_csv

_JSON_KW = {"sort_keys": True, "indent": 2}


def _emit(payload) -> None:
    print(json.dumps(payload, **_JSON_KW))


def _fail(code: str, message: str) -> int:
    _emit({"error": {"code": code, "message": message}})
    return 1


def _post(server: str | None, path: str, payload: dict):
    if server:
        return httpx.post(server.rstrip("/") + path, json=payload, timeout=None)

    async def _inprocess():
        from .service import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://otrvalue.internal", timeout=None) as client:
            return await client.post(path, json=payload)

    return asyncio.run(_inprocess())


def _finish(resp, renderer=None) -> int:
    body = resp.json()
    if resp.status_code != 200:
        if isinstance(body, dict) and "error" in body:
            _emit(body)
        else:
            _emit({"error": {"code": f"http-{resp.status_code}", "message": json.dumps(body, sort_keys=True)}})
        return 1
    if renderer is None:
        _emit(body)
    else:
        sys.stdout.write(renderer(body))
    return 0


def _schema_from_args(args) -> CsvSchema:
    labels = tuple(args.a_labels.split(",")) if args.a_labels else None
    return CsvSchema(
        x_columns=tuple(c.strip() for c in args.x_cols.split(",") if c.strip()),
        a_column=args.a_col,
        y_column=args.y_col,
        delimiter=args.delimiter,
        header=not args.no_header,
        a_labels=labels,
    )


def _data_payload(args) -> dict:
    ds = load_dataset(args.data, _schema_from_args(args))
    return {"x": ds.x.tolist(), "a": ds.a.tolist(), "y": ds.y.tolist()}


def _parse_truncation(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise AnalysisError("bad-config", f"truncation must be 'lo,hi', got {text!r}") from None
    return lo, hi


def _add_data_flags(sub):
    sub.add_argument("--data", required=True, help="CSV file with one observation per row")
    sub.add_argument("--x-cols", required=True, help="comma-separated covariate column names")
    sub.add_argument("--a-col", required=True, help="treatment column name (values 0/1)")
    sub.add_argument("--y-col", required=True, help="outcome column name")
    sub.add_argument("--a-labels", default=None, help="control,treated label pair for the treatment column")
    sub.add_argument("--delimiter", default=",")
    sub.add_argument("--no-header", action="store_true", help="columns are 0-based positions, file has no header")


def _add_nuisance_flags(sub, default_family="spline"):
    sub.add_argument("--family", choices=("frequency", "spline"), default=default_family)
    sub.add_argument("--spline-df", type=int, default=6)
    sub.add_argument("--truncation", default="0.05,0.95", help="propensity truncation bounds 'lo,hi'")


def _nuisance_payload(args) -> dict:
    lo, hi = _parse_truncation(args.truncation)
    return {"family": args.family, "spline_df": args.spline_df, "truncation": (lo, hi)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otrvalue", description=__doc__.split("\n", 1)[0])
    parser.add_argument("--server", default=None, help="base URL of a running service; default runs in-process")
    commands = parser.add_subparsers(dest="command", required=True)

    est = commands.add_parser("estimate", help="confidence interval for the value of the learned rule")
    _add_data_flags(est)
    _add_nuisance_flags(est)
    est.add_argument("--method", choices=("adaptive", "sss", "subbagging", "plugin"), default="adaptive")
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument("--C", type=float, default=0.01, help="bandwidth-tuning constant")
    est.add_argument("--repeats", type=int, default=10, help="independent fold plans averaged together")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--clamp", type=float, default=0.05, help="adaptive center clamp c; center stays in [c, 1-c]")

    tune = commands.add_parser("tune", help="report approximation errors and selected bandwidths")
    _add_data_flags(tune)
    _add_nuisance_flags(tune)
    tune.add_argument("--C", type=float, default=0.01)
    tune.add_argument("--seed", type=int, default=0)

    simc = commands.add_parser("simulate", help="coverage study on a built-in scenario")
    simc.add_argument("--scenario", required=True, choices=("A", "B", "C", "D", "E"))
    simc.add_argument("--n", type=int, default=1000)
    simc.add_argument("--reps", type=int, default=500)
    simc.add_argument(
        "--methods",
        default="adaptive",
        help="comma-separated subset of adaptive, smoothing(t0), sss, subbagging, oracle, plugin",
    )
    simc.add_argument("--seed", type=int, default=0)
    simc.add_argument("--C", type=float, default=0.05)
    simc.add_argument("--alpha", type=float, default=0.05)
    simc.add_argument("--jobs", type=int, default=1, help="parallel replication workers")
    simc.add_argument("--clamp", type=float, default=0.05)
    simc.add_argument("--format", choices=("json", "csv"), default="json")

    toyc = commands.add_parser("toy", help="bias exhibit on the two-group trial")
    toyc.add_argument("--n", type=int, default=400)
    toyc.add_argument("--reps", type=int, default=2000)
    toyc.add_argument("--seed", type=int, default=0)
    toyc.add_argument("--format", choices=("json", "csv"), default="json")

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _cmd_estimate(args) -> int:
    payload = {
        "data": _data_payload(args),
        "method": args.method,
        "alpha": args.alpha,
        "C": args.C,
        "repeats": args.repeats,
        "seed": args.seed,
        "clamp": args.clamp,
        "nuisance": _nuisance_payload(args),
    }
    return _finish(_post(args.server, "/estimate", payload))


def _cmd_tune(args) -> int:
    payload = {
        "data": _data_payload(args),
        "C": args.C,
        "seed": args.seed,
        "nuisance": _nuisance_payload(args),
    }
    return _finish(_post(args.server, "/tune", payload))


def _cmd_simulate(args) -> int:
    payload = {
        "scenario": args.scenario,
        "n": args.n,
        "reps": args.reps,
        "methods": [m.strip() for m in args.methods.split(",") if m.strip()],
        "seed": args.seed,
        "C": args.C,
        "alpha": args.alpha,
        "jobs": args.jobs,
        "clamp": args.clamp,
    }
    renderer = report_to_csv if args.format == "csv" else None
    return _finish(_post(args.server, "/simulate", payload), renderer)


def _cmd_toy(args) -> int:
    payload = {"n": args.n, "reps": args.reps, "seed": args.seed}
    renderer = toy_report_to_csv if args.format == "csv" else None
    return _finish(_post(args.server, "/toy", payload), renderer)


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("otrvalue.service:app", host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "estimate": _cmd_estimate,
        "tune": _cmd_tune,
        "simulate": _cmd_simulate,
        "toy": _cmd_toy,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except AnalysisError as exc:
        return _fail(exc.code, exc.message)
    except OSError as exc:
        return _fail("io-error", str(exc))
    except httpx.HTTPError as exc:
        return _fail("connection", str(exc))


if __name__ == "__main__":
    sys.exit(main())
