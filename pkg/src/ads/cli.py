"""Command-line entry point: ``ads detect | benchmark | plan | serve | validate``.

Exit status is 0 on success, 1 when arguments or requests fail validation,
and 2 when the run itself fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .detectors import ESTIMATORS
from .errors import ADSError, ValidationFailed

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
MINI_DATASET = Path(__file__).parent / "data" / "mini"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Reports usage problems as validation failures (exit 1) instead of argparse's 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _columns(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


def _json_arg(text: str):
    """Inline JSON, or ``@path`` to read it from a file."""
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    return json.loads(text)


# (flag name, argparse kwargs); each becomes the request argument with dashes swapped for underscores
REQUEST_FLAGS = [
    ("data-file", dict(metavar="PATH", help="input CSV file")),
    ("time-column", dict()),
    ("time-format", dict(help="strptime pattern, epoch_ms or epoch_s")),
    ("target-columns", dict(type=_columns, metavar="A,B,...")),
    ("label-column", dict()),
    ("feature-columns", dict(type=_columns, metavar="A,B,...")),
    ("prediction-type", dict(choices=["batch", "stream"])),
    ("recent-data", dict(metavar="PATH", help="CSV of recent rows for stream prediction")),
    ("algorithm-config", dict(type=_json_arg, metavar="JSON|@FILE")),
    ("algorithm-type", dict()),
    ("anomaly-estimator", dict()),
    ("lookback-window", dict(type=int)),
    ("observation-window", dict(type=int)),
    ("labeling-method", dict()),
    ("labeling-threshold", dict(type=float)),
    ("train-val-test-column", dict()),
    ("evaluation-metrics", dict(type=_columns, metavar="f1,precision,recall")),
    ("evaluation-time", dict(type=float, metavar="SECONDS")),
    ("instance-size", dict(choices=["S", "M", "L"])),
    ("unsupervised-fs", dict(action="store_const", const=True)),
    ("train-test-split", dict(type=float)),
    ("train-cv-split", dict(type=int)),
]
FILE_ARGS = ("data_file", "recent_data")


def _add_request_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", choices=["univariate", "multivariate", "semisupervised", "regression", "mixture"])
    p.add_argument("--config", metavar="PATH", help="JSON file of request arguments; flags override it")
    p.add_argument("--series-id")
    g = p.add_argument_group("request arguments")
    for name, kw in REQUEST_FLAGS:
        g.add_argument(f"--{name}", dest=name.replace("-", "_"), default=None, **kw)


def _request_body(args) -> tuple[str | None, dict]:
    """Merge ``--config`` with explicit flags into ``(endpoint, body)``; file arguments are read here."""
    body: dict = {}
    endpoint = None
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if "body" in doc:
            endpoint, doc = doc.get("endpoint"), doc["body"]
        else:
            endpoint = doc.pop("endpoint", None)
        body.update(doc)
    for name, _ in REQUEST_FLAGS:
        key = name.replace("-", "_")
        value = getattr(args, key)
        if value is not None:
            body[key] = value
    if args.series_id is not None:
        body["series_id"] = args.series_id
    if args.seed is not None:
        body["algorithm_config"] = {**body.get("algorithm_config", {}), "random_seed": args.seed}
    for key in FILE_ARGS:
        if isinstance(body.get(key), str) and body[key] and "\n" not in body[key]:
            path = Path(body[key])
            if not path.is_file():
                raise UsageError(f"{key.replace('_', '-')}: no such file {path}")
            body[key] = path.read_text(encoding="utf-8")
    return args.endpoint or endpoint, body


def _validated(args):
    from .service.schema import validate_request

    endpoint, body = _request_body(args)
    if endpoint is None:
        raise UsageError("--endpoint is required (or an 'endpoint' key in --config)")
    request, violations = validate_request(endpoint, body)
    if violations:
        raise ValidationFailed(violations)
    return request


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_detect(args) -> int:
    from .pipeline import run_detection

    request = _validated(args)
    result = run_detection(request, request.data_file, request.recent_data)
    out = Path(args.output_dir)
    paths = result.write(out)
    if args.plot:
        from .plotting import detection_figure

        with open(out / "plot_data.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "column", "value", "label"])
            w.writerows((ts, col, repr(v), lab) for ts, col, v, lab in result.plot_rows())
        paths["plot_data.csv"] = out / "plot_data.csv"
        paths["detection.png"] = detection_figure(result, out / "detection.png")

    s = result.summary
    print(f"rows scored: {s['rows_scored']}")
    print(f"anomalies: {s['anomaly_count']}")
    attribution = result.series.attribution
    for row, stamp in list(zip(result.series.anomalies, s["anomalies"]))[: args.show]:
        line = f"  {stamp}"
        if row in attribution:
            line += "  " + ", ".join(f"{c}={w:.2f}" for c, w in attribution[row][:3])
        print(line)
    if s["anomaly_count"] > args.show:
        print(f"  ... {s['anomaly_count'] - args.show} more in {paths['scores.csv']}")
    print(f"wrote {', '.join(sorted(str(p) for p in paths.values()))}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .evaluation import PUBLISHED_F1, BenchmarkSpec, BenchmarkWarning, run_benchmark, table_csv, table_text
    from .plotting import benchmark_figure

    names = ESTIMATORS if args.estimators in (None, ["all"]) else args.estimators
    unknown = [e for e in names if e not in ESTIMATORS]
    if unknown:
        raise ValidationFailed([f"unknown estimator(s) {', '.join(unknown)}; valid names: all, {', '.join(ESTIMATORS)}"])
    metrics = tuple(args.evaluation_metrics or ("f1", "precision", "recall"))
    try:
        spec = BenchmarkSpec(
            root=Path(args.root) if args.root else MINI_DATASET,
            estimators=list(names),
            datasets=args.datasets,
            evaluation_metrics=metrics,
            evaluation_time=args.evaluation_time or 7200.0,
            seed=42 if args.seed is None else args.seed,
            lookback_window=args.lookback_window or 8,
            algorithm_config=args.algorithm_config or {},
            jobs=args.jobs,
        )
    except ValueError as exc:
        raise ValidationFailed([str(exc)]) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BenchmarkWarning)
        rows = run_benchmark(spec)
    for w in caught:
        if issubclass(w.category, BenchmarkWarning):
            print(f"warning: {w.message}", file=sys.stderr)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = table_text(rows, metrics, reference=args.reference)
    (out / "benchmark.csv").write_text(table_csv(rows), encoding="utf-8")
    (out / "benchmark.txt").write_text(text, encoding="utf-8")
    benchmark_figure(rows, out / "benchmark.png", PUBLISHED_F1 if args.reference else None)
    print(text, end="")
    print(f"wrote {out / 'benchmark.csv'}, {out / 'benchmark.txt'}, {out / 'benchmark.png'}")
    return EXIT_OK


def cmd_plan(args) -> int:
    from .errors import EmptyMapping
    from .modeler import FailureModeCatalog, HttpClient, ReplayClient, compile_plan, generate_catalog, map_metrics
    from .tsdata import read_header

    if args.catalog:
        catalog = FailureModeCatalog.load(args.catalog)
    else:
        if args.llm:
            client = HttpClient()
        elif args.replay:
            client = ReplayClient.from_file(args.replay)
        else:
            client = ReplayClient.cloud_fixture()
        catalog = generate_catalog(client, args.domain)

    if args.columns:
        columns = args.columns
    elif args.header_from:
        columns = read_header(Path(args.header_from).read_bytes())
    else:
        raise UsageError("give --columns or --header-from")
    columns = [c for c in columns if c != args.time_column]

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "catalog.json").write_text(catalog.to_json(), encoding="utf-8")
    mapping = map_metrics(catalog, columns)
    (out / "mapping.json").write_text(json.dumps(mapping.to_dict(), indent=1) + "\n", encoding="utf-8")
    print(mapping.report(), end="")
    for err in catalog.errors:
        print(f"warning: could not parse {err['stage']} reply for {err['subject']}", file=sys.stderr)
    try:
        plan = compile_plan(mapping, catalog, data_file=args.data_file or "data.csv",
                            time_column=args.time_column, time_format=args.time_format)
    except EmptyMapping as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    (out / "plan.json").write_text(plan.to_json(), encoding="utf-8")
    req_dir = out / "requests"
    req_dir.mkdir(exist_ok=True)
    for k, req in enumerate(plan.requests):
        path = req_dir / f"{k:03d}_{req['endpoint']}.json"
        path.write_text(json.dumps(req, indent=1) + "\n", encoding="utf-8")
    print(f"{len(plan.requests)} requests written to {req_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .service.schema import validate_request

    if not args.requests:
        request = _validated(args)
        print(f"ok: {request.endpoint} request is valid")
        return EXIT_OK
    bad = 0
    for path in args.requests:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        _, violations = validate_request(doc.get("endpoint", ""), doc.get("body", {}))
        if violations:
            bad += 1
            print(f"{path}: invalid")
            for v in violations:
                print(f"  - {v}")
        else:
            print(f"{path}: ok")
    return EXIT_INVALID if bad else EXIT_OK


def cmd_serve(args) -> int:
    from .service.app import serve

    serve(host=args.host, port=args.port, store_dir=args.store_dir, max_jobs=args.max_jobs,
          workers=args.workers, default_seed=args.seed)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="ads", description="Anomaly detection for time-series metrics.")
    parser.add_argument("--version", action="version", version=f"ads {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="random seed for every stochastic step")

    p = sub.add_parser("detect", help="run one detection request locally")
    _add_request_flags(p)
    common(p)
    p.add_argument("--output-dir", default="ads-out")
    p.add_argument("--plot", action="store_true", help="also write plot_data.csv and detection.png")
    p.add_argument("--show", type=int, default=20, help="anomalies to list on stdout")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("benchmark", help="per-asset benchmark over a dataset root")
    common(p)
    p.add_argument("--root", help="dataset root (default: bundled mini dataset)")
    p.add_argument("--estimators", type=_columns, help="comma list or 'all'")
    p.add_argument("--datasets", type=_columns)
    p.add_argument("--evaluation-metrics", type=_columns)
    p.add_argument("--evaluation-time", type=float)
    p.add_argument("--lookback-window", type=int)
    p.add_argument("--algorithm-config", type=_json_arg)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--reference", action="store_true", help="add published F1 values to the table")
    p.add_argument("--output-dir", default="ads-bench")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("plan", help="build a monitoring plan from a failure-mode catalog")
    common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--catalog", help="catalog JSON to load instead of generating one")
    src.add_argument("--replay", help="recorded-response fixture for the prompt chain")
    src.add_argument("--llm", action="store_true", help="use ADS_LLM_ENDPOINT")
    p.add_argument("--domain", default="cloud infrastructure")
    p.add_argument("--columns", type=_columns)
    p.add_argument("--header-from", metavar="CSV", help="read column names from this file's header")
    p.add_argument("--data-file", help="data_file value to put in compiled requests")
    p.add_argument("--time-column", default="timestamp")
    p.add_argument("--time-format")
    p.add_argument("--output-dir", default="ads-plan")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("validate", help="check request files or flags against the endpoint rules")
    _add_request_flags(p)
    common(p)
    p.add_argument("requests", nargs="*", help="request JSON files ({endpoint, body})")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the HTTP job service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.add_argument("--store-dir")
    p.add_argument("--max-jobs", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationFailed as exc:
        print("error: invalid request", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_INVALID
    except ADSError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
