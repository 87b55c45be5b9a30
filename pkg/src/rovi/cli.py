"""Command-line entry point: ``rovi <command> ...``.

Relative file paths resolve against ``$ROVI_DATA_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

from . import bench
from .indexes import build_index, parse_names
from .model import (
    Dataset,
    RoviError,
    load_queries,
    load_users,
    load_vocab,
    query_from_record,
    save_queries,
    save_users,
    save_vocab,
)
from .oracle import validate
from .qiv import DEFAULT_LEAF_CAPACITY, DEFAULT_MAX_LEVEL, QivIndex
from .workload import WorkloadSpec, generate_dataset, generate_workload


def data_path(p: str | None, default: str | None = None) -> Path:
    if p is None:
        if default is None:
            raise RoviError("missing path argument")
        p = default
    path = Path(p)
    base = os.environ.get("ROVI_DATA_DIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def _spec_from_args(args: argparse.Namespace) -> WorkloadSpec:
    values: dict = {}
    if getattr(args, "spec", None):
        with open(data_path(args.spec), encoding="utf-8") as fh:
            values.update(json.load(fh))
    overrides = {
        "n_users": getattr(args, "users", None),
        "seed": getattr(args, "seed", None),
        "n_queries": getattr(args, "count", None),
        "n_query_words": getattr(args, "words", None),
        "query_region_fraction": getattr(args, "region_fraction", None),
        "gamma_g": getattr(args, "gamma_g", None),
        "gamma_v": getattr(args, "gamma_v", None),
        "vocab_size": getattr(args, "vocab_size", None),
        "zipf_s": getattr(args, "zipf", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "min_words", None) is not None or getattr(args, "max_words", None) is not None:
        lo, hi = values.get("words_per_user", WorkloadSpec.words_per_user)
        values["words_per_user"] = (args.min_words or lo, args.max_words or hi)
    if getattr(args, "min_size", None) is not None or getattr(args, "max_size", None) is not None:
        lo, hi = values.get("region_size", WorkloadSpec.region_size)
        values["region_size"] = (args.min_size or lo, args.max_size or hi)
    known = {f.name for f in fields(WorkloadSpec)}
    unknown = set(values) - known
    if unknown:
        raise RoviError(f"unknown workload fields: {sorted(unknown)}")
    for k in ("words_per_user", "region_size"):
        if k in values:
            values[k] = tuple(values[k])
    return WorkloadSpec(**values)


def _add_workload_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", help="JSON file with WorkloadSpec fields")
    p.add_argument("--users", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--zipf", type=float)
    p.add_argument("--min-words", type=int)
    p.add_argument("--max-words", type=int)
    p.add_argument("--min-size", type=float)
    p.add_argument("--max-size", type=float)


def _add_query_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--count", type=int, help="number of queries")
    p.add_argument("--words", type=int, help="visual words per query")
    p.add_argument("--region-fraction", type=float)
    p.add_argument("--gamma-g", type=float)
    p.add_argument("--gamma-v", type=float)


def _add_index_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-level", type=int, default=None)
    p.add_argument("--leaf-capacity", type=int, default=None)
    p.add_argument("--paper-faithful-sfi", action="store_true", help="literal GeoSim(Q, leaf) >= Γ_G leaf prune")


def _index_opts(args: argparse.Namespace, qiv_defaults: dict) -> dict:
    opts = dict(qiv_defaults)
    if args.max_level is not None:
        opts["max_level"] = args.max_level
    if args.leaf_capacity is not None:
        opts["leaf_capacity"] = args.leaf_capacity
    if args.paper_faithful_sfi:
        opts["paper_faithful_sfi"] = True
    return opts


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    users, vocab = generate_dataset(spec)
    save_users(data_path(args.out, "users.jsonl"), users)
    save_vocab(data_path(args.vocab, "vocab.jsonl"), vocab)
    print(f"wrote {len(users)} users, {len(vocab)} words", file=sys.stderr)
    return 0


def cmd_gen_queries(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    if args.data:
        users = load_users(data_path(args.data))
    else:
        users, _ = generate_dataset(spec)
    queries = generate_workload(spec, users)
    save_queries(data_path(args.out, "queries.jsonl"), queries)
    print(f"wrote {len(queries)} queries", file=sys.stderr)
    return 0


def cmd_build(args: argparse.Namespace) -> int:
    ds = Dataset.load(data_path(args.data, "users.jsonl"), data_path(args.vocab, "vocab.jsonl"))
    opts = _index_opts(args, {"max_level": DEFAULT_MAX_LEVEL, "leaf_capacity": DEFAULT_LEAF_CAPACITY})
    t0 = time.perf_counter()
    index = build_index(args.index, ds.users, ds.vocab, **opts)
    elapsed = time.perf_counter() - t0
    info = {"index": args.index, "users": len(ds.users), "build_s": round(elapsed, 4)}
    if isinstance(index, QivIndex):
        out = data_path(args.out, "index.qiv")
        index.save(out)
        info.update(leaves=len(index.leaves()), out=str(out), bytes=out.stat().st_size)
    elif args.out:
        raise RoviError(f"{args.index} has no snapshot format; it is rebuilt from the dataset on use")
    print(json.dumps(info))
    return 0


def _read_query(text: str):
    if text.startswith("@"):
        text = data_path(text[1:]).read_text(encoding="utf-8")
    return query_from_record(json.loads(text))


def cmd_query(args: argparse.Namespace) -> int:
    q = _read_query(args.query)
    if args.index_file:
        index = QivIndex.load(data_path(args.index_file), use_mmap=True)
    else:
        ds = Dataset.load(data_path(args.data, "users.jsonl"), data_path(args.vocab, "vocab.jsonl"))
        opts = _index_opts(args, {"max_level": DEFAULT_MAX_LEVEL, "leaf_capacity": DEFAULT_LEAF_CAPACITY})
        index = build_index(args.index, ds.users, ds.vocab, **opts)
    print(json.dumps({"results": index.search(q)}))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    ds = Dataset.load(data_path(args.data, "users.jsonl"), data_path(args.vocab, "vocab.jsonl"))
    queries = load_queries(data_path(args.queries, "queries.jsonl"))
    names = [n for n in parse_names(args.indexes) if n != "oracle"]
    opts = _index_opts(args, {"max_level": DEFAULT_MAX_LEVEL, "leaf_capacity": DEFAULT_LEAF_CAPACITY})
    report = validate(ds.users, ds.vocab, queries, names, workers=args.workers, **opts)
    text = report.to_json()
    if args.report:
        data_path(args.report).write_text(text + "\n", encoding="utf-8")
        status = "PASS" if report.passed else "FAIL"
        print(f"{status}: {len(report.checks)} queries x {len(names)} indexes", file=sys.stderr)
    else:
        print(text)
    return 0 if report.passed else 1


def cmd_bench(args: argparse.Namespace) -> int:
    if args.action == "plot":
        with open(data_path(args.report, "bench.json"), encoding="utf-8") as fh:
            report = json.load(fh)
        out = data_path(args.out, "curves.svg")
        bench.plot_report(report, str(out))
        print(f"wrote {out}", file=sys.stderr)
        return 0
    spec = _spec_from_args(args)
    names = parse_names(args.indexes)
    opts = _index_opts(args, bench.BENCH_QIV_OPTS)
    if args.sweep:
        rows = bench.sweep(
            args.sweep, spec, names, warmup=args.warmup, repeats=args.repeats,
            skip_validate=args.skip_validate, **opts,
        )
        payload: dict = {"sweep": args.sweep, "rows": rows}
    else:
        users, vocab = generate_dataset(spec)
        queries = generate_workload(spec, users)
        report = bench.run_bench(
            users, vocab, queries, names, args.warmup, args.repeats,
            skip_validate=args.skip_validate, parallel=args.parallel, **opts,
        )
        payload = {"sweep": None, "rows": [report.to_dict()]}
    bench.save_report(data_path(args.report, "bench.json"), payload)
    for row in payload["rows"]:
        label = f"{row.get('field')}={row.get('value')} " if "value" in row else ""
        cells = ", ".join(f"{n}: {s['mean_ms']:.2f} ms" for n, s in row["indexes"].items())
        print(f"{label}{cells}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rovi", description="Region-of-visual-interests indexes and benchmarks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic user dataset")
    _add_workload_args(p)
    p.add_argument("--out", help="users JSONL (default users.jsonl)")
    p.add_argument("--vocab", help="vocabulary JSONL (default vocab.jsonl)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-queries", help="generate a query workload")
    _add_workload_args(p)
    _add_query_args(p)
    p.add_argument("--data", help="users JSONL to anchor queries on (else regenerated from the spec)")
    p.add_argument("--out", help="queries JSONL (default queries.jsonl)")
    p.set_defaults(func=cmd_gen_queries)

    p = sub.add_parser("build", help="build an index (QIV writes a snapshot)")
    p.add_argument("--index", choices=["qiv", "di", "vfi", "sfi"], default="qiv")
    p.add_argument("--data")
    p.add_argument("--vocab")
    p.add_argument("--out")
    _add_index_args(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="run one query; JSON text or @file")
    p.add_argument("--index-file", help="QIV snapshot")
    p.add_argument("--index", choices=["qiv", "di", "vfi", "sfi"], default="qiv")
    p.add_argument("--data")
    p.add_argument("--vocab")
    p.add_argument("--query", required=True)
    _add_index_args(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("validate", help="compare indexes with the brute-force oracle")
    p.add_argument("--data")
    p.add_argument("--vocab")
    p.add_argument("--queries")
    p.add_argument("--indexes", default="qiv,di,vfi,sfi")
    p.add_argument("--report", help="write JSON report here instead of stdout")
    p.add_argument("--workers", type=int, default=1)
    _add_index_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="time indexes on synthetic workloads, or plot a report")
    p.add_argument("action", nargs="?", choices=["run", "plot"], default="run")
    _add_workload_args(p)
    _add_query_args(p)
    p.add_argument("--sweep", choices=sorted(bench.SWEEPS))
    p.add_argument("--indexes", default="oracle,qiv,di,vfi,sfi")
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--skip-validate", action="store_true")
    p.add_argument("--parallel", type=int, default=0, help="threads for an extra throughput figure")
    p.add_argument("--report", help="JSON report path (default bench.json)")
    p.add_argument("--out", help="plot output (default curves.svg)")
    _add_index_args(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (RoviError, OSError) as exc:
        print(f"rovi: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
