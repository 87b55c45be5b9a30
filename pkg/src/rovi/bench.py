"""Query-latency benchmarking and parameter sweeps."""

from __future__ import annotations

import json
import logging
import os
import platform
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .indexes import build_index
from .model import RoviError, RoviQuery, RoviUser, VisualVocabulary
from .oracle import OracleIndex, first_difference, oracle_search
from .workload import WorkloadSpec, generate_dataset, generate_workload

log = logging.getLogger(__name__)

# QIV levels used when benchmarking; deeper trees replicate desk-scale users
# into too many leaves to fit in a few GB (see README).
BENCH_QIV_OPTS = {"max_level": 5, "leaf_capacity": 64}

SWEEPS: dict[str, tuple[str, list]] = {
    "size": ("n_users", [20_000, 50_000, 100_000, 150_000, 200_000]),
    "words": ("n_query_words", [50, 75, 100, 125, 150]),
    "gamma-g": ("gamma_g", [0.1, 0.2, 0.3, 0.4, 0.5]),
    "gamma-v": ("gamma_v", [0.1, 0.2, 0.3, 0.4, 0.5]),
    "region": ("query_region_fraction", [0.01, 0.02, 0.03, 0.04, 0.05]),
}


class BenchError(RoviError):
    pass


@dataclass
class IndexTiming:
    name: str
    build_seconds: float
    query_seconds: list[float]  # per query, mean over repeats
    result_sizes: list[int]
    throughput_qps: float | None = None

    @property
    def mean(self) -> float:
        return statistics.fmean(self.query_seconds) if self.query_seconds else 0.0

    @property
    def median(self) -> float:
        return statistics.median(self.query_seconds) if self.query_seconds else 0.0

    @property
    def p95(self) -> float:
        if not self.query_seconds:
            return 0.0
        return float(np.percentile(self.query_seconds, 95))

    def summary(self) -> dict:
        sizes = self.result_sizes or [0]
        return {
            "build_s": self.build_seconds,
            "mean_ms": self.mean * 1e3,
            "median_ms": self.median * 1e3,
            "p95_ms": self.p95 * 1e3,
            "result_size": {"min": min(sizes), "mean": statistics.fmean(sizes), "max": max(sizes)},
            "throughput_qps": self.throughput_qps,
            "query_ms": [t * 1e3 for t in self.query_seconds],
        }


@dataclass
class BenchReport:
    indexes: dict[str, IndexTiming] = field(default_factory=dict)
    n_users: int = 0
    n_queries: int = 0
    warmup: int = 0
    repeats: int = 0
    validated: bool = False
    params: dict = field(default_factory=dict)
    env: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_queries": self.n_queries,
            "warmup": self.warmup,
            "repeats": self.repeats,
            "validated": self.validated,
            "params": self.params,
            "env": self.env,
            "indexes": {name: t.summary() for name, t in self.indexes.items()},
        }


def environment() -> dict:
    clock = time.get_clock_info("perf_counter")
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": os.cpu_count(),
        "timer_resolution_s": clock.resolution,
    }


def _time_queries(index, queries: Sequence[RoviQuery], warmup: int, repeats: int):
    times, results = [], []
    clock = time.perf_counter
    for q in queries:
        for _ in range(warmup):
            index.search(q)
        total = 0.0
        res = None
        for _ in range(repeats):
            t0 = clock()
            res = index.search(q)
            total += clock() - t0
        times.append(total / repeats)
        results.append(sorted(res))
    return times, results


def _throughput(index, queries: Sequence[RoviQuery], workers: int) -> float:
    t0 = time.perf_counter()
    with ThreadPoolExecutor(workers) as pool:
        list(pool.map(index.search, queries))
    elapsed = time.perf_counter() - t0
    return len(queries) / elapsed if elapsed > 0 else float("inf")


def run_bench(
    users: Sequence[RoviUser],
    vocab: VisualVocabulary,
    queries: Sequence[RoviQuery],
    index_names: Sequence[str],
    warmup: int = 5,
    repeats: int = 10,
    skip_validate: bool = False,
    parallel: int = 0,
    prebuilt: dict | None = None,
    **build_opts,
) -> BenchReport:
    """Time every query on each named index (``"oracle"`` allowed as a name).

    Unless ``skip_validate`` is set, each index's answers from the timed runs
    are compared with the oracle's and any difference raises
    :class:`BenchError`. ``parallel > 1`` adds a throughput figure measured
    with that many threads; per-query latencies are always single-threaded.
    """
    if repeats < 1:
        raise BenchError("repeats must be >= 1")
    if warmup < 0:
        raise BenchError("warmup must be >= 0")
    resolution = time.get_clock_info("perf_counter").resolution
    if resolution > 1e-6:
        warnings.warn(f"timer resolution {resolution:.1e}s is coarse; using 10x repeats", RuntimeWarning)
        repeats *= 10

    opts = {**BENCH_QIV_OPTS, **build_opts}
    report = BenchReport(
        n_users=len(users),
        n_queries=len(queries),
        warmup=warmup,
        repeats=repeats,
        params={k: v for k, v in opts.items()},
        env=environment(),
    )
    expected: list[list[int]] | None = None
    prebuilt = prebuilt or {}
    for name in index_names:
        t0 = time.perf_counter()
        if name in prebuilt:
            index = prebuilt[name]
        elif name == "oracle":
            index = OracleIndex(users, vocab)
        else:
            index = build_index(name, users, vocab, **opts)
        build_s = time.perf_counter() - t0
        log.info("built %s in %.2fs", name, build_s)
        times, results = _time_queries(index, queries, warmup, repeats)
        if name == "oracle":
            expected = results
        timing = IndexTiming(name, build_s, times, [len(r) for r in results])
        if parallel > 1:
            timing.throughput_qps = _throughput(index, queries, parallel)
        report.indexes[name] = timing
        if not skip_validate and name != "oracle":
            if expected is None:
                expected = [oracle_search(users, vocab, q) for q in queries]
            for i, (want, got) in enumerate(zip(expected, results)):
                miss = first_difference(want, got)
                if miss is not None:
                    raise BenchError(f"{name} disagrees with the oracle on query {i} (user {miss})")
    report.validated = not skip_validate
    return report


def sweep(
    axis: str,
    base: WorkloadSpec,
    index_names: Sequence[str],
    values: Sequence | None = None,
    warmup: int = 5,
    repeats: int = 10,
    skip_validate: bool = False,
    **build_opts,
) -> list[dict]:
    """Vary one workload parameter, holding the rest at ``base``; one row per point."""
    try:
        field_name, default_values = SWEEPS[axis]
    except KeyError:
        raise BenchError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEPS)}") from None
    rows = []
    dataset_cache: dict[tuple, tuple[list[RoviUser], VisualVocabulary]] = {}
    for value in values if values is not None else default_values:
        spec = base.with_(**{field_name: value})
        key = (spec.n_users, spec.seed, spec.vocab_size, spec.zipf_s, spec.words_per_user, spec.region_size)
        if key not in dataset_cache:
            dataset_cache.clear()
            dataset_cache[key] = generate_dataset(spec)
        users, vocab = dataset_cache[key]
        queries = generate_workload(spec, users)
        log.info("sweep %s=%s", axis, value)
        report = run_bench(
            users, vocab, queries, index_names, warmup, repeats, skip_validate, **build_opts
        )
        rows.append({"axis": axis, "field": field_name, "value": value, "spec": _spec_dict(spec), **report.to_dict()})
    return rows


def _spec_dict(spec: WorkloadSpec) -> dict:
    d = asdict(spec)
    d["words_per_user"] = list(spec.words_per_user)
    d["region_size"] = list(spec.region_size)
    return d


def save_report(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


def plot_report(report: dict | list, out: str) -> None:
    """Mean response time per index against the swept parameter."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = report["rows"] if isinstance(report, dict) and "rows" in report else report
    if isinstance(rows, dict):
        rows = [rows]
    if not rows:
        raise BenchError("report has no rows to plot")
    axis = rows[0].get("axis", "point")
    xs = [r.get("value", i) for i, r in enumerate(rows)]
    names = list(rows[0]["indexes"])
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names:
        ys = [r["indexes"][name]["mean_ms"] for r in rows]
        ax.plot(xs, ys, marker="o", label=name.upper())
    ax.set_xlabel(rows[0].get("field", axis))
    ax.set_ylabel("mean response time (ms)")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, format="svg" if str(out).endswith(".svg") else None)
    plt.close(fig)
