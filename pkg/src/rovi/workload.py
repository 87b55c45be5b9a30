"""Synthetic users and query workloads.

Users get a uniformly placed centre, a width and height drawn uniformly from
``region_size`` (clipped to the unit space) and a Zipf-distributed word set.
Queries are squares of area ``query_region_fraction`` centred on a random
user's region centre, with ``n_query_words`` Zipf-sampled words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import Mbr, RoviError, RoviQuery, RoviUser, VisualVocabulary


@dataclass(frozen=True)
class WorkloadSpec:
    n_users: int = 20_000
    n_query_words: int = 100
    gamma_g: float = 0.3
    gamma_v: float = 0.3
    query_region_fraction: float = 0.02
    n_queries: int = 100
    seed: int = 0
    vocab_size: int = 10_000
    zipf_s: float = 1.0
    words_per_user: tuple[int, int] = (5, 50)
    region_size: tuple[float, float] = (0.005, 0.05)

    def __post_init__(self) -> None:
        if self.n_users < 1:
            raise RoviError("empty dataset: n_users must be >= 1")
        if self.n_queries < 0:
            raise RoviError("n_queries must be >= 0")
        if not 0.0 < self.query_region_fraction <= 1.0:
            raise RoviError("query_region_fraction must be in (0, 1]")
        for name in ("gamma_g", "gamma_v"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise RoviError(f"{name} must be in [0, 1]")
        lo, hi = self.words_per_user
        if not 1 <= lo <= hi <= self.vocab_size:
            raise RoviError("words_per_user must satisfy 1 <= lo <= hi <= vocab_size")
        if not 1 <= self.n_query_words <= self.vocab_size:
            raise RoviError("n_query_words must be in [1, vocab_size]")
        a, b = self.region_size
        if not 0.0 < a <= b <= 1.0:
            raise RoviError("region_size must satisfy 0 < lo <= hi <= 1")
        if self.zipf_s < 0.0:
            raise RoviError("zipf_s must be >= 0")

    def with_(self, **changes) -> "WorkloadSpec":
        return replace(self, **changes)


def _zipf_cdf(vocab_size: int, s: float) -> np.ndarray:
    p = 1.0 / np.arange(1, vocab_size + 1, dtype=np.float64) ** s
    cdf = np.cumsum(p)
    return cdf / cdf[-1]


def _sample_distinct(rng: np.random.Generator, cdf: np.ndarray, k: int) -> list[int]:
    """``k`` distinct word ids drawn by rank from the Zipf law (first-seen order)."""
    chosen: dict[int, None] = {}
    batch = max(2 * k, 8)
    while len(chosen) < k:
        draws = np.searchsorted(cdf, rng.random(batch), side="right")
        for w in np.minimum(draws, cdf.size - 1).tolist():
            chosen.setdefault(w, None)
            if len(chosen) == k:
                break
        batch *= 2
    return list(chosen)


def generate_dataset(spec: WorkloadSpec) -> tuple[list[RoviUser], VisualVocabulary]:
    rng = np.random.default_rng([spec.seed, 0])
    n = spec.n_users
    cx = rng.random(n)
    cy = rng.random(n)
    lo, hi = spec.region_size
    w = rng.uniform(lo, hi, n)
    h = rng.uniform(lo, hi, n)
    x0 = np.clip(cx - w / 2, 0.0, 1.0)
    x1 = np.clip(cx + w / 2, 0.0, 1.0)
    y0 = np.clip(cy - h / 2, 0.0, 1.0)
    y1 = np.clip(cy + h / 2, 0.0, 1.0)
    k_lo, k_hi = spec.words_per_user
    counts = rng.integers(k_lo, k_hi + 1, n)
    cdf = _zipf_cdf(spec.vocab_size, spec.zipf_s)
    users = []
    for i in range(n):
        words = frozenset(_sample_distinct(rng, cdf, int(counts[i])))
        users.append(RoviUser(i, Mbr(float(x0[i]), float(y0[i]), float(x1[i]), float(y1[i])), words))
    vocab = VisualVocabulary.uniform(range(spec.vocab_size))
    return users, vocab


def query_square(center: tuple[float, float], fraction: float) -> Mbr:
    """Square of area ``fraction`` around ``center``, clipped to the unit space."""
    half = math.sqrt(fraction) / 2.0
    x, y = center
    return Mbr(max(0.0, x - half), max(0.0, y - half), min(1.0, x + half), min(1.0, y + half))


def generate_workload(spec: WorkloadSpec, users: Sequence[RoviUser]) -> list[RoviQuery]:
    if not users:
        raise RoviError("cannot generate queries without users")
    rng = np.random.default_rng([spec.seed, 1])
    cdf = _zipf_cdf(spec.vocab_size, spec.zipf_s)
    queries = []
    for _ in range(spec.n_queries):
        anchor = users[int(rng.integers(len(users)))]
        region = query_square(anchor.region.center, spec.query_region_fraction)
        words = frozenset(_sample_distinct(rng, cdf, spec.n_query_words))
        queries.append(RoviQuery(region, words, spec.gamma_g, spec.gamma_v))
    return queries
