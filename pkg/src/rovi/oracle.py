"""Brute-force ground truth and cross-index equivalence checking."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from .geometry import geo_sim, vis_sim
from .indexes import SearchIndex, build_index
from .model import RoviError, RoviQuery, RoviUser, VisualVocabulary


def oracle_search(users: Sequence[RoviUser], vocab: VisualVocabulary, q: RoviQuery) -> list[int]:
    """Linear scan: both similarities are evaluated for every user."""
    region, words = q.region, q.words
    out = []
    for u in users:
        g = geo_sim(region, u.region)
        v = vis_sim(words, u.words, vocab)
        if g >= q.gamma_g and v >= q.gamma_v:
            out.append(u.user_id)
    out.sort()
    return out


class OracleIndex:
    """Adapter so the oracle can be benchmarked like any index."""

    name = "oracle"

    def __init__(self, users: Sequence[RoviUser], vocab: VisualVocabulary):
        self.users = list(users)
        self.vocab = vocab

    def search(self, q: RoviQuery) -> list[int]:
        return oracle_search(self.users, self.vocab, q)


class ValidationError(RoviError):
    pass


@dataclass
class QueryCheck:
    query: int
    oracle_size: int
    matches: dict[str, bool] = field(default_factory=dict)
    first_mismatch: dict[str, int | None] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.matches.values())


@dataclass
class ValidationReport:
    index_names: list[str]
    checks: list[QueryCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[QueryCheck]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "indexes": self.index_names,
            "queries": len(self.checks),
            "passed": self.passed,
            "checks": [asdict(c) | {"passed": c.passed} for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def first_difference(expected: Sequence[int], got: Sequence[int]) -> int | None:
    """Smallest id in the symmetric difference, or None when equal."""
    diff = set(expected) ^ set(got)
    return min(diff) if diff else None


def validate(
    users: Sequence[RoviUser],
    vocab: VisualVocabulary,
    queries: Sequence[RoviQuery],
    index_names: Sequence[str],
    prebuilt: Mapping[str, SearchIndex] | None = None,
    workers: int = 1,
    **build_opts,
) -> ValidationReport:
    """Run every query through each named index and the oracle; record set equality.

    ``prebuilt`` supplies ready indexes by name (used for fault injection).
    """
    indexes: dict[str, SearchIndex] = dict(prebuilt or {})
    for name in index_names:
        if name in indexes:
            continue
        try:
            indexes[name] = build_index(name, users, vocab, **build_opts)
        except Exception as exc:
            raise ValidationError(f"building index {name!r} failed: {exc}") from exc

    def check(i: int) -> QueryCheck:
        q = queries[i]
        expected = oracle_search(users, vocab, q)
        c = QueryCheck(i, len(expected))
        for name in index_names:
            got = sorted(indexes[name].search(q))
            miss = first_difference(expected, got)
            if miss is None and len(got) != len(set(got)):
                miss = next(u for u in got if got.count(u) > 1)
            c.matches[name] = miss is None
            c.first_mismatch[name] = miss
        return c

    report = ValidationReport(list(index_names))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            report.checks = list(pool.map(check, range(len(queries))))
    else:
        report.checks = [check(i) for i in range(len(queries))]
    return report
