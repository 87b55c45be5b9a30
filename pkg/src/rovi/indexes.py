"""Name -> index builder registry shared by validation, benchmarking and the CLI."""

from __future__ import annotations

from typing import Callable, Protocol, Sequence

from .baselines import DoubleIndex, SpatialFirstIndex, VisualFirstIndex
from .model import RoviError, RoviQuery, RoviUser, VisualVocabulary
from .qiv import DEFAULT_LEAF_CAPACITY, DEFAULT_MAX_LEVEL, QivIndex


class SearchIndex(Protocol):
    def search(self, q: RoviQuery) -> list[int]: ...


def _qiv(users, vocab, max_level=DEFAULT_MAX_LEVEL, leaf_capacity=DEFAULT_LEAF_CAPACITY, **_):
    return QivIndex.build(users, vocab, max_level=max_level, leaf_capacity=leaf_capacity)


def _di(users, vocab, **opts):
    return DoubleIndex(users, vocab, **_tree_opts(opts))


def _vfi(users, vocab, **opts):
    return VisualFirstIndex(users, vocab, **_tree_opts(opts))


def _sfi(users, vocab, paper_faithful_sfi=False, **opts):
    return SpatialFirstIndex(users, vocab, paper_faithful=paper_faithful_sfi, **_tree_opts(opts))


def _tree_opts(opts: dict) -> dict:
    keys = ("min_fanout", "max_fanout", "reinsert_fraction")
    return {k: opts[k] for k in keys if k in opts}


BUILDERS: dict[str, Callable[..., SearchIndex]] = {
    "qiv": _qiv,
    "di": _di,
    "vfi": _vfi,
    "sfi": _sfi,
}


def build_index(name: str, users: Sequence[RoviUser], vocab: VisualVocabulary, **opts) -> SearchIndex:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise RoviError(f"unknown index {name!r}; choose from {', '.join(BUILDERS)}") from None
    return builder(users, vocab, **opts)


def parse_names(spec: str | Sequence[str]) -> list[str]:
    names = [n.strip() for n in spec.split(",")] if isinstance(spec, str) else list(spec)
    names = [n for n in names if n]
    for n in names:
        if n not in BUILDERS and n != "oracle":
            raise RoviError(f"unknown index {n!r}")
    return names
