"""Baseline hybrid indexes: Double Index, Visual First Index, Spatial First Index.

All three share :class:`~rovi.rtree.RectTree` and verify with the same
similarity functions as the oracle, so their answers are set-identical to it.
A zero threshold cannot prune on its axis (every user meets it), so each
search falls back to the full user set on that side.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np

from .geometry import geo_sim, intersection_area, vis_sim
from .model import Mbr, RoviError, RoviQuery, RoviUser, VisualVocabulary
from .qiv import FILTER_RTOL
from .rtree import RectTree

DEFAULT_MIN_FANOUT = 8
DEFAULT_MAX_FANOUT = 32


def _rect(u: RoviUser) -> tuple[float, float, float, float]:
    r = u.region
    return (r.x_min, r.y_min, r.x_max, r.y_max)


def _index_users(users: Sequence[RoviUser], vocab: VisualVocabulary) -> dict[int, RoviUser]:
    by_id: dict[int, RoviUser] = {}
    for u in users:
        if u.user_id in by_id:
            raise RoviError(f"duplicate user id {u.user_id}")
        for w in u.words:
            if w not in vocab:
                raise RoviError(f"user {u.user_id} references unknown word {w}")
        by_id[u.user_id] = u
    return by_id


def build_rect_tree(
    users: Sequence[RoviUser],
    min_fanout: int = DEFAULT_MIN_FANOUT,
    max_fanout: int = DEFAULT_MAX_FANOUT,
    reinsert_fraction: float = 0.0,
) -> RectTree:
    tree = RectTree(min_fanout, max_fanout, reinsert_fraction)
    for u in users:
        tree.insert(_rect(u), u.user_id)
    return tree


class VisualInvertedFile:
    """word -> (user ids ascending, weights) posting lists."""

    def __init__(self, users: Sequence[RoviUser], vocab: VisualVocabulary):
        lists: dict[int, list[int]] = defaultdict(list)
        for u in sorted(users, key=lambda u: u.user_id):
            for w in u.words:
                lists[w].append(u.user_id)
        self.postings: dict[int, np.ndarray] = {w: np.array(ids, dtype=np.int64) for w, ids in lists.items()}
        self.weights: dict[int, np.ndarray] = {
            w: np.full(ids.size, vocab[w]) for w, ids in self.postings.items()
        }

    def pairs(self, word: int) -> list[tuple[int, float]]:
        ids = self.postings.get(word)
        if ids is None:
            return []
        return list(zip(ids.tolist(), self.weights[word].tolist()))

    def users_with_any(self, words) -> np.ndarray:
        lists = [self.postings[w] for w in words if w in self.postings]
        if not lists:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(lists))


# --- Double Index ------------------------------------------------------------


class DoubleIndex:
    """R-tree for regions and a separate inverted file for words; results are merged."""

    name = "di"

    def __init__(self, users: Sequence[RoviUser], vocab: VisualVocabulary, **tree_opts):
        self.users = _index_users(users, vocab)
        self.vocab = vocab
        self.tree = build_rect_tree(users, **tree_opts)
        self.inverted = VisualInvertedFile(users, vocab)
        self._all_ids = np.array(sorted(self.users), dtype=np.int64)

    def spatial_candidates(self, q: RoviQuery) -> list[int]:
        if q.gamma_g <= 0.0:
            return self._all_ids.tolist()
        region = q.region
        users = self.users
        qr = (region.x_min, region.y_min, region.x_max, region.y_max)
        out = [uid for _, uid in self.tree.search(qr) if geo_sim(region, users[uid].region) >= q.gamma_g]
        out.sort()
        return out

    def visual_candidates(self, q: RoviQuery) -> list[int]:
        seen = self._all_ids if q.gamma_v <= 0.0 else self.inverted.users_with_any(q.words)
        users, vocab, words = self.users, self.vocab, q.words
        return [uid for uid in seen.tolist() if vis_sim(words, users[uid].words, vocab) >= q.gamma_v]

    def search(self, q: RoviQuery) -> list[int]:
        spatial = self.spatial_candidates(q)
        visual = self.visual_candidates(q)
        # sorted-list intersection
        out = []
        i = j = 0
        while i < len(spatial) and j < len(visual):
            a, b = spatial[i], visual[j]
            if a == b:
                out.append(a)
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
        return out


def di_search(index: DoubleIndex, q: RoviQuery) -> list[int]:
    return index.search(q)


# --- Visual First Index --------------------------------------------------------


class VisualFirstIndex:
    """One R-tree per visual word, holding exactly the users that carry the word."""

    name = "vfi"

    def __init__(self, users: Sequence[RoviUser], vocab: VisualVocabulary, **tree_opts):
        self.users = _index_users(users, vocab)
        self.vocab = vocab
        self.trees: dict[int, RectTree] = {}
        for u in users:
            for w in u.words:
                tree = self.trees.get(w)
                if tree is None:
                    tree = self.trees[w] = RectTree(
                        tree_opts.get("min_fanout", DEFAULT_MIN_FANOUT),
                        tree_opts.get("max_fanout", DEFAULT_MAX_FANOUT),
                        tree_opts.get("reinsert_fraction", 0.0),
                    )
                tree.insert(_rect(u), u.user_id)

    def visual_candidates(self, q: RoviQuery) -> list[int]:
        """Users from the query-word trees, scored once each, passing the visual test."""
        users, vocab, words = self.users, self.vocab, q.words
        if q.gamma_v <= 0.0:
            pool = set(users)
        else:
            region = q.region
            qr = (region.x_min, region.y_min, region.x_max, region.y_max)
            pool = set()
            for w in words:
                tree = self.trees.get(w)
                if tree is None:
                    continue
                if q.gamma_g > 0.0:
                    pool.update(uid for _, uid in tree.search(qr))
                else:
                    pool.update(uid for _, uid in tree.items())
        return sorted(uid for uid in pool if vis_sim(words, users[uid].words, vocab) >= q.gamma_v)

    def search(self, q: RoviQuery) -> list[int]:
        users = self.users
        return [
            uid for uid in self.visual_candidates(q) if geo_sim(q.region, users[uid].region) >= q.gamma_g
        ]


def vfi_search(index: VisualFirstIndex, q: RoviQuery) -> list[int]:
    return index.search(q)


# --- Spatial First Index --------------------------------------------------------


class SpatialFirstIndex:
    """R-tree whose leaves each carry an inverted file over their own users.

    ``paper_faithful=True`` prunes a leaf when ``geo_sim(q, leaf MBR) < Γ_G``.
    That rule can drop a small user sitting inside a large leaf, so the
    default instead prunes only when ``Ω(q, leaf MBR) / Area(q) < Γ_G``,
    an upper bound on ``geo_sim(q, u)`` for every user in the leaf.
    """

    name = "sfi"

    def __init__(
        self,
        users: Sequence[RoviUser],
        vocab: VisualVocabulary,
        paper_faithful: bool = False,
        **tree_opts,
    ):
        self.users = _index_users(users, vocab)
        self.vocab = vocab
        self.paper_faithful = paper_faithful
        self.tree = build_rect_tree(users, **tree_opts)
        for leaf, _ in self.tree.leaves():
            inv: dict[int, list[int]] = defaultdict(list)
            for _, uid in sorted(leaf.entries, key=lambda e: e[1]):
                for w in self.users[uid].words:
                    inv[w].append(uid)
            leaf.data = dict(inv)

    def _leaf_survives(self, q: RoviQuery, leaf_rect) -> bool:
        leaf_mbr = Mbr(*leaf_rect)
        if self.paper_faithful:
            return geo_sim(q.region, leaf_mbr) >= q.gamma_g
        bound = intersection_area(q.region, leaf_mbr) / q.region.area
        return bound >= q.gamma_g * (1.0 - FILTER_RTOL)

    def search(self, q: RoviQuery) -> list[int]:
        users, vocab = self.users, self.vocab
        region = q.region
        if q.gamma_g > 0.0:
            qr = (region.x_min, region.y_min, region.x_max, region.y_max)
            leaves = [leaf for leaf, r in self.tree.leaves_overlapping(qr) if self._leaf_survives(q, r)]
        else:
            leaves = [leaf for leaf, _ in self.tree.leaves()]
        out: set[int] = set()
        for leaf in leaves:
            if q.gamma_v <= 0.0:
                pool = {uid for _, uid in leaf.entries}
            else:
                pool = set()
                for w in q.words:
                    ids = leaf.data.get(w)
                    if ids:
                        pool.update(ids)
            for uid in pool:
                u = users[uid]
                if geo_sim(region, u.region) >= q.gamma_g and vis_sim(q.words, u.words, vocab) >= q.gamma_v:
                    out.add(uid)
        return sorted(out)


def sfi_search(index: SpatialFirstIndex, q: RoviQuery) -> list[int]:
    return index.search(q)
