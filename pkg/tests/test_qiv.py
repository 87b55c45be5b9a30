from __future__ import annotations

import random
import threading

import numpy as np
import pytest

from rovi.geometry import area, intersection_area, overlaps
from rovi.model import Mbr, RoviError, RoviQuery, RoviUser, UNIT_SPACE, VisualVocabulary
from rovi.morton import ROOT, MortonCode, encode
from rovi.oracle import oracle_search
from rovi.qiv import (
    QivIndex,
    VarintStore,
    build_qiv,
    get_intersect_nodes,
    get_word_nodes,
    node_visual_filter,
    parse_snapshot,
    rovi_search,
    snapshot_bytes,
)


def random_users(n: int, seed: int, n_words: int = 30, max_side: float = 0.3) -> tuple[list[RoviUser], VisualVocabulary]:
    rng = random.Random(seed)
    users = []
    for i in range(n):
        w, h = rng.uniform(0.01, max_side), rng.uniform(0.01, max_side)
        x, y = rng.uniform(0, 1 - w), rng.uniform(0, 1 - h)
        words = frozenset(rng.sample(range(n_words), rng.randint(1, 8)))
        users.append(RoviUser(i, Mbr(x, y, x + w, y + h), words))
    return users, VisualVocabulary.uniform(range(n_words))


def random_query(rng: random.Random, n_words: int = 30) -> RoviQuery:
    w, h = rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4)
    x, y = rng.uniform(0, 1 - w), rng.uniform(0, 1 - h)
    words = frozenset(rng.sample(range(n_words), rng.randint(1, 8)))
    return RoviQuery(Mbr(x, y, x + w, y + h), words, rng.choice([0.0, 0.05, 0.1, 0.3]), rng.choice([0.0, 0.1, 0.2, 0.4]))


@pytest.fixture(scope="module")
def random_index():
    users, vocab = random_users(100, seed=11)
    return users, vocab, build_qiv(users, vocab, max_level=6, leaf_capacity=8)


# --- construction ----------------------------------------------------------------


def test_single_user_whole_space_is_root_leaf():
    vocab = VisualVocabulary.uniform([1, 2])
    u = RoviUser(5, UNIT_SPACE, frozenset({1, 2}))
    index = build_qiv([u], vocab, leaf_capacity=4)
    (leaf,) = index.leaves()
    assert leaf.code == ROOT and leaf.is_leaf
    assert leaf.residents.tolist() == [5]
    assert get_word_nodes(index, 1) == [ROOT]
    assert get_word_nodes(index, 2) == [ROOT]


def test_example_region_lists(example):
    users, vocab, _ = example
    index = build_qiv(users, vocab, max_level=2, leaf_capacity=1)
    n = lambda label: MortonCode(2, int(label, 2))  # noqa: E731
    assert index.region_list(1) == [n("1000"), n("1010")]
    assert index.region_list(2) == [n("1000"), n("1001"), n("1010"), n("1011")]
    assert index.region_list(7)[0] == n("0100")
    assert index.region_list(3) == index.region_list(4) == [n("1100")]


def test_membership_equals_positive_overlap(random_index):
    users, _, index = random_index
    for leaf in index.leaves():
        expected = sorted(u.user_id for u in users if intersection_area(u.region, leaf.region) > 0.0)
        assert leaf.residents.tolist() == expected


def test_split_rule(random_index):
    users, _, index = random_index
    for node in index.iter_nodes():
        count = sum(1 for u in users if intersection_area(u.region, node.region) > 0.0)
        should_split = count > index.leaf_capacity and node.code.level < index.max_level
        assert node.is_leaf != should_split
        if not node.is_leaf:
            assert [c.code for c in node.children] == [node.code.child(q) for q in range(4)]


def test_leaves_tile_unit_space(random_index):
    _, _, index = random_index
    leaves = index.leaves()
    assert sum(area(n.region) for n in leaves) == pytest.approx(1.0, abs=1e-12)
    for i, a in enumerate(leaves):
        for b in leaves[i + 1 :]:
            assert intersection_area(a.region, b.region) == 0.0


def test_duplicate_ids_rejected():
    vocab = VisualVocabulary.uniform([1])
    u = RoviUser(1, UNIT_SPACE, frozenset({1}))
    with pytest.raises(RoviError, match="duplicate"):
        build_qiv([u, u], vocab)


def test_build_parameter_checks():
    vocab = VisualVocabulary.uniform([1])
    u = RoviUser(1, UNIT_SPACE, frozenset({1}))
    with pytest.raises(RoviError):
        build_qiv([], vocab)
    with pytest.raises(RoviError):
        build_qiv([u], vocab, max_level=0)
    with pytest.raises(RoviError):
        build_qiv([u], vocab, leaf_capacity=0)


# --- node lookup ------------------------------------------------------------------


def test_intersect_nodes_unit_space_is_all_leaves(random_index):
    _, _, index = random_index
    assert get_intersect_nodes(index, UNIT_SPACE) == {n.code for n in index.leaves()}


def test_intersect_nodes_inside_one_leaf(random_index):
    _, _, index = random_index
    leaf = index.leaves()[len(index.leaves()) // 2]
    r = leaf.region
    dx, dy = (r.x_max - r.x_min) / 4, (r.y_max - r.y_min) / 4
    inner = Mbr(r.x_min + dx, r.y_min + dy, r.x_max - dx, r.y_max - dy)
    assert get_intersect_nodes(index, inner) == {leaf.code}


def test_intersect_nodes_match_leaf_scan(random_index):
    _, _, index = random_index
    rng = random.Random(3)
    for _ in range(200):
        q = random_query(rng)
        expected = {n.code for n in index.leaves() if intersection_area(n.region, q.region) > 0.0}
        assert get_intersect_nodes(index, q.region) == expected


def test_word_nodes(example, random_index):
    users, vocab, _ = example
    index = build_qiv(users, vocab, max_level=2, leaf_capacity=1)
    v1 = get_word_nodes(index, 1)
    assert MortonCode(2, 0b0100) in v1 and MortonCode(2, 0b1100) in v1
    assert get_word_nodes(index, 42) == []

    users, vocab, index = random_index
    for word in range(30):
        expected = [
            n.code
            for n in index.leaves()
            if any(word in u.words for u in users if u.user_id in set(n.residents.tolist()))
        ]
        assert get_word_nodes(index, word) == expected
        keys = [c.z_key(index.max_level) for c in get_word_nodes(index, word)]
        assert keys == sorted(keys)


def test_user_lists_sorted_and_exact(random_index):
    users, _, index = random_index
    by_id = {u.user_id: u for u in users}
    for word in range(30):
        for code in get_word_nodes(index, word):
            ids = index.user_list(word, code).tolist()
            assert ids == sorted(ids)
            leaf = index.leaf(code)
            assert ids == [uid for uid in leaf.residents.tolist() if word in by_id[uid].words]


# --- visual filter ------------------------------------------------------------------


def _two_leaf_index():
    vocab = VisualVocabulary.uniform([1, 2, 3])
    users = [
        RoviUser(1, Mbr(0.1, 0.1, 0.4, 0.4), frozenset({2})),
        RoviUser(2, Mbr(0.6, 0.6, 0.9, 0.9), frozenset({1, 2, 3})),
    ]
    return users, vocab, build_qiv(users, vocab, max_level=1, leaf_capacity=1)


def test_filter_passes_with_all_query_words():
    _, _, index = _two_leaf_index()
    q = RoviQuery(UNIT_SPACE, frozenset({1, 2, 3}), 0.0, 1.0)
    assert node_visual_filter(index, q, MortonCode(1, 3), index.candidate_threshold(q))


def test_filter_fails_without_query_words():
    _, _, index = _two_leaf_index()
    q = RoviQuery(UNIT_SPACE, frozenset({1, 3}), 0.0, 0.01)
    assert not node_visual_filter(index, q, MortonCode(1, 0), index.candidate_threshold(q))


def test_filter_threshold_arithmetic():
    users, vocab, index = _two_leaf_index()
    q = RoviQuery(UNIT_SPACE, frozenset({1, 2, 3}), 0.0, 0.4)
    c_v = index.candidate_threshold(q)
    assert c_v == pytest.approx(1.2)
    # the leaf holding user 1 is listed only by word 2: 1.0 < 1.2
    assert not node_visual_filter(index, q, MortonCode(1, 0), c_v)
    assert index.search(q) == index.search(q, use_filter=False) == oracle_search(users, vocab, q)


def test_filter_never_changes_results(random_index):
    users, vocab, index = random_index
    rng = random.Random(8)
    for _ in range(200):
        q = random_query(rng)
        assert index.search(q) == index.search(q, use_filter=False)


# --- search -----------------------------------------------------------------------------


def test_vacuous_thresholds_return_everyone(random_index):
    users, _, index = random_index
    q = RoviQuery(UNIT_SPACE, frozenset({0}), 0.0, 0.0)
    assert rovi_search(index, q) == sorted(u.user_id for u in users)


def test_example_answer(example):
    users, vocab, q = example
    index = build_qiv(users, vocab, max_level=2, leaf_capacity=1)
    assert rovi_search(index, q) == [3]


def test_matches_oracle_random(random_index):
    users, vocab, index = random_index
    rng = random.Random(9)
    nonempty = 0
    for _ in range(300):
        q = random_query(rng)
        got = index.search(q)
        assert got == oracle_search(users, vocab, q)
        assert len(got) == len(set(got))
        nonempty += bool(got)
    assert nonempty > 30


def test_unknown_query_word_counts_toward_union():
    vocab = VisualVocabulary.uniform([1])
    users = [RoviUser(1, UNIT_SPACE, frozenset({1}))]
    index = build_qiv(users, vocab)
    assert index.search(RoviQuery(UNIT_SPACE, frozenset({1, 99}), 0.5, 0.5)) == [1]
    assert index.search(RoviQuery(UNIT_SPACE, frozenset({1, 99}), 0.5, 0.6)) == []
    assert index.search(RoviQuery(UNIT_SPACE, frozenset({99}), 0.0, 0.1)) == []


def test_empty_candidates_is_empty_result(random_index):
    _, _, index = random_index
    assert index.search(RoviQuery(Mbr(0.1, 0.1, 0.2, 0.2), frozenset({999}), 0.3, 0.3)) == []


def test_monotone_in_thresholds(random_index):
    users, vocab, index = random_index
    rng = random.Random(12)
    for _ in range(100):
        q = random_query(rng)
        base = set(index.search(q))
        up_g = set(index.search(q.with_thresholds(min(1.0, q.gamma_g + 0.1), q.gamma_v)))
        up_v = set(index.search(q.with_thresholds(q.gamma_g, min(1.0, q.gamma_v + 0.1))))
        assert up_g <= base and up_v <= base


# --- snapshot -------------------------------------------------------------------------


def test_snapshot_round_trip(tmp_path, random_index):
    users, vocab, index = random_index
    path = tmp_path / "a.qiv"
    index.save(path)
    loaded = QivIndex.load(path)
    assert isinstance(loaded.store, VarintStore)
    assert path.read_bytes()[:4] == b"QIV1"
    assert [n.code for n in loaded.iter_nodes()] == [n.code for n in index.iter_nodes()]
    for a, b in zip(loaded.leaves(), index.leaves()):
        assert a.residents.tolist() == b.residents.tolist()
    assert dict(loaded.vocab) == dict(vocab)
    assert loaded.users == index.users
    for word in range(30):
        assert loaded.get_word_nodes(word) == index.get_word_nodes(word)
        for code in index.get_word_nodes(word):
            assert loaded.user_list(word, code).tolist() == index.user_list(word, code).tolist()
    rng = random.Random(4)
    for _ in range(100):
        q = random_query(rng)
        assert loaded.search(q) == index.search(q)


def test_snapshot_byte_stable(tmp_path, random_index):
    _, _, index = random_index
    index.save(tmp_path / "a.qiv")
    index.save(tmp_path / "b.qiv")
    assert (tmp_path / "a.qiv").read_bytes() == (tmp_path / "b.qiv").read_bytes()
    again = QivIndex.load(tmp_path / "a.qiv", use_mmap=True)
    assert snapshot_bytes(again) == (tmp_path / "a.qiv").read_bytes()


def test_snapshot_rejects_garbage():
    with pytest.raises(RoviError):
        parse_snapshot(b"NOPE" + bytes(100))
    with pytest.raises(RoviError):
        parse_snapshot(b"QIV1")


def test_concurrent_readers_on_mmap(tmp_path, random_index):
    users, vocab, index = random_index
    index.save(tmp_path / "c.qiv")
    loaded = QivIndex.load(tmp_path / "c.qiv", use_mmap=True)
    rng = random.Random(21)
    queries = [random_query(rng) for _ in range(60)]
    expected = [index.search(q) for q in queries]
    errors: list[str] = []

    def worker(offset: int) -> None:
        for i in range(len(queries)):
            j = (i + offset) % len(queries)
            if loaded.search(queries[j]) != expected[j]:
                errors.append(f"query {j}")

    threads = [threading.Thread(target=worker, args=(k * 7,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors


def test_varint_store_gather_matches_reads(random_index, tmp_path):
    _, _, index = random_index
    index.save(tmp_path / "d.qiv")
    loaded = QivIndex.load(tmp_path / "d.qiv")
    entry = loaded.words[3]
    gathered = loaded.store.gather(entry.offsets, entry.lengths)
    pieces = [loaded.store.read(o, n) for o, n in zip(entry.offsets.tolist(), entry.lengths.tolist())]
    assert gathered.tolist() == np.concatenate(pieces).tolist()


def test_overlap_helper_agrees_with_area():
    a = Mbr(0.0, 0.0, 0.5, 0.5)
    assert not overlaps(a, Mbr(0.5, 0.0, 1.0, 0.5))  # shared edge only
    assert overlaps(a, Mbr(0.49, 0.0, 1.0, 0.5))
    assert encode(1, 1, 1) == MortonCode(1, 3)
