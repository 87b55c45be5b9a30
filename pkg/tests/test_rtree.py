import random

import pytest

from rovi.rtree import RectTree, overlaps


def random_rects(n, seed):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        w, h = rng.uniform(0.001, 0.2), rng.uniform(0.001, 0.2)
        x, y = rng.uniform(0, 1 - w), rng.uniform(0, 1 - h)
        out.append((x, y, x + w, y + h))
    return out


@pytest.mark.parametrize("reinsert", [0.0, 0.3])
@pytest.mark.parametrize("fanout", [(2, 4), (8, 32)])
def test_invariants_hold_after_inserts(reinsert, fanout):
    tree = RectTree(*fanout, reinsert_fraction=reinsert)
    rects = random_rects(1500, seed=1)
    for i, r in enumerate(rects):
        tree.insert(r, i)
        if i % 250 == 0:
            tree.check()
    tree.check()
    assert len(tree) == len(rects)
    assert sorted(item for _, item in tree.items()) == list(range(len(rects)))


@pytest.mark.parametrize("reinsert", [0.0, 0.3])
def test_search_matches_linear_scan(reinsert):
    rects = random_rects(800, seed=2)
    tree = RectTree(4, 10, reinsert_fraction=reinsert)
    for i, r in enumerate(rects):
        tree.insert(r, i)
    for q in random_rects(200, seed=4):
        got = sorted(item for _, item in tree.search(q))
        assert got == [i for i, r in enumerate(rects) if overlaps(r, q)]
    for leaf, cover in tree.leaves_overlapping((0.0, 0.0, 1.0, 1.0)):
        assert leaf.leaf and cover is not None


def test_touching_edges_do_not_overlap():
    tree = RectTree(2, 4)
    tree.insert((0.0, 0.0, 0.5, 0.5), "a")
    assert list(tree.search((0.5, 0.0, 1.0, 1.0))) == []
    assert [i for _, i in tree.search((0.4, 0.4, 1.0, 1.0))] == ["a"]


def test_empty_tree():
    tree = RectTree()
    tree.check()
    assert list(tree.search((0, 0, 1, 1))) == []
    assert list(tree.leaves_overlapping((0, 0, 1, 1))) == []


def test_bad_fanout():
    with pytest.raises(ValueError):
        RectTree(5, 8)
