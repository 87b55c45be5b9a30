"""In-memory R-tree over rectangles (Guttman quadratic split).

Optional R*-style forced reinsertion: the first overflow on each non-root
level during one insertion evicts the ``reinsert_fraction`` of entries
farthest from the node centre and inserts them again instead of splitting.
Rectangles are plain ``(x_min, y_min, x_max, y_max)`` tuples here.
"""

from __future__ import annotations

from typing import Any, Iterator

Rect = tuple[float, float, float, float]


def _area(r: Rect) -> float:
    return (r[2] - r[0]) * (r[3] - r[1])


def _union(a: Rect, b: Rect) -> Rect:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _enlargement(r: Rect, add: Rect) -> float:
    return _area(_union(r, add)) - _area(r)


def _cover(entries: list) -> Rect:
    x0 = min(e[0][0] for e in entries)
    y0 = min(e[0][1] for e in entries)
    x1 = max(e[0][2] for e in entries)
    y1 = max(e[0][3] for e in entries)
    return (x0, y0, x1, y1)


def contains(outer: Rect, inner: Rect) -> bool:
    return outer[0] <= inner[0] and outer[1] <= inner[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


def overlaps(a: Rect, b: Rect) -> bool:
    """Positive-area overlap."""
    return min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])


class Node:
    __slots__ = ("leaf", "entries", "data")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        # each entry is [rect, child Node or item]
        self.entries: list[list] = []
        # per-leaf payload hung on by users of the tree (e.g. an inverted file)
        self.data: Any = None


class RectTree:
    def __init__(self, min_fanout: int = 8, max_fanout: int = 32, reinsert_fraction: float = 0.0):
        if not (2 <= min_fanout <= max_fanout // 2):
            raise ValueError("need 2 <= min_fanout <= max_fanout / 2")
        if not 0.0 <= reinsert_fraction < 0.5:
            raise ValueError("reinsert_fraction must be in [0, 0.5)")
        self.min_fanout = min_fanout
        self.max_fanout = max_fanout
        self.reinsert_fraction = reinsert_fraction
        self.root = Node(leaf=True)
        self.height = 1  # number of levels; leaves are level 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    # --- insertion ---------------------------------------------------------

    def insert(self, rect: Rect, item: Any) -> None:
        self._insert_entry([tuple(rect), item], level=0, reinserted=set())
        self.size += 1

    def _choose_path(self, rect: Rect, level: int) -> list[Node]:
        node = self.root
        path = [node]
        depth = self.height - 1
        while depth > level:
            best = None
            best_key = None
            for e in node.entries:
                key = (_enlargement(e[0], rect), _area(e[0]))
                if best_key is None or key < best_key:
                    best, best_key = e, key
            node = best[1]
            path.append(node)
            depth -= 1
        return path

    def _insert_entry(self, entry: list, level: int, reinserted: set[int]) -> None:
        path = self._choose_path(entry[0], level)
        path[-1].entries.append(entry)
        self._resolve(path, level, reinserted)

    def _resolve(self, path: list[Node], level: int, reinserted: set[int]) -> None:
        # walk back up: fix covering rectangles and handle overflow
        split_off: Node | None = None
        for depth in range(len(path) - 1, -1, -1):
            node = path[depth]
            node_level = self.height - 1 - depth
            if split_off is not None:
                node.entries.append([_cover(split_off.entries), split_off])
                split_off = None
            if len(node.entries) > self.max_fanout:
                if (
                    self.reinsert_fraction > 0.0
                    and depth > 0
                    and node_level not in reinserted
                ):
                    reinserted.add(node_level)
                    evicted = self._evict(node)
                    self._refresh_path(path[: depth + 1])
                    for e in evicted:
                        self._insert_entry(e, node_level, reinserted)
                    return
                split_off = self._split(node)
            if depth > 0:
                parent = path[depth - 1]
                for e in parent.entries:
                    if e[1] is node:
                        e[0] = _cover(node.entries)
                        break
        if split_off is not None:
            old = self.root
            self.root = Node(leaf=False)
            self.root.entries = [[_cover(old.entries), old], [_cover(split_off.entries), split_off]]
            self.height += 1

    def _refresh_path(self, path: list[Node]) -> None:
        for depth in range(len(path) - 1, 0, -1):
            node, parent = path[depth], path[depth - 1]
            for e in parent.entries:
                if e[1] is node:
                    e[0] = _cover(node.entries)
                    break

    def _evict(self, node: Node) -> list[list]:
        c = _cover(node.entries)
        cx, cy = (c[0] + c[2]) / 2, (c[1] + c[3]) / 2

        def dist(e):
            r = e[0]
            return ((r[0] + r[2]) / 2 - cx) ** 2 + ((r[1] + r[3]) / 2 - cy) ** 2

        node.entries.sort(key=dist)
        count = max(1, int(len(node.entries) * self.reinsert_fraction))
        evicted = node.entries[-count:]
        del node.entries[-count:]
        # close reinsert: nearest evicted first
        return evicted

    def _split(self, node: Node) -> Node:
        entries = node.entries
        # pick the pair that would waste the most area together
        worst = -1.0
        seeds = (0, 1)
        for i in range(len(entries)):
            ri = entries[i][0]
            ai = _area(ri)
            for j in range(i + 1, len(entries)):
                rj = entries[j][0]
                d = _area(_union(ri, rj)) - ai - _area(rj)
                if d > worst:
                    worst, seeds = d, (i, j)
        a, b = seeds
        group_a = [entries[a]]
        group_b = [entries[b]]
        cover_a, cover_b = entries[a][0], entries[b][0]
        rest = [e for k, e in enumerate(entries) if k != a and k != b]
        m = self.min_fanout
        while rest:
            if len(group_a) + len(rest) == m:
                group_a.extend(rest)
                break
            if len(group_b) + len(rest) == m:
                group_b.extend(rest)
                break
            # next entry: strongest preference for one group
            best_k, best_diff = 0, -1.0
            for k, e in enumerate(rest):
                diff = abs(_enlargement(cover_a, e[0]) - _enlargement(cover_b, e[0]))
                if diff > best_diff:
                    best_k, best_diff = k, diff
            e = rest.pop(best_k)
            da = _enlargement(cover_a, e[0])
            db = _enlargement(cover_b, e[0])
            key_a = (da, _area(cover_a), len(group_a))
            key_b = (db, _area(cover_b), len(group_b))
            if key_a <= key_b:
                group_a.append(e)
                cover_a = _union(cover_a, e[0])
            else:
                group_b.append(e)
                cover_b = _union(cover_b, e[0])
        node.entries = group_a
        sibling = Node(node.leaf)
        sibling.entries = group_b
        return sibling

    # --- queries -----------------------------------------------------------

    def search(self, rect: Rect) -> Iterator[tuple[Rect, Any]]:
        """Items whose rectangle overlaps ``rect`` with positive area."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            for r, child in node.entries:
                if overlaps(r, rect):
                    if node.leaf:
                        yield r, child
                    else:
                        stack.append(child)

    def items(self) -> Iterator[tuple[Rect, Any]]:
        for leaf, _ in self.leaves():
            yield from ((r, item) for r, item in leaf.entries)

    def leaves(self) -> Iterator[tuple[Node, Rect | None]]:
        """Every leaf with its covering rectangle (None for an empty tree)."""
        stack: list[tuple[Node, Rect | None]] = [
            (self.root, _cover(self.root.entries) if self.root.entries else None)
        ]
        while stack:
            node, r = stack.pop()
            if node.leaf:
                yield node, r
            else:
                stack.extend((child, cr) for cr, child in node.entries)

    def leaves_overlapping(self, rect: Rect) -> Iterator[tuple[Node, Rect]]:
        if not self.root.entries:
            return
        stack = [(self.root, _cover(self.root.entries))]
        while stack:
            node, r = stack.pop()
            if node.leaf:
                yield node, r
                continue
            for cr, child in node.entries:
                if overlaps(cr, rect):
                    stack.append((child, cr))

    def check(self) -> None:
        """Assert structural invariants; raises AssertionError on violation."""
        count = 0

        def walk(node: Node, bound: Rect | None, depth: int) -> None:
            nonlocal count
            if node is not self.root:
                assert len(node.entries) >= self.min_fanout, "underfull node"
            assert len(node.entries) <= self.max_fanout, "overfull node"
            if node.entries and bound is not None:
                assert _cover(node.entries) == bound, "parent rectangle not tight"
            for r, child in node.entries:
                if bound is not None:
                    assert contains(bound, r), "child escapes parent"
                if node.leaf:
                    assert depth == self.height - 1, "unbalanced leaves"
                    count += 1
                else:
                    walk(child, r, depth + 1)

        walk(self.root, None, 0)
        assert count == self.size, "entry count mismatch"
