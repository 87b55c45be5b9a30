"""Quadtree-based inverted visual index (QIV) and its region-of-visual-interests search.

Layout, in three layers:

* word -> sorted list of leaf codes that hold at least one user with the word
  (the "node list", ordered along the Z curve);
* each (word, leaf) entry -> offset/length of a user-id list;
* the user-id lists themselves, kept in one flat payload. In memory it is an
  int64 array; a loaded snapshot keeps the delta/varint encoded bytes and
  decodes slices on demand.

The virtual quadtree is held in memory. A node splits into its four Z-ordered
quadrants while it holds more than ``leaf_capacity`` users and sits above
``max_level``. A user lives in every leaf its region overlaps with positive area.
"""

from __future__ import annotations

import mmap
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import codec
from .geometry import geo_sim, overlaps, vis_sim, word_weight_sum
from .model import Mbr, RoviError, RoviQuery, RoviUser, UNIT_SPACE, VisualVocabulary
from .morton import ROOT, MortonCode, cell_region

DEFAULT_MAX_LEVEL = 8
DEFAULT_LEAF_CAPACITY = 64

# Relative slack on the node filter comparison. The filter only prunes, so
# loosening it by a few ulps costs nothing while keeping it safe against the
# rounding of Γ_V·Σw versus the exactly-rounded similarity check.
FILTER_RTOL = 1e-12


@dataclass
class QuadNode:
    code: MortonCode
    region: Mbr
    children: list["QuadNode"] | None = None
    residents: np.ndarray | None = None  # sorted user ids, leaves only

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def kind(self) -> str:
        return "leaf" if self.children is None else "internal"


@dataclass
class WordEntry:
    """Node list of one word plus pointers into the posting payload."""

    leaf_keys: np.ndarray  # int64 Z keys, ascending
    offsets: np.ndarray  # int64, store units
    lengths: np.ndarray  # int64, store units


def _ranges(offsets: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(o, o+l)`` for every (o, l) pair."""
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    shift = np.repeat(offsets - (ends - lengths), lengths)
    return np.arange(total, dtype=np.int64) + shift


class ArrayStore:
    """User-id lists as one int64 array; offsets/lengths count ids."""

    def __init__(self, payload: np.ndarray):
        self.payload = payload

    def read(self, offset: int, length: int) -> np.ndarray:
        return self.payload[offset : offset + length]

    def gather(self, offsets: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        return self.payload[_ranges(offsets, lengths)]

    def gather_lists(self, offsets: np.ndarray, lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated lists plus the id count of each."""
        return self.gather(offsets, lengths), np.asarray(lengths, dtype=np.int64)


class VarintStore:
    """User-id lists as delta/varint bytes; offsets/lengths count bytes.

    ``buf`` may be an ``mmap``; slicing a read-only map is safe for
    concurrent readers.
    """

    def __init__(self, buf: bytes | mmap.mmap, base: int = 0):
        self._bytes = np.frombuffer(buf, dtype=np.uint8)
        self._base = base

    def read(self, offset: int, length: int) -> np.ndarray:
        start = self._base + offset
        return codec.decode_ids(self._bytes[start : start + length])

    def gather(self, offsets: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        return self.gather_lists(offsets, lengths)[0]

    def gather_lists(self, offsets: np.ndarray, lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if lengths.size == 0:
            return np.empty(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        raw = self._bytes[_ranges(offsets + self._base, lengths)]
        deltas = codec.decode_array(raw)
        # restart the running sum at the first value of every list
        per_list = np.add.reduceat((raw < 0x80).astype(np.int64), np.cumsum(lengths) - lengths)
        firsts = np.cumsum(per_list) - per_list
        total = np.cumsum(deltas)
        before = np.where(firsts > 0, total[firsts - 1], 0)
        return total - np.repeat(before, per_list), per_list


class QivIndex:
    def __init__(
        self,
        users: Iterable[RoviUser],
        vocab: VisualVocabulary,
        root: QuadNode,
        words: dict[int, WordEntry],
        store: ArrayStore | VarintStore,
        max_level: int,
        leaf_capacity: int,
    ):
        self.users: dict[int, RoviUser] = {u.user_id: u for u in users}
        self.vocab = vocab
        self.root = root
        self.words = words
        self.store = store
        self.max_level = max_level
        self.leaf_capacity = leaf_capacity
        self._leaves = sorted(self._iter_leaves(root), key=lambda n: n.code.z_key(max_level))
        self._leaf_by_key = {n.code.z_key(max_level): n for n in self._leaves}
        self._all_leaf_keys = np.array(sorted(self._leaf_by_key), dtype=np.int64)

    # --- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        users: Sequence[RoviUser],
        vocab: VisualVocabulary,
        max_level: int = DEFAULT_MAX_LEVEL,
        leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    ) -> "QivIndex":
        if not users:
            raise RoviError("cannot build an index over zero users")
        if max_level < 1 or leaf_capacity < 1:
            raise RoviError("max_level and leaf_capacity must be >= 1")
        if max_level > 30:
            raise RoviError("max_level above 30 does not fit 64-bit codes")
        ids = np.array([u.user_id for u in users], dtype=np.int64)
        uniq, counts = np.unique(ids, return_counts=True)
        if uniq.size != ids.size:
            raise RoviError(f"duplicate user id {int(uniq[counts > 1][0])}")
        if ids.min() < 0:
            raise RoviError("user ids must be non-negative")
        for u in users:
            for w in u.words:
                if w not in vocab:
                    raise RoviError(f"user {u.user_id} references unknown word {w}")

        rect = np.array([u.region.as_list() for u in users], dtype=np.float64)
        x0, y0, x1, y1 = rect.T

        leaf_rows: list[tuple[int, np.ndarray]] = []

        def grow(code: MortonCode, rows: np.ndarray) -> QuadNode:
            region = cell_region(code)
            if rows.size > leaf_capacity and code.level < max_level:
                children = []
                for quadrant in range(4):
                    child = code.child(quadrant)
                    c = cell_region(child)
                    keep = (
                        (np.minimum(x1[rows], c.x_max) > np.maximum(x0[rows], c.x_min))
                        & (np.minimum(y1[rows], c.y_max) > np.maximum(y0[rows], c.y_min))
                    )
                    children.append(grow(child, rows[keep]))
                return QuadNode(code, region, children=children)
            order = np.argsort(ids[rows], kind="stable")
            rows = rows[order]
            leaf_rows.append((code.z_key(max_level), rows))
            return QuadNode(code, region, residents=ids[rows])

        root = grow(ROOT, np.arange(len(users)))

        # user -> sorted word ids, flattened
        nwords = np.array([len(u.words) for u in users], dtype=np.int64)
        flat_words = np.fromiter(
            (w for u in users for w in sorted(u.words)), dtype=np.int64, count=int(nwords.sum())
        )
        word_ptr = np.cumsum(nwords) - nwords

        if leaf_rows:
            rows = np.concatenate([r for _, r in leaf_rows])
            keys = np.concatenate([np.full(r.size, k, dtype=np.int64) for k, r in leaf_rows])
        else:
            rows = keys = np.empty(0, dtype=np.int64)
        counts = nwords[rows]
        post_word = flat_words[_ranges(word_ptr[rows], counts)]
        post_leaf = np.repeat(keys, counts)
        post_user = np.repeat(ids[rows], counts)
        order = np.lexsort((post_user, post_leaf, post_word))
        post_word, post_leaf, post_user = post_word[order], post_leaf[order], post_user[order]

        words = _directory_from_sorted(post_word, post_leaf)
        return cls(users, vocab, root, words, ArrayStore(post_user), max_level, leaf_capacity)

    @staticmethod
    def _iter_leaves(node: QuadNode):
        stack = [node]
        while stack:
            n = stack.pop()
            if n.children is None:
                yield n
            else:
                stack.extend(reversed(n.children))

    # --- structure queries ------------------------------------------------

    def leaves(self) -> list[QuadNode]:
        """Leaves in Z order."""
        return list(self._leaves)

    def iter_nodes(self):
        """Preorder walk of every materialised node."""
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            if n.children is not None:
                stack.extend(reversed(n.children))

    def leaf(self, code: MortonCode) -> QuadNode:
        node = self._leaf_by_key.get(code.z_key(self.max_level))
        if node is None or node.code != code:
            raise KeyError(code)
        return node

    def region_list(self, user_id: int) -> list[MortonCode]:
        """Leaves that hold ``user_id``, in Z order."""
        return [n.code for n in self._leaves if np.any(n.residents == user_id)]

    def _intersect_keys(self, region: Mbr) -> np.ndarray:
        keys = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            if not overlaps(n.region, region):
                continue
            if n.children is None:
                keys.append(n.code.z_key(self.max_level))
            else:
                stack.extend(n.children)
        keys.sort()
        return np.array(keys, dtype=np.int64)

    def get_intersect_nodes(self, region: Mbr) -> set[MortonCode]:
        """Leaves whose cell shares positive area with ``region``."""
        return {self._leaf_by_key[k].code for k in self._intersect_keys(region).tolist()}

    def get_word_nodes(self, word: int) -> list[MortonCode]:
        entry = self.words.get(word)
        if entry is None:
            return []
        return [self._leaf_by_key[k].code for k in entry.leaf_keys.tolist()]

    def user_list(self, word: int, code: MortonCode) -> np.ndarray:
        """Ids of users in leaf ``code`` holding ``word`` (empty if none)."""
        entry = self.words.get(word)
        if entry is None:
            return np.empty(0, dtype=np.int64)
        key = code.z_key(self.max_level)
        i = int(np.searchsorted(entry.leaf_keys, key))
        if i == entry.leaf_keys.size or entry.leaf_keys[i] != key or self._leaf_by_key[key].code != code:
            return np.empty(0, dtype=np.int64)
        return self.store.read(int(entry.offsets[i]), int(entry.lengths[i]))

    # --- search -----------------------------------------------------------

    def candidate_threshold(self, q: RoviQuery) -> float:
        return q.gamma_v * word_weight_sum(q.words, self.vocab)

    def node_visual_filter(self, q: RoviQuery, code: MortonCode, c_v: float) -> bool:
        """Does the leaf carry enough query-word weight to hold a visual match?"""
        key = code.z_key(self.max_level)
        total = 0.0
        for v in q.words:
            entry = self.words.get(v)
            if entry is None:
                continue
            i = int(np.searchsorted(entry.leaf_keys, key))
            if i < entry.leaf_keys.size and entry.leaf_keys[i] == key:
                total += self.vocab.weight(v)
        return total >= c_v * (1.0 - FILTER_RTOL)

    def candidates(self, q: RoviQuery, use_filter: bool = True) -> np.ndarray:
        """Sorted, de-duplicated candidate ids before exact verification."""
        # zero thresholds are vacuous: the matching axis cannot prune
        leaf_keys = self._intersect_keys(q.region) if q.gamma_g > 0.0 else self._all_leaf_keys
        if leaf_keys.size == 0:
            return np.empty(0, dtype=np.int64)
        if q.gamma_v <= 0.0:
            residents = [self._leaf_by_key[k].residents for k in leaf_keys.tolist()]
            return np.unique(np.concatenate(residents))

        sel_keys, sel_off, sel_len, sel_w = [], [], [], []
        for v in q.words:
            entry = self.words.get(v)
            if entry is None:
                continue
            pos = np.searchsorted(leaf_keys, entry.leaf_keys)
            pos[pos == leaf_keys.size] = 0
            hit = leaf_keys[pos] == entry.leaf_keys
            if not hit.any():
                continue
            sel_keys.append(entry.leaf_keys[hit])
            sel_off.append(entry.offsets[hit])
            sel_len.append(entry.lengths[hit])
            sel_w.append(np.full(int(hit.sum()), self.vocab.weight(v)))
        if not sel_keys:
            return np.empty(0, dtype=np.int64)
        keys = np.concatenate(sel_keys)
        offsets = np.concatenate(sel_off)
        lengths = np.concatenate(sel_len)
        if use_filter:
            c_v = self.candidate_threshold(q)
            uniq, inverse = np.unique(keys, return_inverse=True)
            weight = np.bincount(inverse, weights=np.concatenate(sel_w), minlength=uniq.size)
            passing = weight >= c_v * (1.0 - FILTER_RTOL)
            keep = passing[inverse]
            offsets, lengths = offsets[keep], lengths[keep]
        return np.unique(self.store.gather(offsets, lengths))

    def search(self, q: RoviQuery, use_filter: bool = True) -> list[int]:
        users, vocab = self.users, self.vocab
        region, words = q.region, q.words
        gamma_g, gamma_v = q.gamma_g, q.gamma_v
        out = []
        for uid in self.candidates(q, use_filter).tolist():
            u = users[uid]
            if geo_sim(region, u.region) >= gamma_g and vis_sim(words, u.words, vocab) >= gamma_v:
                out.append(uid)
        return out

    # --- fault injection --------------------------------------------------

    def _drop_postings(self, user_id: int) -> None:
        """Test hook: remove ``user_id`` from every user-id list."""
        new_words: dict[int, WordEntry] = {}
        chunks: list[np.ndarray] = []
        cursor = 0
        for word, entry in self.words.items():
            keys, offs, lens = [], [], []
            for k, o, n in zip(entry.leaf_keys.tolist(), entry.offsets.tolist(), entry.lengths.tolist()):
                ids = self.store.read(o, n)
                ids = ids[ids != user_id]
                if ids.size == 0:
                    continue
                keys.append(k)
                offs.append(cursor)
                lens.append(ids.size)
                chunks.append(ids)
                cursor += ids.size
            if keys:
                new_words[word] = WordEntry(
                    np.array(keys, dtype=np.int64), np.array(offs, dtype=np.int64), np.array(lens, dtype=np.int64)
                )
        self.words = new_words
        payload = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        self.store = ArrayStore(payload)

    # --- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(snapshot_bytes(self))

    @classmethod
    def load(cls, path: str | Path, use_mmap: bool = False) -> "QivIndex":
        if use_mmap:
            with open(path, "rb") as fh:
                buf: bytes | mmap.mmap = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
        else:
            buf = Path(path).read_bytes()
        return parse_snapshot(buf)


def _directory_from_sorted(post_word: np.ndarray, post_leaf: np.ndarray) -> dict[int, WordEntry]:
    """Group (word, leaf)-sorted postings into per-word node lists."""
    if post_word.size == 0:
        return {}
    boundary = np.ones(post_word.size, dtype=bool)
    boundary[1:] = (post_word[1:] != post_word[:-1]) | (post_leaf[1:] != post_leaf[:-1])
    starts = np.flatnonzero(boundary)
    lengths = np.diff(np.append(starts, post_word.size))
    g_word = post_word[starts]
    g_leaf = post_leaf[starts]
    word_start = np.flatnonzero(np.r_[True, g_word[1:] != g_word[:-1]])
    word_end = np.append(word_start[1:], g_word.size)
    words = {}
    for s, e in zip(word_start.tolist(), word_end.tolist()):
        words[int(g_word[s])] = WordEntry(g_leaf[s:e].copy(), starts[s:e].astype(np.int64), lengths[s:e].astype(np.int64))
    return words


# --- snapshot format --------------------------------------------------------
#
# All integers little-endian. Sections in order:
#
#   header    <4s I I d Q Q Q Q Q>  magic b"QIV1", max_level, leaf_capacity,
#             default word weight, #vocab words, #users, #nodes,
#             #directory entries, payload byte size
#   vocab     #vocab x <q d>        word id, weight (ascending id)
#   users     #users x <q d d d d I>  id, x_min, y_min, x_max, y_max, #words
#             then sum(#words) x <q> word ids (users ascending by id,
#             each user's words ascending)
#   quadtree  #nodes x <B B Q>      level, kind (0 internal, 1 leaf), code bits,
#             preorder with children in Z order
#   residents for each leaf in preorder: <Q> byte length, then delta/varint ids
#   directory #words-with-postings as <q I> (word id, #entries) followed by
#             #entries x <B Q Q Q> (leaf level, leaf code bits, payload byte
#             offset, byte length); words ascending, entries in Z order
#   payload   concatenated delta/varint user-id lists

MAGIC = b"QIV1"
_HEADER = struct.Struct("<4sIIdQQQQQ")
_VOCAB = np.dtype([("word", "<i8"), ("weight", "<f8")])
_USER = np.dtype(
    [("id", "<i8"), ("x0", "<f8"), ("y0", "<f8"), ("x1", "<f8"), ("y1", "<f8"), ("n", "<u4")]
)
_NODE = np.dtype([("level", "u1"), ("kind", "u1"), ("bits", "<u8")])
_WORD = struct.Struct("<qI")
_ENTRY = np.dtype([("level", "u1"), ("bits", "<u8"), ("offset", "<u8"), ("length", "<u8")])


def snapshot_bytes(index: QivIndex) -> bytes:
    out = bytearray()
    vocab_words = sorted(index.vocab)
    users = sorted(index.users.values(), key=lambda u: u.user_id)
    nodes = list(index.iter_nodes())

    vocab_arr = np.array([(w, index.vocab[w]) for w in vocab_words], dtype=_VOCAB)
    user_arr = np.array(
        [(u.user_id, *u.region.as_list(), len(u.words)) for u in users], dtype=_USER
    )
    user_words = np.array([w for u in users for w in sorted(u.words)], dtype="<i8")
    node_arr = np.array(
        [(n.code.level, 0 if n.children is not None else 1, n.code.bits) for n in nodes], dtype=_NODE
    )

    leaves = [n for n in nodes if n.children is None]
    resident_counts = np.array([n.residents.size for n in leaves], dtype=np.int64)
    flat = np.concatenate([n.residents for n in leaves]).astype(np.int64)
    encoded, sizes = codec.encode_id_lists(flat, resident_counts)
    residents = bytearray()
    cursor = 0
    for size in sizes.tolist():
        residents += struct.pack("<Q", size)
        residents += encoded[cursor : cursor + size]
        cursor += size

    word_ids = sorted(index.words)
    entries = [index.words[w] for w in word_ids]
    n_entries = sum(e.leaf_keys.size for e in entries)
    if n_entries:
        ids, counts = index.store.gather_lists(
            np.concatenate([e.offsets for e in entries]), np.concatenate([e.lengths for e in entries])
        )
        payload, byte_lengths = codec.encode_id_lists(ids, counts)
    else:
        payload, byte_lengths = b"", np.zeros(0, dtype=np.int64)
    byte_offsets = np.cumsum(byte_lengths) - byte_lengths
    directory = bytearray()
    row = 0
    for word, entry in zip(word_ids, entries):
        k = entry.leaf_keys.size
        codes = [index._leaf_by_key[key].code for key in entry.leaf_keys.tolist()]
        rows = np.zeros(k, dtype=_ENTRY)
        rows["level"] = [c.level for c in codes]
        rows["bits"] = [c.bits for c in codes]
        rows["offset"] = byte_offsets[row : row + k]
        rows["length"] = byte_lengths[row : row + k]
        directory += _WORD.pack(word, k)
        directory += rows.tobytes()
        row += k

    out += _HEADER.pack(
        MAGIC,
        index.max_level,
        index.leaf_capacity,
        index.vocab.default_weight,
        len(vocab_words),
        len(users),
        len(nodes),
        n_entries,
        len(payload),
    )
    out += vocab_arr.tobytes()
    out += user_arr.tobytes()
    out += user_words.tobytes()
    out += node_arr.tobytes()
    out += residents
    out += directory
    out += payload
    return bytes(out)


def parse_snapshot(buf: bytes | mmap.mmap) -> QivIndex:
    if len(buf) < _HEADER.size:
        raise RoviError("snapshot truncated")
    magic, max_level, capacity, default_w, n_vocab, n_users, n_nodes, n_entries, payload_size = (
        _HEADER.unpack_from(buf, 0)
    )
    if magic != MAGIC:
        raise RoviError(f"bad snapshot magic {magic!r}")
    pos = _HEADER.size

    def take(dtype: np.dtype, count: int) -> np.ndarray:
        nonlocal pos
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    vocab_arr = take(_VOCAB, n_vocab)
    vocab = VisualVocabulary(dict(zip(vocab_arr["word"].tolist(), vocab_arr["weight"].tolist())), default_w)

    user_arr = take(_USER, n_users)
    counts = user_arr["n"].astype(np.int64)
    flat = take(np.dtype("<i8"), int(counts.sum())).tolist()
    users = []
    cursor = 0
    for rec, n in zip(user_arr.tolist(), counts.tolist()):
        uid, a, b, c, d, _ = rec
        users.append(RoviUser(uid, Mbr(a, b, c, d), frozenset(flat[cursor : cursor + n])))
        cursor += n

    node_arr = take(_NODE, n_nodes).tolist()
    view = memoryview(buf)

    def read_node(i: int) -> tuple[QuadNode, int]:
        nonlocal pos
        level, kind, bits = node_arr[i]
        code = MortonCode(level, bits)
        if kind == 1:
            (nbytes,) = struct.unpack_from("<Q", buf, pos)
            pos += 8
            ids = codec.decode_ids(np.frombuffer(view[pos : pos + nbytes], dtype=np.uint8))
            pos += nbytes
            return QuadNode(code, cell_region(code), residents=ids), i + 1
        children = []
        j = i + 1
        for _ in range(4):
            child, j = read_node(j)
            children.append(child)
        return QuadNode(code, cell_region(code), children=children), j

    root, consumed = read_node(0)
    if consumed != n_nodes or root.code != ROOT:
        raise RoviError("corrupt quadtree block")

    words: dict[int, WordEntry] = {}
    read_entries = 0
    while read_entries < n_entries:
        word, n = _WORD.unpack_from(buf, pos)
        pos += _WORD.size
        rows = take(_ENTRY, n)
        levels = rows["level"].astype(np.int64)
        shifts = 2 * (max_level - levels)
        keys = rows["bits"].astype(np.int64) << shifts
        words[word] = WordEntry(keys, rows["offset"].astype(np.int64), rows["length"].astype(np.int64))
        read_entries += n
    if pos + payload_size != len(buf):
        raise RoviError("snapshot payload size mismatch")
    store = VarintStore(buf, base=pos)
    return QivIndex(users, vocab, root, words, store, max_level, capacity)


# --- functional surface -----------------------------------------------------


def build_qiv(
    users: Sequence[RoviUser],
    vocab: VisualVocabulary,
    max_level: int = DEFAULT_MAX_LEVEL,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
) -> QivIndex:
    return QivIndex.build(users, vocab, max_level, leaf_capacity)


def get_intersect_nodes(index: QivIndex, q_region: Mbr) -> set[MortonCode]:
    return index.get_intersect_nodes(q_region)


def get_word_nodes(index: QivIndex, v: int) -> list[MortonCode]:
    return index.get_word_nodes(v)


def node_visual_filter(index: QivIndex, q: RoviQuery, n: MortonCode, c: float) -> bool:
    return index.node_visual_filter(q, n, c)


def rovi_search(index: QivIndex, q: RoviQuery) -> list[int]:
    return index.search(q)


__all__ = [
    "ArrayStore",
    "FILTER_RTOL",
    "QivIndex",
    "QuadNode",
    "VarintStore",
    "WordEntry",
    "build_qiv",
    "get_intersect_nodes",
    "get_word_nodes",
    "node_visual_filter",
    "parse_snapshot",
    "rovi_search",
    "snapshot_bytes",
    "UNIT_SPACE",
]
