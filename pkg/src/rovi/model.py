"""Domain types: rectangles, geo-images, users, queries and the word vocabulary."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping


class RoviError(ValueError):
    """Raised for invalid input data (bad rectangles, empty users, ...)."""


@dataclass(frozen=True, slots=True)
class Mbr:
    """Axis-aligned rectangle inside the unit data space [0,1]^2."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise RoviError(f"non-finite coordinate in {coords}")
        if not all(0.0 <= c <= 1.0 for c in coords):
            raise RoviError(f"coordinate outside unit space in {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise RoviError(f"inverted rectangle {coords}")

    @classmethod
    def from_list(cls, coords: Iterable[float]) -> "Mbr":
        x0, y0, x1, y1 = (float(c) for c in coords)
        return cls(x0, y0, x1, y1)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        # closed intervals: boundary points are inside
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


UNIT_SPACE = Mbr(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True, slots=True)
class GeoImage:
    image_id: int
    location: tuple[float, float]
    words: tuple[int, ...]

    def __post_init__(self) -> None:
        x, y = self.location
        if not UNIT_SPACE.contains_point(x, y):
            raise RoviError(f"image {self.image_id} located outside unit space")
        if any(w < 0 for w in self.words):
            raise RoviError(f"image {self.image_id} has negative word id")


class _WeightTable(dict):
    """Weight dict that charges unknown ids a default weight."""

    def __init__(self, table: dict[int, float], default: float):
        super().__init__(table)
        self.default = default

    def __missing__(self, key: int) -> float:
        return self.default


class VisualVocabulary(Mapping[int, float]):
    """Global word id -> positive weight table.

    Ids missing from the table resolve to ``default_weight`` when looked up
    through :meth:`weight`; this is how unknown query words are charged.
    Users must only carry known ids (checked by :func:`check_users`).
    """

    def __init__(self, weights: Mapping[int, float], default_weight: float = 1.0):
        table: dict[int, float] = {}
        for word, w in weights.items():
            w = float(w)
            if not (w > 0.0 and math.isfinite(w)):
                raise RoviError(f"weight of word {word} must be positive, got {w}")
            if int(word) < 0:
                raise RoviError(f"negative word id {word}")
            table[int(word)] = w
        if not default_weight > 0.0:
            raise RoviError("default_weight must be positive")
        self._weights = table
        self.default_weight = float(default_weight)
        # bound C-level lookup used on the hot similarity path
        self.lookup = _WeightTable(table, self.default_weight).__getitem__

    @classmethod
    def uniform(cls, words: Iterable[int], weight: float = 1.0) -> "VisualVocabulary":
        return cls({w: weight for w in words})

    def weight(self, word: int) -> float:
        return self._weights.get(word, self.default_weight)

    def __getitem__(self, word: int) -> float:
        return self._weights[word]

    def __iter__(self) -> Iterator[int]:
        return iter(self._weights)

    def __len__(self) -> int:
        return len(self._weights)

    def __repr__(self) -> str:
        return f"VisualVocabulary({len(self)} words)"


@dataclass(frozen=True, slots=True)
class RoviUser:
    user_id: int
    region: Mbr
    words: frozenset[int]

    def __post_init__(self) -> None:
        if not self.words:
            raise RoviError(f"user {self.user_id} has no visual words")
        if not self.region.area > 0.0:
            raise RoviError(f"user {self.user_id} region has zero area")


@dataclass(frozen=True, slots=True)
class RoviQuery:
    region: Mbr
    words: frozenset[int]
    gamma_g: float = 0.3
    gamma_v: float = 0.3

    def __post_init__(self) -> None:
        if not self.words:
            raise RoviError("query has no visual words")
        if not self.region.area > 0.0:
            raise RoviError("query region has zero area")
        for name in ("gamma_g", "gamma_v"):
            g = getattr(self, name)
            if not 0.0 <= g <= 1.0:
                raise RoviError(f"{name}={g} outside [0, 1]")

    def with_thresholds(self, gamma_g: float, gamma_v: float) -> "RoviQuery":
        return RoviQuery(self.region, self.words, gamma_g, gamma_v)


# A result set is a plain ascending list of user ids.
ResultSet = list


def derive_user(images: Iterable[GeoImage], region: Mbr, user_id: int) -> RoviUser:
    """Build a user from the words of every image located inside ``region``."""
    words: set[int] = set()
    for img in images:
        if region.contains_point(*img.location):
            words.update(img.words)
    if not words:
        raise RoviError(f"empty user {user_id}: no images inside region")
    return RoviUser(user_id, region, frozenset(words))


def check_users(users: Iterable[RoviUser], vocab: VisualVocabulary) -> None:
    """Reject duplicate ids and words missing from the vocabulary."""
    seen: set[int] = set()
    for u in users:
        if u.user_id in seen:
            raise RoviError(f"duplicate user id {u.user_id}")
        seen.add(u.user_id)
        missing = [w for w in u.words if w not in vocab]
        if missing:
            raise RoviError(f"user {u.user_id} references unknown words {sorted(missing)[:5]}")


# --- JSON Lines I/O ---------------------------------------------------------


def _read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise RoviError(f"{path}:{lineno}: {exc}") from exc


def _write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def user_to_record(u: RoviUser) -> dict:
    return {"id": u.user_id, "mbr": u.region.as_list(), "words": sorted(u.words)}


def user_from_record(rec: dict) -> RoviUser:
    try:
        return RoviUser(int(rec["id"]), Mbr.from_list(rec["mbr"]), frozenset(int(w) for w in rec["words"]))
    except (KeyError, TypeError) as exc:
        raise RoviError(f"malformed user record: {exc!r}") from None


def query_to_record(q: RoviQuery) -> dict:
    return {
        "mbr": q.region.as_list(),
        "words": sorted(q.words),
        "gamma_g": q.gamma_g,
        "gamma_v": q.gamma_v,
    }


def query_from_record(rec: dict) -> RoviQuery:
    try:
        return RoviQuery(
            Mbr.from_list(rec["mbr"]),
            frozenset(int(w) for w in rec["words"]),
            float(rec.get("gamma_g", 0.3)),
            float(rec.get("gamma_v", 0.3)),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise RoviError(f"malformed query record: {exc!r}") from None


def load_users(path: str | Path) -> list[RoviUser]:
    return [user_from_record(r) for r in _read_jsonl(path)]


def save_users(path: str | Path, users: Iterable[RoviUser]) -> None:
    _write_jsonl(path, (user_to_record(u) for u in users))


def load_vocab(path: str | Path) -> VisualVocabulary:
    return VisualVocabulary({int(r["word"]): float(r["weight"]) for r in _read_jsonl(path)})


def save_vocab(path: str | Path, vocab: VisualVocabulary) -> None:
    _write_jsonl(path, ({"word": w, "weight": vocab[w]} for w in sorted(vocab)))


def load_queries(path: str | Path) -> list[RoviQuery]:
    return [query_from_record(r) for r in _read_jsonl(path)]


def save_queries(path: str | Path, queries: Iterable[RoviQuery]) -> None:
    _write_jsonl(path, (query_to_record(q) for q in queries))


def load_images(path: str | Path) -> list[GeoImage]:
    return [
        GeoImage(int(r["id"]), (float(r["loc"][0]), float(r["loc"][1])), tuple(int(w) for w in r["words"]))
        for r in _read_jsonl(path)
    ]


@dataclass
class Dataset:
    """Users plus vocabulary, validated together."""

    users: list[RoviUser]
    vocab: VisualVocabulary
    by_id: dict[int, RoviUser] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        check_users(self.users, self.vocab)
        self.by_id = {u.user_id: u for u in self.users}

    @classmethod
    def load(cls, users_path: str | Path, vocab_path: str | Path) -> "Dataset":
        return cls(load_users(users_path), load_vocab(vocab_path))
