"""Rectangle arithmetic and the two similarity measures.

Every index verifies candidates through :func:`geo_sim` and :func:`vis_sim`
so that threshold decisions are bit-identical to the oracle's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import AbstractSet

from .model import Mbr, RoviError, VisualVocabulary


@dataclass(frozen=True, slots=True)
class OverlapResult:
    intersection_area: float
    union_area: float


def area(r: Mbr) -> float:
    return (r.x_max - r.x_min) * (r.y_max - r.y_min)


def intersection_area(a: Mbr, b: Mbr) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    if w <= 0.0:
        return 0.0
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if h <= 0.0:
        return 0.0
    return w * h


def union_area(a: Mbr, b: Mbr) -> float:
    """Area of the (generally non-rectangular) union, by inclusion-exclusion."""
    return area(a) + area(b) - intersection_area(a, b)


def overlap(a: Mbr, b: Mbr) -> OverlapResult:
    inter = intersection_area(a, b)
    return OverlapResult(inter, area(a) + area(b) - inter)


def overlaps(a: Mbr, b: Mbr) -> bool:
    """True when the two rectangles share positive area."""
    return (
        min(a.x_max, b.x_max) > max(a.x_min, b.x_min)
        and min(a.y_max, b.y_max) > max(a.y_min, b.y_min)
    )


def geo_sim(q: Mbr, u: Mbr) -> float:
    """Intersection over union of two rectangles."""
    inter = intersection_area(q, u)
    union = area(q) + area(u) - inter
    if union <= 0.0:
        raise RoviError("undefined similarity: both rectangles are degenerate")
    return inter / union


def word_weight_sum(words: AbstractSet[int], vocab: VisualVocabulary) -> float:
    return math.fsum(map(vocab.lookup, words))


def vis_sim(q_words: AbstractSet[int], u_words: AbstractSet[int], vocab: VisualVocabulary) -> float:
    """Weighted Jaccard similarity under global word weights.

    Sums use ``math.fsum`` so the value does not depend on set iteration order.
    """
    common = q_words & u_words
    if not common:
        return 0.0
    lookup = vocab.lookup
    return math.fsum(map(lookup, common)) / math.fsum(map(lookup, q_words | u_words))
