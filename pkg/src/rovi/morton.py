"""Morton (Z-order) codes for quadtree cells.

A level-``l`` code holds ``2*l`` bits, two per descent step. The quadrant
digit appended at each step is ``(y_bit << 1) | x_bit``, so siblings are
visited in Z order: low-x/low-y, high-x/low-y, low-x/high-y, high-x/high-y.
"""

from __future__ import annotations

from typing import NamedTuple

from .model import Mbr


class MortonCode(NamedTuple):
    level: int
    bits: int

    def child(self, quadrant: int) -> "MortonCode":
        return MortonCode(self.level + 1, (self.bits << 2) | quadrant)

    def parent(self) -> "MortonCode":
        if self.level == 0:
            raise ValueError("root has no parent")
        return MortonCode(self.level - 1, self.bits >> 2)

    def z_key(self, max_level: int) -> int:
        """Code left-aligned to ``max_level``; orders non-nested cells along the curve."""
        return self.bits << (2 * (max_level - self.level))

    def label(self) -> str:
        """Binary label as drawn in quadtree figures, e.g. ``N_1000``."""
        if self.level == 0:
            return "N_root"
        return "N_" + format(self.bits, f"0{2 * self.level}b")

    def __str__(self) -> str:
        return self.label()


ROOT = MortonCode(0, 0)


def encode(ix: int, iy: int, level: int) -> MortonCode:
    """Cell column/row at ``level`` -> code."""
    n = 1 << level
    if not (0 <= ix < n and 0 <= iy < n):
        raise ValueError(f"cell ({ix}, {iy}) outside level {level} grid")
    bits = 0
    for shift in range(level - 1, -1, -1):
        bits = (bits << 2) | (((iy >> shift) & 1) << 1) | ((ix >> shift) & 1)
    return MortonCode(level, bits)


def decode(code: MortonCode) -> tuple[int, int]:
    """Code -> cell column/row at its level."""
    if not 0 <= code.bits < 4**code.level:
        raise ValueError(f"bits {code.bits} too wide for level {code.level}")
    ix = iy = 0
    for shift in range(code.level - 1, -1, -1):
        digit = (code.bits >> (2 * shift)) & 3
        ix = (ix << 1) | (digit & 1)
        iy = (iy << 1) | (digit >> 1)
    return ix, iy


def cell_region(code: MortonCode) -> Mbr:
    ix, iy = decode(code)
    n = 1 << code.level
    # dyadic fractions: exact in binary floating point
    return Mbr(ix / n, iy / n, (ix + 1) / n, (iy + 1) / n)


def from_z_key(key: int, level: int, max_level: int) -> MortonCode:
    return MortonCode(level, key >> (2 * (max_level - level)))
