"""Intersection ranks and the Hanna Neumann inequality in free groups.

The left side sums ``chi_bar(U ∩ x W x^-1)`` over double cosets ``U x W``;
each double coset with a noncyclic intersection is one component of the
fiber product of the two core graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError
from .stallings import core_graph, fiber_product
from .words import Word


@dataclass(frozen=True)
class ChiBar:
    value: int
    source: str


def chi_bar(kind: str, d: int = 0) -> ChiBar:
    """``kind`` is one of free, cyclic, trivial, surface; ``d`` counts generators."""
    if kind == "free":
        if d < 0:
            raise ValidationError("rank must be nonnegative")
        return ChiBar(max(0, d - 1), f"free rank {d}")
    if kind in ("cyclic", "trivial"):
        return ChiBar(0, kind)
    if kind == "surface":
        if d < 2:
            raise ValidationError("a surface group needs at least 2 generators")
        return ChiBar(d - 2, f"surface with {d} generators")
    raise ValidationError(f"unknown descriptor {kind!r}")


@dataclass(frozen=True)
class HnReport:
    U: tuple[Word, ...]
    W: tuple[Word, ...]
    intersections: tuple[tuple[Word, int], ...]
    left: int
    right: int

    @property
    def holds(self) -> bool:
        return self.left <= self.right

    @property
    def verdict(self) -> str:
        return "holds" if self.holds else "violated"

    def to_text(self) -> str:
        lines = ["U " + ", ".join(map(str, self.U)), "W " + ", ".join(map(str, self.W)),
                 f"{'conjugator':<20} rank  chi_bar"]
        for x, rank in self.intersections:
            lines.append(f"{str(x):<20} {rank:>4}  {max(0, rank - 1):>7}")
        lines.append(f"left {self.left}")
        lines.append(f"right {self.right}")
        lines.append(f"verdict {self.verdict}")
        return "\n".join(lines) + "\n"


def hn_check(U: Sequence[Word], W: Sequence[Word], alphabet: Sequence[str] | None = None) -> HnReport:
    letters = alphabet or sorted(set().union(*(w.generators() for w in list(U) + list(W))))
    cu, cw = core_graph(U, letters), core_graph(W, letters)
    parts = []
    for comp in fiber_product(cu, cw):
        if comp.betti > 0:
            parts.append((comp.conjugator, comp.betti))
    left = sum(max(0, r - 1) for _, r in parts)
    right = chi_bar("free", cu.betti).value * chi_bar("free", cw.betti).value
    return HnReport(tuple(U), tuple(W), tuple(parts), left, right)
