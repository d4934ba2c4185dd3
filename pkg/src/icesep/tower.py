"""ICE groups as towers of centralizer extensions over a free group.

A tower is a free base plus a list of levels; each level is a tuple of
extensions ``(root u, new generators t_1..t_k)`` adding the relations
``[u, t_i] = 1`` and ``[t_i, t_j] = 1``.  In chain form every extension sits
on its own level; :func:`normalize_chain` regroups them so that a level only
extends centralizers of elements of the level below.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ParseError, UnknownGenerator, ValidationError
from .lattice import Lattice
from .words import Word, conjugate_in_free_group


@dataclass(frozen=True)
class Extension:
    root: Word
    gens: tuple[str, ...]

    def __str__(self):
        return f"extend root={self.root} gens={','.join(self.gens)}"


@dataclass(frozen=True)
class IceTower:
    base: tuple[str, ...]
    levels: tuple[tuple[Extension, ...], ...] = ()

    def __post_init__(self):
        names = list(self.base)
        seen = set()
        for name in names:
            if name in seen:
                raise ValidationError(f"duplicate generator {name!r}")
            seen.add(name)
        available = set(self.base)
        base_roots = []
        for level in self.levels:
            new = []
            for ext in level:
                if not ext.root:
                    raise ValidationError("extension root is trivial")
                if not ext.gens:
                    raise ValidationError("extension adds no generators")
                missing = ext.root.generators() - available
                if missing:
                    raise ValidationError(f"root {ext.root} uses {sorted(missing)} not in the group below")
                if ext.root.generators() <= set(self.base):
                    base_roots.append(ext.root)
                for t in ext.gens:
                    if t in seen:
                        raise ValidationError(f"duplicate generator {t!r}")
                    seen.add(t)
                    new.append(t)
            available |= set(new)
        for u in base_roots:
            if u.cyclic_reduction()[1].root()[1] != 1:
                raise ValidationError(f"root {u} is a proper power; extend the centralizer of its root instead")
        for u, v in itertools.combinations(base_roots, 2):
            if conjugate_in_free_group(u, v) or conjugate_in_free_group(u, v.inverse()):
                raise ValidationError(f"centralizers of {u} and {v} coincide up to conjugacy")

    @classmethod
    def from_chain(cls, base: Sequence[str], extensions: Sequence[tuple[Word | str, Sequence[str]]]) -> "IceTower":
        levels = []
        for root, gens in extensions:
            if isinstance(root, str):
                root = Word.parse(root)
            levels.append((Extension(root, tuple(gens)),))
        return cls(tuple(base), tuple(levels))

    @property
    def extensions(self) -> list[Extension]:
        return [e for level in self.levels for e in level]

    @property
    def alphabet(self) -> tuple[str, ...]:
        return self.base + tuple(t for e in self.extensions for t in e.gens)

    @property
    def height(self) -> int:
        return len(self.levels)

    def is_normalized(self) -> bool:
        return normalize_chain(self) == self

    def ext_of(self, name: str) -> tuple[int, int] | None:
        """(extension index, generator index) of an extension generator."""
        for i, e in enumerate(self.extensions):
            if name in e.gens:
                return i, e.gens.index(name)
        return None

    def word(self, text: str) -> Word:
        return Word.parse(text, self.alphabet)

    def to_text(self) -> str:
        lines = ["free " + " ".join(self.base)]
        lines += [str(e) for e in self.extensions]
        return "\n".join(lines) + "\n"


def normalize_chain(t: IceTower) -> IceTower:
    """Regroup extensions so level j only uses generators of levels < j."""
    level_of = {x: 0 for x in t.base}
    grouped: dict[int, list[Extension]] = {}
    for ext in t.extensions:
        lvl = 1 + max(level_of[x] for x in ext.root.generators())
        for g in ext.gens:
            level_of[g] = lvl
        grouped.setdefault(lvl, []).append(ext)
    levels = tuple(tuple(grouped[k]) for k in sorted(grouped))
    return IceTower(t.base, levels)


def abelianize(t: IceTower, w: Word) -> tuple[int, ...]:
    """Image in G^ab, which is free abelian on all generators."""
    return tuple(w.exponent_sum(x) for x in t.alphabet)


class AmalgamNormalForm:
    """Word problem for a height-1 tower ``F *_<u_i> (<u_i> x Z^k_i)``.

    Words are cut into syllables: maximal free-base runs and maximal runs of
    one extension's generators (vectors ``(u-exponent, t-exponents)``).
    Reduction merges neighbours, turns extension syllables with zero
    t-part into powers of the root, and absorbs root powers pinched between
    two syllables of the same extension.  The element is trivial iff no
    syllable survives.
    """

    def __init__(self, tower: IceTower):
        tower = normalize_chain(tower)
        if tower.height > 1:
            raise ValidationError("normal forms are only available for towers of height <= 1")
        self.tower = tower
        self.exts = tower.extensions
        self._split = []
        for e in self.exts:
            p, c = e.root.cyclic_reduction()
            self._split.append((p, c))

    def _root_power(self, i: int, f: Word) -> int | None:
        p, c = self._split[i]
        body = len(f) - 2 * len(p)
        if body < 0 or body % len(c):
            return None
        m = body // len(c)
        for k in (m, -m):
            if (self.exts[i].root ** k) == f:
                return k
        return None

    def syllables(self, w: Word) -> list:
        out: list = []
        for name, sign in w:
            loc = self.tower.ext_of(name)
            if loc is None:
                if out and out[-1][0] == "F":
                    out[-1] = ("F", out[-1][1] * Word(((name, sign),)))
                else:
                    out.append(("F", Word(((name, sign),))))
            else:
                i, k = loc
                vec = [0] * (1 + len(self.exts[i].gens))
                vec[1 + k] = sign
                if out and out[-1][0] == "A" and out[-1][1] == i:
                    vec = [a + b for a, b in zip(out[-1][2], vec)]
                    out[-1] = ("A", i, tuple(vec))
                else:
                    out.append(("A", i, tuple(vec)))
        return out

    def reduce(self, w: Word) -> list:
        syl = self.syllables(w)
        changed = True
        while changed:
            changed = False
            new: list = []
            for s in syl:
                if s[0] == "A" and not any(s[2][1:]):
                    s = ("F", self.exts[s[1]].root ** s[2][0])
                if s[0] == "F" and not s[1]:
                    changed = True
                    continue
                if new and new[-1][0] == s[0] == "F":
                    new[-1] = ("F", new[-1][1] * s[1])
                    changed = True
                elif new and s[0] == "A" and new[-1][0] == "A" and new[-1][1] == s[1]:
                    new[-1] = ("A", s[1], tuple(a + b for a, b in zip(new[-1][2], s[2])))
                    changed = True
                else:
                    new.append(s)
            syl = new
            for k in range(1, len(syl) - 1):
                left, mid, right = syl[k - 1], syl[k], syl[k + 1]
                if mid[0] == "F" and left[0] == right[0] == "A" and left[1] == right[1]:
                    m = self._root_power(left[1], mid[1])
                    if m is not None:
                        vec = [a + b for a, b in zip(left[2], right[2])]
                        vec[0] += m
                        syl[k - 1:k + 2] = [("A", left[1], tuple(vec))]
                        changed = True
                        break
        return syl

    def is_trivial(self, w: Word) -> bool:
        return not self.reduce(w)

    def equal(self, v: Word, w: Word) -> bool:
        return self.is_trivial(v * w.inverse())


@dataclass(frozen=True)
class MembershipVerdict:
    status: str  # "member", "non-member-certified", "unknown"
    witness: tuple = ()
    reason: str = ""

    @property
    def is_member(self) -> bool:
        return self.status == "member"


def oracle_membership(t: IceTower, gens: Sequence[Word], w: Word, bound: int = 6,
                      node_cap: int = 200_000) -> MembershipVerdict:
    """Brute-force membership for towers of height <= 1.

    ``member`` carries a product expression ``((index, sign), ...)`` over
    ``gens``.  ``non-member-certified`` means either the abelianization
    already separates ``w`` from the subgroup (a proof), or no product of at
    most ``bound`` generator factors equals ``w`` (a proof at that scale;
    ``reason`` says which).  ``unknown`` when ``node_cap`` cuts the search.
    """
    nf = AmalgamNormalForm(t)
    tower = nf.tower
    n = len(tower.alphabet)
    image = Lattice.from_rows([abelianize(tower, g) for g in gens], n)
    target = abelianize(tower, w)
    if not image.contains(target):
        return MembershipVerdict("non-member-certified", (), "abelianization obstruction")
    letters = [(i, s) for i in range(len(gens)) for s in (1, -1)]
    frontier = [((), Word())]
    seen = {Word()}
    for depth in range(bound + 1):
        nxt = []
        for expr, x in frontier:
            if abelianize(tower, x) == target and nf.equal(x, w):
                return MembershipVerdict("member", expr, f"product of {depth} factors")
            if depth == bound:
                continue
            for i, s in letters:
                if expr and expr[-1] == (i, -s):
                    continue
                y = x * (gens[i] if s > 0 else gens[i].inverse())
                if y in seen:
                    continue
                seen.add(y)
                nxt.append((expr + ((i, s),), y))
                if len(seen) > node_cap:
                    return MembershipVerdict("unknown", (), f"node cap {node_cap} reached at depth {depth}")
        frontier = nxt
    return MembershipVerdict("non-member-certified", (), f"no product of <= {bound} factors")


@dataclass
class TowerProblem:
    """Contents of a presentation file."""

    tower: IceTower
    subgroups: list[list[Word]] = field(default_factory=list)
    elements: list[Word] = field(default_factory=list)
    choices: dict = field(default_factory=dict)

    @property
    def subgroup(self) -> list[Word]:
        if not self.subgroups:
            raise ParseError("no subgroup declared")
        return self.subgroups[0]

    @property
    def element(self) -> Word:
        if not self.elements:
            raise ParseError("no element declared")
        return self.elements[0]


def _split_words(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def parse_tower(text: str) -> TowerProblem:
    """Parse the line-oriented presentation format.

    ``free a b`` / ``extend root=<word> gens=t1,t2`` / ``subgroup <w>, <w>``
    / ``element <w>``; optional ``choose ypiece <k> loops <w>, <w>`` and
    ``choose tpiece <k> rows <r1> / <r2>`` fix completion choices for the
    separation pipeline.  ``#`` starts a comment.
    """
    base: list[str] | None = None
    exts: list[tuple[Word, tuple[str, ...]]] = []
    raw_subgroups: list[list[str]] = []
    raw_elements: list[str] = []
    raw_choices: list[tuple[str, int, str]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "free":
                base = rest.split()
                if not base:
                    raise ParseError("free needs at least one generator")
            elif head == "extend":
                fields = dict(kv.split("=", 1) for kv in rest.split())
                exts.append((Word.parse(fields["root"]), tuple(_split_words(fields["gens"]))))
            elif head == "subgroup":
                raw_subgroups.append(_split_words(rest))
            elif head == "element":
                raw_elements.append(rest)
            elif head == "choose":
                kind, idx, key, payload = rest.split(None, 3)
                if (kind, key) not in (("ypiece", "loops"), ("tpiece", "rows")):
                    raise ParseError(f"bad choose directive {rest!r}")
                raw_choices.append((kind, int(idx), payload))
            else:
                raise ParseError(f"unknown directive {head!r}")
        except (KeyError, ValueError) as e:
            if isinstance(e, ParseError):
                raise ParseError(f"line {lineno}: {e}") from e
            raise ParseError(f"line {lineno}: cannot parse {line!r}") from e
    if base is None:
        raise ParseError("missing 'free' declaration")
    try:
        tower = IceTower.from_chain(base, exts)
    except ValidationError as e:
        raise ParseError(str(e)) from e
    alphabet = tower.alphabet
    try:
        for root, _ in exts:
            Word.parse(str(root), alphabet)
        subgroups = [[Word.parse(w, alphabet) for w in ws] for ws in raw_subgroups]
        elements = [Word.parse(w, alphabet) for w in raw_elements]
    except UnknownGenerator as e:
        raise ParseError(str(e)) from e
    choices: dict = {}
    for kind, idx, payload in raw_choices:
        if kind == "ypiece":
            choices[("Y", idx)] = [Word.parse(w, alphabet) for w in _split_words(payload)]
        else:
            choices[("T", idx)] = [[int(x) for x in r.split()] for r in payload.split("/")]
    return TowerProblem(tower, subgroups, elements, choices)


def load_tower(path: str | Path) -> TowerProblem:
    return parse_tower(Path(path).read_text())
