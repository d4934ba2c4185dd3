"""H-GICE chain certificates and discriminating retractions.

A chain starts from named generators of a subgroup H and applies moves:
``FreeProduct`` adds free generators, ``CentExt`` adds generators commuting
with the centralizer of a root word.  Each generator may carry a *value*, an
element of an ambient group that the symbol stands for; the separation
pipeline records values so that a certificate can be checked against the
cover it describes.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from .errors import ParseError, SearchExhausted, ValidationError
from .words import Word, words_of_length

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreeProduct:
    gens: tuple[str, ...]
    values: tuple[Word, ...] = ()

    @property
    def kind(self) -> str:
        return "freeprod"

    def __str__(self):
        return "freeprod " + ",".join(self.gens)


@dataclass(frozen=True)
class CentExt:
    root: Word
    gens: tuple[str, ...]
    values: tuple[Word, ...] = ()

    @property
    def kind(self) -> str:
        return "centext"

    def __str__(self):
        return f"centext root={self.root} gens={','.join(self.gens)}"


Move = FreeProduct | CentExt


@dataclass
class GiceChain:
    """Moves from ``H = <base>`` up to the top group.

    With ``ambient`` set, ``CentExt`` roots are written in the ambient
    alphabet (they are values, not symbols) and availability of their letters
    is not checked against the chain's own symbols.
    """

    base: tuple[str, ...]
    base_values: tuple[Word, ...] = ()
    moves: list[Move] = field(default_factory=list)
    ambient: bool = False

    def symbols(self) -> list[str]:
        out = list(self.base)
        for m in self.moves:
            out.extend(m.gens)
        return out

    def values(self) -> dict[str, Word]:
        out = dict(zip(self.base, self.base_values))
        for m in self.moves:
            out.update(zip(m.gens, m.values))
        return out

    def counts(self) -> tuple[int, int]:
        """(number of free-product moves, number of centralizer extensions)."""
        fp = sum(isinstance(m, FreeProduct) for m in self.moves)
        return fp, len(self.moves) - fp

    def shape(self) -> list[tuple[str, int]]:
        """Move kinds with ranks; consecutive free products are merged."""
        out: list[tuple[str, int]] = []
        for m in self.moves:
            if isinstance(m, FreeProduct) and out and out[-1][0] == "freeprod":
                out[-1] = ("freeprod", out[-1][1] + len(m.gens))
            else:
                out.append((m.kind, len(m.gens)))
        return out

    def to_text(self) -> str:
        lines = ["base " + ",".join(self.base)]
        lines += [str(m) for m in self.moves]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GiceChain":
        base: tuple[str, ...] = ()
        moves: list[Move] = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            head, _, rest = line.partition(" ")
            try:
                if head == "base":
                    base = tuple(x.strip() for x in rest.split(",") if x.strip())
                elif head == "freeprod":
                    moves.append(FreeProduct(tuple(x.strip() for x in rest.split(",") if x.strip())))
                elif head == "centext":
                    fields = dict(kv.split("=", 1) for kv in rest.split())
                    gens = tuple(x for x in fields["gens"].split(",") if x)
                    moves.append(CentExt(Word.parse(fields["root"]), gens))
                else:
                    raise ParseError(f"unknown move {head!r}")
            except (KeyError, ValueError) as e:
                if isinstance(e, ParseError):
                    raise ParseError(f"line {lineno}: {e}") from e
                raise ParseError(f"line {lineno}: cannot parse {line!r}") from e
        return cls(base, (), moves)


def check_chain(c: GiceChain) -> tuple[bool, list[str]]:
    """Legality of every move; returns ``(ok, diagnostics)``."""
    problems = []
    seen = set()
    for name in c.base:
        if name in seen:
            problems.append(f"base symbol {name!r} repeated")
        seen.add(name)
    for k, m in enumerate(c.moves, 1):
        if not m.gens:
            problems.append(f"move {k}: adds no generators")
        if isinstance(m, CentExt):
            if not m.root:
                problems.append(f"move {k}: trivial root")
            elif not c.ambient:
                missing = m.root.generators() - seen
                if missing:
                    problems.append(f"move {k}: root uses unavailable {sorted(missing)}")
        if m.values and len(m.values) != len(m.gens):
            problems.append(f"move {k}: {len(m.gens)} generators but {len(m.values)} values")
        for name in m.gens:
            if name in seen:
                problems.append(f"move {k}: name {name!r} is not fresh")
            seen.add(name)
    return not problems, problems


# --- discrimination -------------------------------------------------------

SANOV = {"a": ((1, 2), (0, 1)), "b": ((1, 0), (2, 1))}


def _mat_mul(x, y):
    return tuple(tuple(sum(x[i][k] * y[k][j] for k in range(2)) for j in range(2)) for i in range(2))


def sanov_image(w: Word, images=SANOV) -> tuple[tuple[int, int], tuple[int, int]]:
    """Image of ``w`` under the faithful integer representation of F(a, b)."""
    inverses = {k: ((v[1][1], -v[0][1]), (-v[1][0], v[0][0])) for k, v in images.items()}
    m = ((1, 0), (0, 1))
    for name, sign in w:
        m = _mat_mul(m, images[name] if sign > 0 else inverses[name])
    return m


@dataclass(frozen=True)
class Retraction:
    images: dict[str, Word]
    level: int

    def __call__(self, w: Word) -> Word:
        return w.substitute(self.images)


def _exponents(bound: int) -> list[int]:
    out = []
    for m in range(1, bound + 1):
        out += [m, -m]
    return out


def _candidates(c: GiceChain, level: int) -> list[list]:
    """Per-move option lists; an option is an assignment for that move's gens."""
    hwords = [w for n in range(1, level + 1) for w in words_of_length(c.base, n)]
    options = []
    for m in c.moves:
        if isinstance(m, FreeProduct):
            options.append([("fp", combo) for combo in itertools.product(hwords, repeat=len(m.gens))])
        else:
            options.append([("ce", combo) for combo in itertools.product(_exponents(level), repeat=len(m.gens))])
    return options


def _assignments(c: GiceChain, bound: int) -> Iterator[tuple[int, dict[str, Word]]]:
    """Retractions in canonical order, each visited once at its first level."""
    for level in range(1, bound + 1):
        options = _candidates(c, level)
        for choice in itertools.product(*options):
            if level > 1 and all(_size(opt) < level for opt in choice):
                continue
            images = {x: Word(((x, 1),)) for x in c.base}
            for m, (kind, combo) in zip(c.moves, choice):
                if kind == "fp":
                    images.update(zip(m.gens, combo))
                else:
                    root_img = m.root.substitute(images)
                    images.update((t, root_img ** e) for t, e in zip(m.gens, combo))
            yield level, images


def _size(opt) -> int:
    kind, combo = opt
    if kind == "fp":
        return max((len(w) for w in combo), default=0)
    return max((abs(e) for e in combo), default=0)


def discriminate(c: GiceChain, S: Sequence[Word], bound: int = 8,
                 is_trivial: Callable[[Word], bool] | None = None) -> Retraction:
    """Find an H-retraction of the chain's top group not killing any s in S.

    H is taken to be free on the chain's base symbols unless ``is_trivial``
    decides the word problem of H (over the base symbols) another way.
    Raises :class:`SearchExhausted` naming an unseparated word.
    """
    trivial = is_trivial or (lambda w: not w)
    ok, problems = check_chain(c)
    if not ok:
        raise ValidationError("; ".join(problems))
    base = [Word(((x, 1),)) for x in c.base]
    if not any(not trivial(x * y * x.inverse() * y.inverse()) for x, y in itertools.combinations(base, 2)):
        raise ValidationError("H is abelian: no retraction onto it can discriminate; "
                              "replace a generator x by a power x^k that leaves g outside, "
                              "then adjoin a non-commuting element as a free factor")
    symbols = set(c.symbols())
    for s in S:
        if not s.generators() <= symbols:
            raise ValidationError(f"{s} uses symbols outside the chain")
    worst: Word | None = None
    for level, images in _assignments(c, bound):
        bad = next((s for s in S if trivial(s.substitute(images))), None)
        if bad is None:
            psi = Retraction(images, level)
            log.debug("retraction found at level %d", level)
            return psi
        worst = bad
    raise SearchExhausted(f"no retraction within bound {bound}; {worst} stays unseparated")


def confirm_retraction(c: GiceChain, psi: Retraction, S: Sequence[Word]) -> bool:
    """Independent check through the integer representation of F(a, b)."""
    identity = ((1, 0), (0, 1))
    for x in c.base:
        if psi(Word(((x, 1),))) != Word(((x, 1),)):
            return False
    if set(c.base) != {"a", "b"}:
        raise ValidationError("matrix confirmation needs H = F(a, b)")
    return all(sanov_image(psi(s)) != identity for s in S)
