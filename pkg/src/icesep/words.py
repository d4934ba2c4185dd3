"""Freely reduced words over a named alphabet.

A word is stored as a tuple of ``(generator, sign)`` pairs with ``sign`` in
``{+1, -1}``.  The text grammar shared by every file format in the package is
``term(.term)*`` where a term is ``ident`` or ``ident^int``; ``1`` is the
empty word, e.g. ``t^-1.a^2.t``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ParseError, UnknownGenerator

Letter = tuple[str, int]

_TERM = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\^(-?\d+))?$")


def _push(stack: list[Letter], letter: Letter) -> None:
    if stack and stack[-1][0] == letter[0] and stack[-1][1] == -letter[1]:
        stack.pop()
    else:
        stack.append(letter)


def reduce(raw: Iterable[tuple[str, int]], alphabet: Iterable[str] | None = None) -> "Word":
    """Freely reduce ``raw``; exponents other than +-1 are expanded."""
    allowed = None if alphabet is None else set(alphabet)
    stack: list[Letter] = []
    for name, exp in raw:
        if allowed is not None and name not in allowed:
            raise UnknownGenerator(name)
        sign = 1 if exp > 0 else -1
        for _ in range(abs(exp)):
            _push(stack, (name, sign))
    return Word(tuple(stack))


@dataclass(frozen=True, order=True)
class Word:
    letters: tuple[Letter, ...] = ()

    @classmethod
    def gen(cls, name: str, exp: int = 1) -> "Word":
        return reduce([(name, exp)])

    @classmethod
    def parse(cls, text: str, alphabet: Iterable[str] | None = None) -> "Word":
        text = text.strip()
        if text in ("", "1"):
            return cls()
        raw = []
        for term in text.split("."):
            m = _TERM.match(term.strip())
            if not m:
                raise ParseError(f"bad word term {term!r} in {text!r}")
            raw.append((m.group(1), int(m.group(2)) if m.group(2) else 1))
        return reduce(raw, alphabet)

    def __str__(self) -> str:
        if not self.letters:
            return "1"
        terms = []
        for name, sign in self.letters:
            if terms and terms[-1][0] == name and (terms[-1][1] > 0) == (sign > 0):
                terms[-1][1] += sign
            else:
                terms.append([name, sign])
        return ".".join(n if e == 1 else f"{n}^{e}" for n, e in terms)

    def __repr__(self) -> str:
        return f"Word({str(self)!r})"

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __bool__(self) -> bool:
        return bool(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        stack = list(self.letters)
        for letter in other.letters:
            _push(stack, letter)
        return Word(tuple(stack))

    def inverse(self) -> "Word":
        return Word(tuple((n, -s) for n, s in reversed(self.letters)))

    __invert__ = inverse

    def __pow__(self, k: int) -> "Word":
        base = self if k >= 0 else self.inverse()
        out = Word()
        for _ in range(abs(k)):
            out = out * base
        return out

    def conjugate(self, by: "Word") -> "Word":
        """``by^-1 . self . by`` (right-action convention)."""
        return by.inverse() * self * by

    def generators(self) -> set[str]:
        return {n for n, _ in self.letters}

    def exponent_sum(self, name: str) -> int:
        return sum(s for n, s in self.letters if n == name)

    def substitute(self, images: dict[str, "Word"]) -> "Word":
        out = Word()
        for name, sign in self.letters:
            img = images.get(name, Word(((name, 1),)))
            out = out * (img if sign > 0 else img.inverse())
        return out

    def cyclic_reduction(self) -> tuple["Word", "Word"]:
        """Return ``(p, c)`` with ``self == p . c . p^-1`` and ``c`` cyclically reduced."""
        letters = self.letters
        i, j = 0, len(letters) - 1
        while i < j and letters[i][0] == letters[j][0] and letters[i][1] == -letters[j][1]:
            i += 1
            j -= 1
        return Word(letters[:i]), Word(letters[i:j + 1])

    def is_cyclically_reduced(self) -> bool:
        return len(self.cyclic_reduction()[0]) == 0

    def root(self) -> tuple["Word", int]:
        """Primitive root of a cyclically reduced word: ``self == r^k``, ``k`` maximal."""
        n = len(self.letters)
        for period in range(1, n + 1):
            if n % period == 0 and self.letters == self.letters[:period] * (n // period):
                return Word(self.letters[:period]), n // period
        return self, 1


def rotations(word: Word) -> set[tuple[Letter, ...]]:
    ls = word.letters
    return {ls[i:] + ls[:i] for i in range(len(ls))} or {()}


def conjugate_in_free_group(u: Word, v: Word) -> bool:
    """Whether ``u`` and ``v`` are conjugate in the free group."""
    cu, cv = u.cyclic_reduction()[1], v.cyclic_reduction()[1]
    if len(cu) != len(cv):
        return False
    return cv.letters in rotations(cu)


def words_of_length(alphabet: Sequence[str], length: int) -> Iterable[Word]:
    """Reduced words of exactly ``length`` letters in shortlex order.

    Letter order is ``x1 < x2 < ... < x1^-1 < x2^-1 < ...``.
    """
    letters = [(n, 1) for n in alphabet] + [(n, -1) for n in alphabet]

    def extend(prefix: tuple[Letter, ...], left: int):
        if left == 0:
            yield Word(prefix)
            return
        for letter in letters:
            if prefix and prefix[-1][0] == letter[0] and prefix[-1][1] == -letter[1]:
                continue
            yield from extend(prefix + (letter,), left - 1)

    yield from extend((), length)
