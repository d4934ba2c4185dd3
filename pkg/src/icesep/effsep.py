"""Finite quotients from matrix representations reduced modulo a prime.

Given integer (or integer-polynomial) matrices for the generators and
polynomials in the entry variables ``X{i}{j}`` that vanish on the subgroup,
an element on which some subgroup polynomial is nonzero is separated in
``GL(n, Z/p)`` for any prime ``p`` not dividing that value.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .errors import MemberError, ParseError, SearchExhausted, ValidationError
from .words import Word

log = logging.getLogger(__name__)

Matrix = tuple[tuple[Fraction, ...], ...]


def entry_symbols(n: int) -> list[list[sympy.Symbol]]:
    return [[sympy.Symbol(f"X{i}{j}") for j in range(1, n + 1)] for i in range(1, n + 1)]


@dataclass
class MatrixRep:
    """Generator images; entries may involve parameters ``T1, T2, ...``."""

    n: int
    images: dict[str, sympy.Matrix]
    S: tuple[str, ...] = ()

    def __post_init__(self):
        for name, m in self.images.items():
            m = sympy.Matrix(m)
            if m.shape != (self.n, self.n):
                raise ValidationError(f"image of {name} is not {self.n}x{self.n}")
            if sympy.simplify(m.det()) == 0:
                raise ValidationError(f"image of {name} is singular")
            self.images[name] = m
        if not self.S:
            self.S = tuple(self.images)

    @property
    def parameters(self) -> list[sympy.Symbol]:
        syms = set()
        for m in self.images.values():
            syms |= m.free_symbols
        return sorted(syms, key=str)

    def norm(self, w: Word) -> int:
        """Word length over the monoid generated by ``S`` and inverses."""
        missing = w.generators() - set(self.S)
        if missing:
            raise ValidationError(f"{w} uses letters outside S: {sorted(missing)}")
        return len(w)


def sanov() -> MatrixRep:
    return MatrixRep(2, {"a": sympy.Matrix([[1, 2], [0, 1]]), "b": sympy.Matrix([[1, 0], [2, 1]])})


@dataclass
class DefiningPolys:
    """``polys[:group_count]`` cut out the group, the rest the subgroup closure."""

    n: int
    polys: list[sympy.Expr]
    group_count: int = 0

    @classmethod
    def parse(cls, lines: Sequence[str], n: int, group_count: int = 0) -> "DefiningPolys":
        allowed = {str(s): s for row in entry_symbols(n) for s in row}
        polys = []
        for text in lines:
            try:
                expr = sympy.sympify(text, locals=allowed)
            except (sympy.SympifyError, SyntaxError) as e:
                raise ParseError(f"cannot parse polynomial {text!r}") from e
            extra = {str(s) for s in expr.free_symbols} - set(allowed)
            if extra:
                raise ParseError(f"unknown variables {sorted(extra)} in {text!r}")
            polys.append(expr)
        return cls(n, polys, group_count)

    @property
    def subgroup_indices(self) -> range:
        return range(self.group_count, len(self.polys))

    def evaluate(self, j: int, M: Sequence[Sequence]) -> Fraction:
        if not hasattr(self, "_compiled"):
            flat = [s for row in entry_symbols(self.n) for s in row]
            self._compiled = [sympy.lambdify(flat, p, modules=[{}, "math"]) for p in self.polys]
        val = self._compiled[j](*(Fraction(x) for row in M for x in row))
        return Fraction(val)

    def validate(self, rep: "MatrixRep", H: Sequence[Word], specialization: dict | None = None) -> None:
        mats = _specialize(rep, specialization or {})
        for h in H:
            M = _word_matrix(mats, h, rep.n)
            for j in self.subgroup_indices:
                if self.evaluate(j, M) != 0:
                    raise ValidationError(f"polynomial {j} does not vanish on subgroup element {h}")


def _to_fraction_matrix(m: sympy.Matrix) -> Matrix:
    out = []
    for i in range(m.rows):
        row = []
        for k in range(m.cols):
            v = sympy.Rational(m[i, k])
            row.append(Fraction(int(v.p), int(v.q)))
        out.append(tuple(row))
    return tuple(out)


def _specialize(rep: MatrixRep, values: dict) -> dict[str, tuple[Matrix, Matrix]]:
    mats = {}
    for name, m in rep.images.items():
        m = m.subs(values) if values else m
        mats[name] = (_to_fraction_matrix(m), _to_fraction_matrix(m.inv()))
    return mats


def _mul(x: Matrix, y: Matrix) -> Matrix:
    n = len(x)
    return tuple(tuple(sum(x[i][k] * y[k][j] for k in range(n)) for j in range(n)) for i in range(n))


def _identity(n: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


def _word_matrix(mats: dict, w: Word, n: int) -> Matrix:
    M = _identity(n)
    for name, sign in w:
        M = _mul(M, mats[name][0 if sign > 0 else 1])
    return M


def choose_specialization(rep: MatrixRep, limit: int = 6) -> dict:
    """Smallest positive integer values for the parameters keeping every image invertible."""
    params = rep.parameters
    if not params:
        return {}
    for vals in itertools.product(range(1, limit + 1), repeat=len(params)):
        sub = dict(zip(params, vals))
        if all(m.subs(sub).det() != 0 for m in rep.images.values()):
            return sub
    raise SearchExhausted(f"no parameter values up to {limit} keep the images invertible")


def gl_order(n: int, p: int) -> int:
    return math.prod(p ** n - p ** i for i in range(n))


def _mod(x: Fraction, p: int) -> int:
    return x.numerator * pow(x.denominator, -1, p) % p


@dataclass(frozen=True)
class FiniteQuotientCert:
    modulus: int
    order_bound: int
    q_value: Fraction
    element: Word
    poly_index: int
    specialization: dict = field(default_factory=dict)

    def to_text(self) -> str:
        spec = ",".join(f"{k}={v}" for k, v in self.specialization.items()) or "-"
        return (f"element {self.element}\npoly {self.poly_index}\nq_value {self.q_value}\n"
                f"modulus {self.modulus}\norder_bound {self.order_bound}\nspecialization {spec}\n")


def mod_p_separate(rep: MatrixRep, polys: DefiningPolys, g: Word) -> FiniteQuotientCert:
    """Separate ``g`` from the subgroup in ``GL(n, Z/p)``, ``p`` the smallest usable prime."""
    spec = choose_specialization(rep)
    mats = _specialize(rep, spec)
    M = _word_matrix(mats, g, rep.n)
    found = None
    for j in polys.subgroup_indices:
        q = polys.evaluate(j, M)
        if q != 0:
            found = (j, q)
            break
    if found is None:
        raise MemberError(f"every subgroup polynomial vanishes at {g}; it cannot be separated this way")
    j, q = found
    bad = abs(q.numerator) * q.denominator
    for name, (A, Ai) in mats.items():
        bad *= math.prod(x.denominator for row in A + Ai for x in row)
        det = sympy.Rational(rep.images[name].subs(spec).det())
        bad *= abs(int(det.p)) * int(det.q)
    p = 2
    while bad % p == 0:
        p = int(sympy.nextprime(p))
    # recheck in the finite ring instead of trusting the integer computation
    Mp = _identity(rep.n)
    for name, sign in g:
        A = mats[name][0 if sign > 0 else 1]
        Mp = tuple(tuple(Fraction(_mod(x, p)) for x in row) for row in _mul(Mp, A))
    if _mod(polys.evaluate(j, Mp), p) == 0:
        raise ValidationError("reduction mod p kills the witness value")
    return FiniteQuotientCert(p, gl_order(rep.n, p), q, g, j, {str(k): v for k, v in spec.items()})


@dataclass
class GrowthTable:
    rows: list[tuple[int, int, int]]
    slope: float
    intercept: float
    residuals: list[float]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["length", "modulus", "bound"])
        w.writerows(self.rows)
        return buf.getvalue()


def quotient_growth(rep: MatrixRep, polys: DefiningPolys, family: Sequence[Word]) -> GrowthTable:
    """Fit ``log |Q| ~ N log ||g||`` over a family of separable elements."""
    if not family:
        raise ValidationError("no data: the family is empty")
    rows = []
    for g in family:
        cert = mod_p_separate(rep, polys, g)
        rows.append((rep.norm(g), cert.modulus, cert.order_bound))
    x = np.log([max(r[0], 1) for r in rows])
    y = np.log([r[2] for r in rows], dtype=float)
    if len(rows) < 2 or np.ptp(x) == 0:
        slope, intercept = 0.0, float(np.mean(y))
    else:
        slope, intercept = (float(c) for c in np.polyfit(x, y, 1))
    residuals = [float(r) for r in y - (slope * x + intercept)]
    return GrowthTable(rows, slope, intercept, residuals)
