"""Integer lattices: Hermite and Smith normal forms, abelian separation,
and torus covers with a single prescribed elevation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import MemberError, ParseError, ValidationError

Vector = tuple[int, ...]


def _hnf_rows(rows: Iterable[Sequence[int]], n: int) -> list[list[int]]:
    A = [list(r) for r in rows]
    for r in A:
        if len(r) != n:
            raise ValidationError(f"row {r} has wrong dimension (expected {n})")
    A = [r for r in A if any(r)]
    p = 0
    for col in range(n):
        while True:
            nz = [i for i in range(p, len(A)) if A[i][col] != 0]
            if not nz:
                break
            best = min(nz, key=lambda i: (abs(A[i][col]), i))
            A[p], A[best] = A[best], A[p]
            clean = True
            for i in range(p + 1, len(A)):
                if A[i][col]:
                    q = A[i][col] // A[p][col]
                    A[i] = [x - q * y for x, y in zip(A[i], A[p])]
                    clean = clean and A[i][col] == 0
            if clean:
                break
        if p < len(A) and A[p][col] != 0:
            if A[p][col] < 0:
                A[p] = [-x for x in A[p]]
            for i in range(p):
                q = A[i][col] // A[p][col]
                if q:
                    A[i] = [x - q * y for x, y in zip(A[i], A[p])]
            p += 1
            A = A[:p] + [r for r in A[p:] if any(r)]
    return A[:p]


@dataclass(frozen=True)
class Lattice:
    """Sublattice of Z^n stored by its row-style Hermite normal form."""

    n: int
    basis: tuple[Vector, ...]

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]], n: int) -> "Lattice":
        return cls(n, tuple(tuple(r) for r in _hnf_rows(rows, n)))

    @classmethod
    def full(cls, n: int) -> "Lattice":
        return cls.from_rows([[int(i == j) for j in range(n)] for i in range(n)], n)

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def is_full_rank(self) -> bool:
        return self.rank == self.n

    @property
    def pivots(self) -> list[int]:
        return [next(j for j, x in enumerate(r) if x) for r in self.basis]

    @property
    def index(self) -> int | None:
        """Index in Z^n (the determinant), ``None`` when infinite."""
        if not self.is_full_rank:
            return None
        return math.prod(r[j] for r, j in zip(self.basis, self.pivots))

    determinant = index

    def coords(self, v: Sequence[int]) -> list[int] | None:
        """Integer coordinates of ``v`` in the HNF basis, or None."""
        if len(v) != self.n:
            raise ValidationError(f"dimension mismatch: {len(v)} != {self.n}")
        v = list(v)
        out = []
        for r, j in zip(self.basis, self.pivots):
            if any(v[:j]):
                return None
            q, rem = divmod(v[j], r[j])
            if rem:
                return None
            out.append(q)
            v = [x - q * y for x, y in zip(v, r)]
        return out if not any(v) else None

    def contains(self, v: Sequence[int]) -> bool:
        return self.coords(v) is not None

    __contains__ = contains

    def reduce(self, v: Sequence[int]) -> Vector:
        """Canonical representative of ``v`` modulo the lattice."""
        v = list(v)
        for r, j in zip(self.basis, self.pivots):
            q = v[j] // r[j]
            if q:
                v = [x - q * y for x, y in zip(v, r)]
        return tuple(v)

    def __add__(self, other: "Lattice") -> "Lattice":
        return Lattice.from_rows(list(self.basis) + list(other.basis), self.n)

    def with_vectors(self, *vs: Sequence[int]) -> "Lattice":
        return Lattice.from_rows(list(self.basis) + [list(v) for v in vs], self.n)

    def contains_lattice(self, other: "Lattice") -> bool:
        return all(self.contains(r) for r in other.basis)

    def order_of(self, v: Sequence[int]) -> int | None:
        """Smallest m > 0 with m*v in the lattice (None if infinite)."""
        if not any(v):
            return 1
        bigger = self.with_vectors(v)
        if bigger.rank != self.rank:
            return None
        C = [bigger.coords(r) for r in self.basis]
        return abs(_det(C)) if C else 1

    def shift_along(self, d: Sequence[int], axis: Sequence[int]) -> int | None:
        """Some j with ``d - j*axis`` in the lattice, canonical mod the order."""
        bigger = self.with_vectors(axis)
        if not bigger.contains(d):
            return None
        order = self.order_of(axis)
        # d - j*axis in L  <=>  (d, j) lies in the lattice spanned by (L, 0) and (axis, 1)
        rows = [list(r) + [0] for r in self.basis] + [list(axis) + [1]]
        ext = Lattice.from_rows(rows, self.n + 1)
        # solve for the last coordinate: reduce (d, 0) by everything but the last column
        v = list(d) + [0]
        for r, j in zip(ext.basis, ext.pivots):
            if j == self.n:
                break
            q, rem = divmod(v[j], r[j])
            if rem:
                return None
            v = [x - q * y for x, y in zip(v, r)]
        if any(v[:self.n]):
            return None
        j = -v[self.n]
        return j % order if order else j

    def to_text(self) -> str:
        return "".join(" ".join(str(x) for x in r) + "\n" for r in self.basis)

    @classmethod
    def from_text(cls, text: str, n: int | None = None) -> "Lattice":
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([int(x) for x in line.split()])
            except ValueError as e:
                raise ParseError(f"bad lattice row {line!r}") from e
        if n is None:
            if not rows:
                raise ParseError("empty lattice needs an explicit rank")
            n = len(rows[0])
        return cls.from_rows(rows, n)


def hnf(generators: Iterable[Sequence[int]], n: int) -> Lattice:
    return Lattice.from_rows(generators, n)


def contains(L: Lattice, v: Sequence[int]) -> bool:
    return L.contains(v)


def _det(M: list[list[int]]) -> int:
    """Exact integer determinant by fraction-free elimination (Bareiss)."""
    M = [list(r) for r in M]
    n = len(M)
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if M[i][k]), None)
            if swap is None:
                return 0
            M[k], M[swap] = M[swap], M[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1] if n else 1


def smith(A: Sequence[Sequence[int]], ncols: int | None = None):
    """Smith normal form ``D = U A V`` with unimodular ``U``, ``V``.

    Returns ``(D, U, V, Vinv)`` as lists of lists.
    """
    m = len(A)
    n = ncols if ncols is not None else (len(A[0]) if A else 0)
    D = [list(r) for r in A]
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]
    Vi = [[int(i == j) for j in range(n)] for i in range(n)]

    def row_add(i, k, q):  # row_i += q row_k
        D[i] = [x + q * y for x, y in zip(D[i], D[k])]
        U[i] = [x + q * y for x, y in zip(U[i], U[k])]

    def col_add(j, k, q):  # col_j += q col_k
        for r in D:
            r[j] += q * r[k]
        for r in V:
            r[j] += q * r[k]
        Vi[k] = [x - q * y for x, y in zip(Vi[k], Vi[j])]

    def row_swap(i, k):
        D[i], D[k] = D[k], D[i]
        U[i], U[k] = U[k], U[i]

    def col_swap(j, k):
        for r in D:
            r[j], r[k] = r[k], r[j]
        for r in V:
            r[j], r[k] = r[k], r[j]
        Vi[j], Vi[k] = Vi[k], Vi[j]

    for t in range(min(m, n)):
        while True:
            entries = [(abs(D[i][j]), i, j) for i in range(t, m) for j in range(t, n) if D[i][j]]
            if not entries:
                return D, U, V, Vi
            _, i, j = min(entries)
            row_swap(t, i)
            col_swap(t, j)
            p = D[t][t]
            done = True
            for i in range(t + 1, m):
                q = D[i][t] // p
                if q:
                    row_add(i, t, -q)
                done = done and D[i][t] == 0
            for j in range(t + 1, n):
                q = D[t][j] // p
                if q:
                    col_add(j, t, -q)
                done = done and D[t][j] == 0
            if not done:
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n) if D[i][j] % p), None)
            if bad is None:
                break
            row_add(t, bad[0], 1)
        if D[t][t] < 0:
            D[t] = [-x for x in D[t]]
            U[t] = [-x for x in U[t]]
    return D, U, V, Vi


def _matvec(v: Sequence[int], M: Sequence[Sequence[int]]) -> list[int]:
    """Row vector times matrix."""
    return [sum(v[i] * M[i][j] for i in range(len(v))) for j in range(len(M[0]))] if M else []


def adapted_basis(H: Lattice) -> tuple[list[list[int]], list[int]]:
    """Basis ``a_1..a_n`` of Z^n and ``k_1..k_r`` with H = <k_i a_i>."""
    if not H.basis:
        return [[int(i == j) for j in range(H.n)] for i in range(H.n)], []
    D, U, V, Vi = smith(H.basis, H.n)
    ks = [D[i][i] for i in range(min(len(D), H.n)) if D[i][i]]
    return Vi, ks


def separate_abelian(n: int, H: Lattice, g: Sequence[int]) -> Lattice:
    """Finite-index K >= H with g not in K, via an adapted basis.

    Case 1: some adapted coordinate of g is not divisible by the matching
    invariant factor; keep H's factors and add the remaining basis vectors.
    Case 2: otherwise pick the largest j > r with m_j != 0 and use
    a_j^(|m_j|+1) in place of a_j.
    """
    if H.n != n or len(g) != n:
        raise ValidationError("dimension mismatch")
    witness = H.coords(g)
    if witness is not None:
        raise MemberError(f"{tuple(g)} lies in H", witness=witness)
    basis, ks = adapted_basis(H)
    r = len(ks)
    # g = m . basis  =>  m = g . basis^-1 ; basis is Vinv so basis^-1 = V
    D, U, V, Vi = smith(H.basis, n) if H.basis else (None, None, [[int(i == j) for j in range(n)] for i in range(n)], None)
    m = _matvec(list(g), V)
    rows = [[k * x for x in basis[i]] for i, k in enumerate(ks)]
    bad = [i for i in range(r) if m[i] % ks[i]]
    if bad:
        rows += [basis[j] for j in range(r, n)]
    else:
        j = max(i for i in range(r, n) if m[i])
        for i in range(r, n):
            scale = abs(m[i]) + 1 if i == j else 1
            rows.append([scale * x for x in basis[i]])
    K = Lattice.from_rows(rows, n)
    if not (K.is_full_rank and all(K.contains(h) for h in H.basis) and not K.contains(g)):
        raise AssertionError("abelian separation failed its postcondition")
    return K


def _unimodular_completion(delta: Sequence[int]) -> list[list[int]]:
    """Rows ``b_2..b_n`` completing primitive ``delta`` to a basis of Z^n."""
    n = len(delta)
    unit = next((i for i, x in enumerate(delta) if abs(x) == 1), None)
    if unit is not None:
        return [[int(i == j) for j in range(n)] for i in range(n) if i != unit]
    D, U, V, Vi = smith([list(delta)], n)
    return [Vi[i] for i in range(1, n)]


@dataclass(frozen=True)
class TorusCoverSpec:
    n: int
    lattice: Lattice
    delta: Vector
    degree: int

    def __post_init__(self):
        L = self.lattice
        if not L.is_full_rank:
            raise ValidationError("torus cover lattice must have finite index")
        if L.order_of(self.delta) != self.degree:
            raise ValidationError("elevation degree mismatch")
        if L.with_vectors(self.delta).index != 1:
            raise ValidationError("distinguished loop has more than one elevation")


def torus_cover_single_elevation(n: int, delta: Sequence[int], d: int) -> TorusCoverSpec:
    """Index-``d`` sublattice in which ``delta`` has one elevation, of degree ``d``."""
    if len(delta) != n or d < 1:
        raise ValidationError("bad torus cover request")
    if math.gcd(*delta) != 1:
        raise ValidationError(f"{tuple(delta)} is not primitive; extract its root first")
    rows = [[d * x for x in delta]]
    for b in _unimodular_completion(delta):
        rows.append([x + y for x, y in zip(b, delta)])
    L = Lattice.from_rows(rows, n)
    spec = TorusCoverSpec(n, L, tuple(delta), d)
    assert L.index == d
    return spec


def complement_basis(sub: Lattice, sup: Lattice) -> list[Vector]:
    """Vectors M with sup = sub (+) M; requires sub saturated in sup."""
    B = sup.basis
    C = [sup.coords(r) for r in sub.basis]
    if any(c is None for c in C):
        raise ValidationError("sub is not contained in sup")
    if not C:
        return list(B)
    D, U, V, Vi = smith(C, len(B))
    if any(D[i][i] != 1 for i in range(len(C))):
        raise ValidationError("sub is not saturated in sup")
    return [tuple(_matvec(Vi[i], [list(b) for b in B])) for i in range(len(C), len(B))]


def is_saturated_in(sub: Lattice, sup: Lattice) -> bool:
    C = [sup.coords(r) for r in sub.basis]
    if any(c is None for c in C):
        return False
    if not C:
        return True
    D = smith(C, sup.rank)[0]
    return all(D[i][i] == 1 for i in range(len(C)))


def hnf_with_determinant(n: int, det: int) -> Iterator[Lattice]:
    """All full-rank HNF lattices of the given determinant.

    Ordered by number of nonzero off-diagonal entries, then lexicographically
    on the diagonal (largest leading pivot first) and the entries.
    """
    found = []
    for diag in _ordered_factorisations(det, n):
        slots = [(i, j) for i in range(n) for j in range(i + 1, n)]
        ranges = [range(diag[j]) for (i, j) in slots]
        for vals in itertools.product(*ranges):
            rows = [[0] * n for _ in range(n)]
            for i in range(n):
                rows[i][i] = diag[i]
            for (i, j), x in zip(slots, vals):
                rows[i][j] = x
            found.append((sum(1 for x in vals if x), tuple(-d for d in diag), vals, rows))
    found.sort()
    for *_, rows in found:
        yield Lattice(n, tuple(tuple(r) for r in rows))


def _ordered_factorisations(m: int, k: int) -> Iterator[tuple[int, ...]]:
    if k == 1:
        yield (m,)
        return
    for d in range(1, m + 1):
        if m % d == 0:
            for rest in _ordered_factorisations(m // d, k - 1):
                yield (d,) + rest
