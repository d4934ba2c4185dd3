"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import sympy


def free_reduce(letters):
    out = []
    for x, s in letters:
        if out and out[-1] == (x, -s):
            out.pop()
        else:
            out.append((x, s))
    return tuple(out)


def inverse(w):
    return tuple((x, -s) for x, s in reversed(w))


def products(gens, depth):
    """Freely reduced products of at most ``depth`` factors from ``gens`` and inverses."""
    factors = [tuple(g) for g in gens] + [inverse(tuple(g)) for g in gens]
    seen = {()}
    frontier = {()}
    for _ in range(depth):
        nxt = set()
        for w in frontier:
            for f in factors:
                p = free_reduce(w + f)
                if p not in seen:
                    seen.add(p)
                    nxt.add(p)
        frontier = nxt
    return seen


def brute_member(gens, w, factors=8):
    """Whether ``w`` is a product of at most ``factors`` generators (meet in the middle)."""
    half = products(gens, factors // 2)
    rest = half if factors % 2 == 0 else products(gens, factors - factors // 2)
    w = tuple(w)
    return any(free_reduce(inverse(x) + w) in rest for x in half)


def lattice_member(rows, v):
    """Exact rational solve; rows must be linearly independent."""
    rows = [list(r) for r in rows]
    if not rows:
        return not any(v)
    A = sympy.Matrix(rows).T
    b = sympy.Matrix(list(v))
    try:
        sol, params = A.gauss_jordan_solve(b)
    except ValueError:
        return False
    if params.shape[0]:
        raise ValueError("rows are dependent")
    return all(x.is_integer for x in sol)


def lattice_index(rows):
    return abs(sympy.Matrix([list(r) for r in rows]).det())


def gcd_of_maximal_minors(rows, n):
    M = sympy.Matrix([list(r) for r in rows])
    g = 0
    for idx in itertools.combinations(range(M.rows), n):
        g = math.gcd(g, int(M.extract(list(idx), list(range(n))).det()))
    return g


def gl_order_by_count(n, p):
    count = 0
    for entries in itertools.product(range(p), repeat=n * n):
        M = sympy.Matrix(n, n, list(entries))
        if M.det() % p:
            count += 1
    return count


SANOV = {"a": sympy.Matrix([[1, 2], [0, 1]]), "b": sympy.Matrix([[1, 0], [2, 1]])}


def sanov_matrix(w):
    M = sympy.eye(2)
    for x, s in w:
        M = M * (SANOV[x] if s > 0 else SANOV[x].inv())
    return M


def orbit_size(perms, start=0):
    seen, stack = {start}, [start]
    while stack:
        v = stack.pop()
        for p in perms.values():
            for w in (p[v], p.index(v)):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return len(seen)


def act(perms, point, w):
    for x, s in w:
        p = perms[x]
        point = p[point] if s > 0 else p.index(point)
    return point


def as_fraction(x):
    return Fraction(int(sympy.Rational(x).p), int(sympy.Rational(x).q))


def check_tower_certificate(cert):
    """Independent re-check of a height-1 certificate through its permutations."""
    perms = {k: list(v) for k, v in cert.action.perms.items()}
    problems = []
    if orbit_size(perms) != cert.index:
        problems.append("cover not connected")
    for h in cert.subgroup:
        if act(perms, 0, h) != 0:
            problems.append(f"{h} outside K")
    if act(perms, 0, cert.element) == 0:
        problems.append("element inside K")
    for ext in cert.tower.extensions:
        for t in ext.gens:
            rel = list(ext.root) + [(t, 1)] + list(ext.root.inverse()) + [(t, -1)]
            if any(act(perms, v, rel) != v for v in range(cert.index)):
                problems.append(f"[{ext.root},{t}] acts nontrivially")
    return problems
