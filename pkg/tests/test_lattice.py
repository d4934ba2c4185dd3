import itertools
import math

import pytest
import sympy
from hypothesis import assume, given, strategies as st

import oracles
from icesep.errors import MemberError, ValidationError
from icesep.lattice import (Lattice, complement_basis, hnf, hnf_with_determinant, is_saturated_in,
                            separate_abelian, smith, torus_cover_single_elevation)
from strategies import vectors


def test_hnf_example():
    L = hnf([[2, 4], [0, 6], [4, 2]], 2)
    assert L.index == 12 == oracles.lattice_index([list(r) for r in L.basis])
    assert L.contains([2, 4]) and not L.contains([1, 0])


def test_lattice_text_roundtrip():
    L = Lattice.from_rows([[3, 1, 0], [0, 2, 5]], 3)
    assert Lattice.from_text(L.to_text(), 3) == L


@given(st.lists(vectors(3), min_size=1, max_size=4), vectors(3))
def test_membership_agrees_with_rational_solve(rows, v):
    L = Lattice.from_rows(rows, 3)
    basis = [list(r) for r in L.basis]
    assert L.contains(v) == oracles.lattice_member(basis, v)
    for r in rows:
        assert L.contains(r)


@given(st.lists(vectors(3, -4, 4), min_size=3, max_size=3))
def test_smith_diagonalizes(rows):
    D, U, V, Vi = smith(rows, 3)
    M = sympy.Matrix(rows)
    assert sympy.Matrix(U) * M * sympy.Matrix(V) == sympy.Matrix(D)
    diag = [D[i][i] for i in range(3)]
    nonzero = [x for x in diag if x]
    assert all(b % a == 0 for a, b in zip(nonzero, nonzero[1:]))
    assert math.prod(abs(x) for x in diag) == abs(M.det())


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(vectors(n, -5, 5), max_size=n), vectors(n))))
def test_abelian_separation(data):
    n, rows, g = data
    assume(not rows or sympy.Matrix(rows).rank() == len(rows))
    H = Lattice.from_rows(rows, n)
    if oracles.lattice_member(rows, g):
        with pytest.raises(MemberError):
            separate_abelian(n, H, g)
        return
    K = separate_abelian(n, H, g)
    basis = [list(r) for r in K.basis]
    assert len(basis) == n and oracles.lattice_index(basis) == K.index
    assert all(oracles.lattice_member(basis, h) for h in rows)
    assert not oracles.lattice_member(basis, g)


def test_abelian_separation_example():
    # <(2,0)> in Z^2 away from (1,0): kept coordinate, index 2
    K = separate_abelian(2, Lattice.from_rows([[2, 0]], 2), [1, 0])
    assert K.index == 2 and K.contains([0, 1])


@given(st.integers(2, 3).flatmap(lambda n: st.tuples(st.just(n), vectors(n, -4, 4))), st.integers(1, 8))
def test_torus_cover_property(data, d):
    n, delta = data
    assume(any(delta) and math.gcd(*delta) == 1)
    L = torus_cover_single_elevation(n, delta, d).lattice
    rows = [list(r) for r in L.basis]
    assert oracles.lattice_index(rows) == d
    assert oracles.gcd_of_maximal_minors(rows + [list(delta)], n) == 1
    assert oracles.lattice_member(rows, [d * x for x in delta])
    assert L.order_of(delta) == d


def test_torus_cover_rejects_non_primitive():
    with pytest.raises(ValidationError):
        torus_cover_single_elevation(2, (2, 4), 3)


def test_complement_and_saturation():
    sub = Lattice.from_rows([[1, 0, 0]], 3)
    sup = Lattice.from_rows([[1, 0, 0], [0, 2, 0], [0, 0, 3]], 3)
    comp = complement_basis(sub, sup)
    assert len(comp) == 2
    assert Lattice.from_rows([[1, 0, 0], *comp], 3) == sup
    assert is_saturated_in(sub, sup)
    assert not is_saturated_in(Lattice.from_rows([[2, 0, 0]], 3), sup)


@pytest.mark.parametrize("n,det", [(2, 4), (2, 6), (3, 4)])
def test_hnf_enumeration_counts(n, det):
    # number of index-det sublattices of Z^n: sum over d1*...*dn = det of prod d_i^(i-1)
    expected = 0
    for ds in itertools.product(range(1, det + 1), repeat=n):
        if math.prod(ds) == det:
            expected += math.prod(d ** i for i, d in enumerate(ds))
    got = list(hnf_with_determinant(n, det))
    assert len(got) == len(set(got)) == expected
    assert all(L.index == det for L in got)
