"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

from __future__ import annotations

import itertools
import math
import random
import time
from fractions import Fraction

import pytest
import sympy

import oracles
from icesep.effsep import DefiningPolys, mod_p_separate, quotient_growth, sanov
from icesep.gice import CentExt, FreeProduct, GiceChain, check_chain, confirm_retraction, discriminate
from icesep.hn import hn_check
from icesep.lattice import Lattice, separate_abelian, torus_cover_single_elevation
from icesep.precover import separate
from icesep.stallings import core_graph, hall_complete
from icesep.tower import load_tower
from icesep.words import Word


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def random_word(rng, letters, lo, hi):
    while True:
        w = Word.parse(".".join(f"{rng.choice(letters)}^{rng.choice((1, -1))}"
                                for _ in range(rng.randint(lo, hi))) or "1")
        if len(w) >= lo:
            return w


def test_golden_example_one(data_dir, report):
    start = time.perf_counter()
    prob = load_tower(data_dir / "ex1.tower")
    cert = separate(prob.tower, prob.subgroup, prob.element, choices=prob.choices)
    elapsed = time.perf_counter() - start
    fp, ce = cert.chain.counts()
    final = cert.stages["complete"]
    y_degrees = sorted(len(c) for c in final.y_components())
    t_degrees = sorted(p.degree for p in final.pieces)
    problems = oracles.check_tower_certificate(cert) + check_chain(cert.chain)[1]
    ok = (not problems and fp >= 2 and ce >= 3 and 3 in y_degrees and 4 in t_degrees
          and cert.index == 6 and elapsed < 5)
    report(1, ok, f"index={cert.index} fp={fp} ce={ce} Y={y_degrees} T={t_degrees} "
                  f"problems={problems} time={elapsed:.2f}s")
    assert ok


def test_golden_example_two(data_dir, report):
    start = time.perf_counter()
    prob = load_tower(data_dir / "ex2.tower")
    cert = separate(prob.tower, prob.subgroup, prob.element, choices=prob.choices)
    elapsed = time.perf_counter() - start
    shape = cert.chain.shape()
    expected = [("centext", 1), ("centext", 1), ("freeprod", 5), ("centext", 1), ("centext", 1), ("centext", 1)]
    kinds_ok = [k for k, _ in shape] == [k for k, _ in expected] and shape[2] == ("freeprod", 5)
    problems = oracles.check_tower_certificate(cert) + check_chain(cert.chain)[1]
    ok = not problems and cert.index == 8 and kinds_ok and elapsed < 10
    report(2, ok, f"index={cert.index} shape={shape} problems={problems} time={elapsed:.2f}s")
    assert ok


def test_free_group_suite(report):
    rng = random.Random(20240601)
    start = time.perf_counter()
    pairs = disagreements = failures = deep = 0
    while pairs < 200:
        letters = ["a", "b"] if rng.random() < 0.5 else ["a", "b", "c"]
        H = [random_word(rng, letters, 1, 4) for _ in range(rng.randint(1, 3))]
        g = random_word(rng, letters, 1, 6)
        core = core_graph(H, letters)
        gens = [tuple(h) for h in H]
        brute = oracles.brute_member(gens, tuple(g))
        if core.contains(g) != brute:
            # eight factors may be too few; settle it with a deeper search
            deep += 1
            brute = any(oracles.brute_member(gens, tuple(g), factors=k) for k in (12, 16))
            if core.contains(g) != brute:
                disagreements += 1
        if brute:
            continue
        pairs += 1
        cover = hall_complete(core, g, letters).cover
        perms = {x: list(cover.permutation(x)) for x in letters}
        if not (cover.is_complete and all(oracles.act(perms, 0, h) == 0 for h in H)
                and oracles.act(perms, 0, g) != 0):
            failures += 1
    elapsed = time.perf_counter() - start
    ok = disagreements == 0 and failures == 0 and elapsed < 60
    report(3, ok, f"pairs={pairs} disagreements={disagreements} deeper-search={deep} failures={failures} time={elapsed:.2f}s")
    assert ok


def test_abelian_suite(report):
    rng = random.Random(7)
    failures = done = 0
    while done < 100:
        n = rng.randint(1, 4)
        k = rng.randint(0, n)
        rows = [[rng.randint(-5, 5) for _ in range(n)] for _ in range(k)]
        if k and sympy.Matrix(rows).rank() < k:
            continue
        g = [rng.randint(-6, 6) for _ in range(n)]
        if oracles.lattice_member(rows, g):
            continue
        done += 1
        K = separate_abelian(n, Lattice.from_rows(rows, n), g)
        basis = [list(r) for r in K.basis]
        det = oracles.lattice_index(basis) if len(basis) == n else 0
        if not (det != 0 and all(oracles.lattice_member(basis, h) for h in rows)
                and not oracles.lattice_member(basis, g) and det == K.index):
            failures += 1
    report(4, failures == 0, f"instances={done} failures={failures}")
    assert failures == 0


def _fraction_inverse(rows):
    inv = sympy.Matrix(rows).inv()
    return [[oracles.as_fraction(inv[i, j]) for j in range(inv.cols)] for i in range(inv.rows)]


def _in_rows(inv, v):
    n = len(inv)
    return all((sum(Fraction(v[i]) * inv[i][j] for i in range(n))).denominator == 1 for j in range(n))


def test_torus_cover_contract(report):
    violations = cases = 0
    for n in (2, 3):
        for delta in itertools.product(range(-3, 4), repeat=n):
            if math.gcd(*delta) != 1:
                continue
            for d in range(1, 7):
                cases += 1
                L = torus_cover_single_elevation(n, delta, d).lattice
                rows = [list(r) for r in L.basis]
                inv = _fraction_inverse(rows)
                ok = (oracles.lattice_index(rows) == d
                      and oracles.gcd_of_maximal_minors(rows + [list(delta)], n) == 1
                      and _in_rows(inv, [d * x for x in delta])
                      and not any(_in_rows(inv, [k * x for x in delta]) for k in range(1, d)))
                violations += not ok
    report(5, violations == 0, f"cases={cases} violations={violations}")
    assert violations == 0


def _apply(images, w):
    out = []
    for x, s in w:
        img = list(images[x]) if s > 0 else list(oracles.inverse(tuple(images[x])))
        out += img
    return oracles.free_reduce(out)


def _random_chain(rng):
    symbols = ["a", "b"]
    moves = []
    fresh = iter("cdefghijk")
    for _ in range(rng.randint(1, 3)):
        if rng.random() < 0.5:
            gens = tuple(next(fresh) for _ in range(rng.randint(1, 2)))
            moves.append(FreeProduct(gens))
        else:
            root = random_word(rng, symbols, 1, 3)
            gens = tuple(next(fresh) for _ in range(rng.randint(1, 2)))
            moves.append(CentExt(root, gens))
        symbols += list(gens)
    return GiceChain(("a", "b"), (), moves), symbols


def _random_retraction(rng, chain):
    images = {"a": (("a", 1),), "b": (("b", 1),)}
    for m in chain.moves:
        if isinstance(m, FreeProduct):
            for x in m.gens:
                images[x] = tuple(random_word(rng, ["a", "b"], 1, 3))
        else:
            root = _apply(images, m.root)
            for x in m.gens:
                e = rng.choice((1, 2, -1, 3))
                images[x] = oracles.free_reduce(list(root) * e if e > 0 else list(oracles.inverse(root)) * -e)
    return images


def _is_homomorphism(chain, images):
    for m in chain.moves:
        if isinstance(m, CentExt):
            u = oracles.sanov_matrix(_apply(images, m.root))
            ts = [oracles.sanov_matrix(_apply(images, Word.gen(t))) for t in m.gens]
            if any(u * t != t * u for t in ts) or any(s * t != t * s for s, t in itertools.combinations(ts, 2)):
                return False
    return True


def test_discrimination_suite(report):
    rng = random.Random(99)
    failures = 0
    for _ in range(50):
        chain, symbols = _random_chain(rng)
        S = []
        while len(S) < rng.randint(1, 4):
            s = random_word(rng, symbols, 1, 6)
            # keep s only if some retraction already shows it is nontrivial
            if any(_apply(_random_retraction(rng, chain), s) for _ in range(20)):
                S.append(s)
        psi = discriminate(chain, S, bound=8)
        images = {k: tuple(v) for k, v in psi.images.items()}
        ok = (images["a"] == (("a", 1),) and images["b"] == (("b", 1),)
              and _is_homomorphism(chain, images)
              and all(_apply(images, s) for s in S)
              and all(oracles.sanov_matrix(_apply(images, s)) != sympy.eye(2) for s in S)
              and confirm_retraction(chain, psi, S))
        failures += not ok
    report(6, failures == 0, f"chains=50 failures={failures}")
    assert failures == 0


def test_quantitative_separation(report):
    start = time.perf_counter()
    rep = sanov()
    polys = DefiningPolys.parse(["X21"], 2)
    cert = mod_p_separate(rep, polys, Word.parse("b"))
    order = oracles.gl_order_by_count(2, 3)
    family = [Word.parse(f"b.a^{k}") for k in range(0, 201)]
    table = quotient_growth(rep, polys, family)
    elapsed = time.perf_counter() - start
    worst = max(abs(r) for r in table.residuals)
    ok = (cert.q_value == 2 and cert.modulus == 3 and cert.order_bound == 48 == order
          and math.isfinite(table.slope) and len(table.residuals) == len(family) and elapsed < 10)
    report(7, ok, f"Q={cert.q_value} p={cert.modulus} |Q|<={cert.order_bound} slope={table.slope:.4f} "
                  f"max|residual|={worst:.3e} time={elapsed:.2f}s")
    assert ok


def test_hanna_neumann_suite(report):
    rng = random.Random(5)
    start = time.perf_counter()
    violations = 0
    for _ in range(100):
        letters = ["a", "b"] if rng.random() < 0.6 else ["a", "b", "c"]
        U = [random_word(rng, letters, 1, 4) for _ in range(rng.randint(1, 3))]
        W = [random_word(rng, letters, 1, 4) for _ in range(rng.randint(1, 3))]
        violations += not hn_check(U, W, letters).holds
    # exponent-sum parity kernel: index 2, normal, Schreier rank 2*(2-1)+1
    index = 2
    rank = index * (2 - 1) + 1
    expected_left = index * (rank - 1)
    expected_right = (rank - 1) ** 2
    U = [Word.parse(x) for x in ("a^2", "b^2", "a.b")]
    rep = hn_check(U, U)
    elapsed = time.perf_counter() - start
    equality = rep.left == expected_left == 4 and rep.right == expected_right == 4
    ok = violations == 0 and equality and elapsed < 30
    report(8, ok, f"pairs=100 violations={violations} self-intersection {rep.left}={rep.right} "
                  f"time={elapsed:.2f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
