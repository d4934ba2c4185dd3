import pytest
import sympy
from hypothesis import assume, given, strategies as st

import oracles
from icesep.errors import ParseError, SearchExhausted, ValidationError
from icesep.gice import (CentExt, FreeProduct, GiceChain, check_chain, confirm_retraction, discriminate,
                         sanov_image)
from icesep.words import Word
from strategies import words

W = Word.parse


def chain(text):
    return GiceChain.from_text(text)


def test_text_roundtrip():
    c = chain("base a,b\ncentext root=a gens=t\nfreeprod c,d\n")
    assert GiceChain.from_text(c.to_text()) == c
    assert c.symbols() == ["a", "b", "t", "c", "d"]
    assert c.counts() == (1, 1)


def test_shape_merges_adjacent_free_products():
    c = GiceChain(("a",), (), [FreeProduct(("c",)), FreeProduct(("d", "e")), CentExt(W("a"), ("t",))])
    assert c.shape() == [("freeprod", 3), ("centext", 1)]


@pytest.mark.parametrize("text", ["base a\nwiggle x", "base a\ncentext gens=t", "base a\ncentext root=a^ gens=t"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        chain(text)


@pytest.mark.parametrize("text,fragment", [
    ("base a,a", "repeated"),
    ("base a,b\nfreeprod a", "fresh"),
    ("base a,b\ncentext root=c gens=t", "unavailable"),
])
def test_illegal_chains(text, fragment):
    ok, problems = check_chain(chain(text))
    assert not ok and any(fragment in p for p in problems)


@pytest.mark.parametrize("S,name,image", [
    (["c", "c.a"], "c", "a"),
    (["c.a^-1"], "c", "b"),
])
def test_discriminate_free_factor(S, name, image):
    c = chain("base a,b\nfreeprod c")
    psi = discriminate(c, [W(s) for s in S])
    assert psi.images[name] == W(image)
    assert confirm_retraction(c, psi, [W(s) for s in S])


def test_discriminate_centralizer():
    c = chain("base a,b\ncentext root=a gens=t")
    psi = discriminate(c, [W("t.b")])
    assert psi.images["t"] == W("a")


def test_discriminate_rejects_abelian_base():
    with pytest.raises(ValidationError, match="abelian"):
        discriminate(chain("base a\nfreeprod c"), [W("c")])


def test_discriminate_exhausts():
    # [t, a] is trivial in the group, so no retraction keeps it
    with pytest.raises(SearchExhausted):
        discriminate(chain("base a,b\ncentext root=a gens=t"), [W("t.b.t^-1.b^-1"), W("t.a.t^-1.a^-1")], bound=2)


@given(words(("a", "b"), max_size=10))
def test_sanov_image_matches_sympy(w):
    M = oracles.sanov_matrix(tuple(w))
    assert sanov_image(w) == tuple(tuple(int(M[i, j]) for j in range(2)) for i in range(2))
    # faithfulness on reduced words
    assert (M == sympy.eye(2)) == (not w)


def _provably_nontrivial(w):
    """Some retraction t -> (ab)^k, c -> ba^2 leaves w nontrivial."""
    for k in (1, 2, 3):
        images = {"a": W("a"), "b": W("b"), "t": W("a.b") ** k, "c": W("b.a^2")}
        if oracles.free_reduce(tuple(w.substitute(images))):
            return True
    return False


@given(st.lists(words(("a", "b", "c", "t"), 1, 6).filter(bool), min_size=1, max_size=3))
def test_retraction_fixes_base_and_respects_relations(S):
    assume(all(_provably_nontrivial(s) for s in S))
    c = chain("base a,b\ncentext root=a.b gens=t\nfreeprod c")
    psi = discriminate(c, S, bound=6)
    assert psi(W("a")) == W("a") and psi(W("b")) == W("b")
    u, t = oracles.sanov_matrix(tuple(psi(W("a.b")))), oracles.sanov_matrix(tuple(psi(W("t"))))
    assert u * t == t * u
    assert all(psi(s) for s in S)
