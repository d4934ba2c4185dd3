import pytest
from hypothesis import given

from icesep.errors import ParseError, ValidationError
from icesep.tower import (AmalgamNormalForm, Extension, IceTower, abelianize, normalize_chain,
                          oracle_membership, parse_tower)
from icesep.words import Word
from strategies import words

W = Word.parse
CENT_A = IceTower.from_chain(["a", "b"], [("a", ["t"])])


def test_alphabet_and_lookup():
    t = IceTower.from_chain(["a", "b"], [("a", ["t"]), ("b", ["s", "r"])])
    assert t.alphabet == ("a", "b", "t", "s", "r")
    assert t.ext_of("r") == (1, 1) and t.ext_of("a") is None
    assert t.height == 2 and normalize_chain(t).height == 1


def test_normalize_chain_assigns_levels():
    raw = IceTower("a b".split(), ((Extension(W("a"), ("t",)),), (Extension(W("b"), ("s",)),)))
    norm = normalize_chain(raw)
    assert norm.height == 1 and len(norm.levels[0]) == 2
    assert normalize_chain(norm) == norm
    stacked = IceTower.from_chain(["a", "b"], [("a", ["t"]), ("t.b", ["s"])])
    assert normalize_chain(stacked).height == 2


@pytest.mark.parametrize("exts", [
    [("a^2", ["t"])],                      # proper power
    [("a", ["t"]), ("b.a.b^-1", ["s"])],   # conjugate roots
    [("1", ["t"])],                        # trivial root
    [("z", ["t"])],                        # root outside the group
    [("a", ["b"])],                        # name clash
])
def test_invalid_towers(exts):
    with pytest.raises(ValidationError):
        IceTower.from_chain(["a", "b"], exts)


def test_parse_roundtrip(data_dir):
    text = (data_dir / "ex2.tower").read_text()
    prob = parse_tower(text)
    assert prob.tower == CENT_A
    assert len(prob.subgroup) == 5 and prob.element == W("b")
    assert prob.choices[("Y", 0)] == [W("a^-1.b.a.b^-1.a"), W("a^-1.b^3.a")]
    assert parse_tower(prob.tower.to_text()).tower == prob.tower


@pytest.mark.parametrize("text", [
    "extend root=a gens=t",
    "free a b\nextend gens=t",
    "free a b\nsubgroup a.z",
    "free a b\nfrobnicate",
    "free a b\nchoose ypiece x loops a",
    "free a b\nextend root=a^2 gens=t",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_tower(text)


def test_normal_form_examples():
    nf = AmalgamNormalForm(CENT_A)
    assert nf.is_trivial(W("t.a.t^-1.a^-1"))
    assert nf.is_trivial(W("b.t.a^2.t^-1.a^-2.b^-1"))
    assert not nf.is_trivial(W("t.b.t^-1.b^-1"))
    assert nf.equal(W("a.t"), W("t.a"))


def _retract(w, k):
    return Word.parse(str(w).replace("t", "z")).substitute({"z": W("a") ** k, "a": W("a"), "b": W("b")})


@given(words(("a", "b", "t"), max_size=10))
def test_normal_form_against_retractions(w):
    """Retractions t -> a^k are homomorphisms; any nontrivial image proves nontriviality."""
    nf = AmalgamNormalForm(CENT_A)
    images = [_retract(w, k) for k in range(-3, 4)]
    if nf.is_trivial(w):
        assert not any(images)
    if any(images):
        assert not nf.is_trivial(w)


@given(words(("a", "t"), max_size=10))
def test_normal_form_abelian_tower(w):
    nf = AmalgamNormalForm(IceTower.from_chain(["a"], [("a", ["t"])]))
    assert nf.is_trivial(w) == (w.exponent_sum("a") == 0 and w.exponent_sum("t") == 0)


@given(words(("a", "b", "t"), max_size=8), words(("a", "b", "t"), max_size=8))
def test_normal_form_is_conjugation_invariant(w, x):
    nf = AmalgamNormalForm(CENT_A)
    assert nf.is_trivial(w) == nf.is_trivial(x * w * x.inverse())


def test_abelianize():
    assert abelianize(CENT_A, W("a^2.t^-1.b.a^-1")) == (1, 1, -1)


def test_oracle_membership():
    H = [W("a^2"), W("b^2"), W("t^-1.a^2.t"), W("t^-1.b^2.t")]
    v = oracle_membership(CENT_A, H, W("b"))
    assert v.status == "non-member-certified" and "abelianization" in v.reason
    v = oracle_membership(CENT_A, H, W("t^-1.b^2.a^2.t"))
    assert v.is_member
    prod = Word()
    for i, s in v.witness:
        prod = prod * (H[i] if s > 0 else H[i].inverse())
    assert AmalgamNormalForm(CENT_A).equal(prod, W("t^-1.b^2.a^2.t"))
    v = oracle_membership(CENT_A, [W("a.b"), W("t")], W("b.a"), bound=3)
    assert v.status == "non-member-certified" and "3" in v.reason
    assert oracle_membership(CENT_A, [W("a.b"), W("t"), W("b.t")], W("b.a"), bound=30, node_cap=50).status == "unknown"
