import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iwiplam.freeprod import (Automorphism, CyclicFactor, FreeFactor, FreeProduct, InfiniteCyclicFactor,
                              TableFactor, conjugacy_solve, cyclic_reduction, factor_automorphism_inverse,
                              is_elliptic, lcm_of_factor_orders, out_conjugator, out_equal, root)

Z3 = FreeProduct([CyclicFactor(3, "t")], ["a", "b"])
F3 = FreeProduct([FreeFactor(["x", "y", "z"])], ["a", "b"])
# S3 as a table: 0 identity, 1..2 rotations, 3..5 reflections
S3_TABLE = [[0, 1, 2, 3, 4, 5], [1, 2, 0, 5, 3, 4], [2, 0, 1, 4, 5, 3],
            [3, 4, 5, 0, 1, 2], [4, 5, 3, 2, 0, 1], [5, 3, 4, 1, 2, 0]]
S3 = FreeProduct([TableFactor(S3_TABLE, [0, 2, 1, 3, 4, 5], {"r": 1, "s": 3})], ["a"])


def words(fp, max_size=8):
    letters = st.tuples(st.sampled_from(fp.generators), st.sampled_from([-2, -1, 1, 2]))
    return st.lists(letters, max_size=max_size).map(fp.word)


@given(words(Z3), words(Z3), words(Z3))
def test_group_axioms_z3(u, v, w):
    assert (u * v) * w == u * (v * w)
    assert (u * u.inverse()).is_identity()
    assert (u * Z3.identity) == u


@given(words(F3), words(F3))
def test_inverse_of_product(u, v):
    assert (u * v).inverse() == v.inverse() * u.inverse()


@given(words(Z3))
def test_parse_round_trip(u):
    assert Z3.parse(str(u)) == u


def test_normal_form_merges_syllables():
    assert str(Z3.parse("t t t")) == "1"
    assert str(Z3.parse("t^2 t^2")) == "t"
    assert F3.parse("x y y^-1 x") == F3.parse("x^2")
    assert str(S3.parse("s s")) == "1"
    assert S3.parse("r r r").is_identity()


def test_parse_rejects_unknown_letters():
    with pytest.raises(ValueError):
        Z3.parse("a q")


def test_free_product_needs_free_rank():
    with pytest.raises(ValueError):
        FreeProduct([CyclicFactor(3, "t")], [])


@given(words(Z3, 6), words(Z3, 6))
def test_conjugacy_solve_finds_conjugators(u, w):
    v = u.conj(w)
    c = conjugacy_solve(u, v)
    assert c is not None
    assert u.conj(c) == v


def test_conjugacy_solve_negative():
    assert conjugacy_solve(Z3.parse("a"), Z3.parse("b")) is None
    assert conjugacy_solve(Z3.parse("t"), Z3.parse("t^2")) is None
    assert conjugacy_solve(Z3.parse("a b"), Z3.parse("a b^-1")) is None


@given(words(Z3, 6))
def test_cyclic_reduction(u):
    c, r = cyclic_reduction(u)
    assert r.conj(c) == u
    assert len(r) < 2 or r.syl[0][0] != r.syl[-1][0]


def test_root_and_ellipticity():
    u = Z3.parse("a t a t")
    assert root(u) == Z3.parse("a t")
    assert is_elliptic(Z3.parse("b t b^-1"))
    assert not is_elliptic(Z3.parse("a t"))
    with pytest.raises(ValueError):
        root(Z3.parse("t"))


def test_factor_groups():
    c = CyclicFactor(5, "u")
    assert c.power(c.gen("u"), 7) == 2
    z = InfiniteCyclicFactor("n")
    assert z.word_length(z.power(z.gen("n"), -4)) == 4
    f = FreeFactor(["x", "y"])
    w = f.mul(f.gen("x"), f.gen("y"))
    assert f.conjugator(w, f.mul(f.gen("y"), f.gen("x"))) is not None


PHI = Automorphism.from_strings(Z3, {"a": "b t", "b": "a b"}, name="phi")


def test_automorphism_inverse_and_power():
    inv = PHI.inverse()
    for g in Z3.generators:
        assert inv(PHI(Z3.gen(g))) == Z3.gen(g)
        assert PHI(inv(Z3.gen(g))) == Z3.gen(g)
    assert (PHI ** 2).images["a"] == Z3.parse("a b t")
    assert (PHI ** -1) * PHI == Automorphism.identity(Z3)


@given(words(Z3, 6))
def test_automorphism_is_a_homomorphism(u):
    v = Z3.parse("a t b")
    assert PHI(u * v) == PHI(u) * PHI(v)


def test_non_factor_preserving_map_rejected():
    with pytest.raises(ValueError):
        Automorphism.from_strings(Z3, {"t": "a"})


def test_factor_data_records_conjugators():
    conj_t = Automorphism.from_strings(Z3, {"a": "t a t^-1"})
    (j, c, theta), = conj_t.factor_data()
    assert j == 0 and theta["t"] == 1


def test_factor_automorphism_inverse():
    f = F3.factors[0]
    images = {"x": f.gen("x"), "y": f.mul(f.gen("y"), f.gen("x")), "z": f.gen("z")}
    inv = factor_automorphism_inverse(f, images)
    assert f.evaluate(f.as_word(inv["y"]), images) == f.gen("y")


def test_out_equality():
    inner = Automorphism.inner(Z3.parse("a t"))
    assert out_equal(inner * PHI, PHI)
    assert out_conjugator(inner * PHI, PHI) is not None
    assert not out_equal(PHI, PHI ** 2)
    conj_t = Automorphism.from_strings(Z3, {"a": "t a t^-1"})
    assert not out_equal(conj_t, Automorphism.identity(Z3))
    assert out_equal(conj_t ** 3, Automorphism.identity(Z3))


@settings(max_examples=30)
@given(words(F3, 5))
def test_inner_automorphisms_are_out_trivial(w):
    assert out_equal(Automorphism.inner(w), Automorphism.identity(F3))


def test_lcm_of_orders():
    assert lcm_of_factor_orders(Z3) == 3
    assert lcm_of_factor_orders(S3) == 6
