import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import coset_oracle, point_stabilizer

from iwiplam.freeprod import Automorphism
from iwiplam.graphs import build_omap, format_path
from iwiplam.stabilizer import (NoConvergence, _extrapolate, carries_test, classify_growth,
                                commensuration_search, commute_test, commute_witness, covering_complete,
                                finite_order_search, invariant_subgraph_power, iwip_evidence,
                                nperiodic_search, pf_spectrum_gap, second_representative, sigma,
                                snap_to_grid, stab_test, subgroup_graph)

GOLDEN = (1 + math.sqrt(5)) / 2


# --- stabilizer membership -------------------------------------------------

@pytest.mark.parametrize("name", ["phi", "id"])
def test_z3_stabilizer_members(z3, z3_sampler, name):
    v = stab_test(z3.autos[name], z3_sampler, 8)
    assert v.in_stabilizer and v.checked > 0
    assert v.verdict == "in-stabilizer (evidence at L=8)"


@pytest.mark.parametrize("name", ["flip", "conj_t"])
def test_z3_rejections_carry_witness(z3, z3_sampler, name):
    v = stab_test(z3.autos[name], z3_sampler, 8)
    assert not v.in_stabilizer and v.verdict == "rejected"
    assert set(v.witness) == {"window", "trimmed_image"}
    assert not z3_sampler.is_leaf_segment(z3.graph.parse_path(v.witness["trimmed_image"]))


@pytest.mark.parametrize("name,expected", [("y_to_yx", True), ("z_to_zx", True), ("conj_yz_by_x", True),
                                           ("swap_xy", False)])
def test_f3_stabilizer(f3, f3_sampler, name, expected):
    assert stab_test(f3.autos[name], f3_sampler, 8).in_stabilizer is expected


def test_inverse_of_phi_in_stabilizer(z3, z3_sampler):
    assert stab_test(z3.autos["phi"].inverse(), z3_sampler, 8).in_stabilizer


# --- stretch homomorphism ---------------------------------------------------

def test_sigma_values(z3, z3_sampler):
    phi = z3.autos["phi"]
    r = sigma(phi, z3_sampler)
    assert abs(r.value - GOLDEN) < 1e-9 and r.power == 1 and r.crosscheck_ok
    assert abs(sigma(phi.inverse(), z3_sampler).value - 1 / GOLDEN) < 1e-9
    assert sigma(z3.autos["id"], z3_sampler).value == 1.0


def test_sigma_inner_twist_invariance(z3, z3_sampler):
    phi = z3.autos["phi"]
    twisted = Automorphism.inner(z3.fp.parse("a t b")) * phi
    assert abs(sigma(twisted, z3_sampler).value - sigma(phi, z3_sampler).value) < 1e-9


def test_second_representative_differs_on_subdivided_rose(z3, z3_pair):
    graph, _, _, s = z3_pair
    phi = z3.autos["phi"]
    h1, h2 = build_omap(graph, graph, phi), second_representative(phi, graph)
    assert [format_path(p) for p in h1.edge_images] != [format_path(p) for p in h2.edge_images]
    assert h2.realizes(phi)
    assert sigma(phi, s, h1).value == sigma(phi, s, h2).value


def test_extrapolate_periodic_defect():
    lam = GOLDEN
    den = [lam ** k for k in range(30)]
    num = [2.5 * lam ** k + (1 if k % 2 else -1) for k in range(30)]
    value, period, spread = _extrapolate(num, den, lam)
    assert abs(value - 2.5) < 1e-9 and period == 2


def test_sigma_reports_no_convergence(z3, z3_sampler):
    with pytest.raises(NoConvergence):
        sigma(z3.autos["phi"], z3_sampler, tol=0.0, max_edges=30, kmin=3)


def test_snap_to_grid():
    assert snap_to_grid(GOLDEN ** 3, GOLDEN) == (3, pytest.approx(0, abs=1e-12))
    n, res = snap_to_grid(2.0, GOLDEN)
    assert n == 1 and res > 0.3


# --- kernel analysis ----------------------------------------------------------

def test_kernel_analysis(z3):
    g = z3.graph
    ct = z3.autos["conj_t"]
    rep = classify_growth(ct, build_omap(g, g, ct))
    assert (rep.growth, rep.inner, rep.finite_order, rep.in_kernel_subgroup) == ("NEG", False, 3, True)
    fl = z3.autos["flip"]
    assert classify_growth(fl, build_omap(g, g, fl)).finite_order == 2
    ident = z3.autos["id"]
    r = classify_growth(ident, build_omap(g, g, ident))
    assert r.inner and r.finite_order == 1
    r = classify_growth(z3.autos["phi"], z3.maps["phi"])
    assert r.growth == "EG" and r.finite_order is None and abs(r.eigenvalue - GOLDEN) < 1e-9


def test_finite_order_search_bound(z3):
    assert finite_order_search(z3.autos["conj_t"], 2) is None
    assert finite_order_search(z3.autos["conj_t"], 3) == 3
    assert finite_order_search(z3.autos["phi"], 12) is None


def test_factor_tuple_of_f3_automorphisms(f3):
    g = f3.graph
    rep = classify_growth(f3.autos["conj_yz_by_x"], build_omap(g, g, f3.autos["conj_yz_by_x"]))
    assert rep.factor_tuple[0]["inner"]
    rep = classify_growth(f3.autos["y_to_yx"], build_omap(g, g, f3.autos["y_to_yx"]))
    assert not rep.factor_tuple[0]["inner"] and not rep.in_kernel_subgroup


# --- N-periodic paths -----------------------------------------------------------

def test_nperiodic_for_phi(z3):
    rep = nperiodic_search(z3.maps["phi"], maxlen=4, maxperiod=6)
    assert rep.paths == [("a b[t]a^-1[t^2]b^-1", 2)]
    assert rep.indivisible == rep.paths


def test_nperiodic_for_conjugation(z3):
    g = z3.graph
    rep = nperiodic_search(build_omap(g, g, z3.autos["conj_t"]), maxlen=2, maxperiod=6)
    periods = dict(rep.paths)
    assert periods["a"] == 1 and periods["a b"] == 3
    assert rep.capped and rep.max_concatenation == 50


# --- subgroup graphs ----------------------------------------------------------------

SUBGROUPS = [
    (["a", "b", "t"], 1),
    (["b", "t", "a b a^-1", "a t a^-1", "a^2"], 2),
    (["a", "t", "b a b^-1", "b t b^-1", "b^2"], 2),
    (["t", "a", "b^3", "b a b^-1", "b^2 a b^-2", "b t b^-1", "b^2 t b^-2"], 3),
    (["a", "b"], None),
    (["a t", "b"], None),
]


@pytest.mark.parametrize("gens,index", SUBGROUPS)
def test_covering_index(z3, gens, index):
    sg = subgroup_graph(z3.graph, [z3.fp.parse(x) for x in gens])
    assert covering_complete(sg) == index


@pytest.mark.parametrize("gens", [g for g, _ in SUBGROUPS])
def test_covering_index_matches_coset_enumeration(z3, gens):
    sg = subgroup_graph(z3.graph, [z3.fp.parse(x) for x in gens])
    assert covering_complete(sg) == coset_oracle(gens)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5).flatmap(lambda n: st.tuples(st.permutations(list(range(n))),
                                                      st.permutations(list(range(n))))))
def test_covering_index_of_point_stabilizers(z3, pair):
    a, b = (tuple(p) for p in pair)
    n = len(a)
    gens, orbit = point_stabilizer({"t": tuple(range(n)), "a": a, "b": b})
    sg = subgroup_graph(z3.graph, [z3.fp.parse(x) for x in gens])
    assert covering_complete(sg) == orbit


def test_carrying(z3, z3_sampler):
    whole = subgroup_graph(z3.graph, [z3.fp.parse(x) for x in ["a", "b", "t"]])
    assert carries_test(whole, z3_sampler, 6).carries
    free = subgroup_graph(z3.graph, [z3.fp.parse(x) for x in ["a", "b"]])
    v = carries_test(free, z3_sampler, 6)
    assert v.verdict == "cannot carry" and not v.carries


# --- centralizers ------------------------------------------------------------------

def test_commute_and_witness(z3, f3):
    phi = z3.autos["phi"]
    assert commute_test(phi, phi ** 2)
    assert not commute_test(phi, z3.autos["flip"])
    w = commute_witness(f3.autos["swap_xy"], f3.autos["phi"])
    assert w is not None and w["psi_phi"] != w["phi_psi"]
    assert commute_witness(f3.autos["y_to_yx"], f3.autos["phi"]) is None


def test_commensuration(z3):
    phi = z3.autos["phi"]
    assert commensuration_search(phi ** 2, phi) == (1, 1)
    assert commensuration_search(z3.autos["flip"], phi) is None


def test_invariant_subgraph_power(three_loop):
    assert invariant_subgraph_power(three_loop.maps["c_to_ct"], ["c"]) == 3
    assert invariant_subgraph_power(three_loop.maps["h"], ["c"]) == 1
    with pytest.raises(ValueError):
        invariant_subgraph_power(three_loop.maps["h"], ["a"])


# --- discreteness ---------------------------------------------------------------

def test_pf_spectrum_gap():
    gap = pf_spectrum_gap(2, 2)
    assert len(gap.values) == 13 and gap.matrices == 38
    assert abs(gap.min_gap - 0.05648117594106372) < 1e-12
    assert GOLDEN in [pytest.approx(v) for v in gap.values]
    with pytest.raises(ValueError):
        pf_spectrum_gap(3, 9, limit=1000)


# --- irreducibility evidence -------------------------------------------------------

def test_iwip_evidence_finds_invariant_factor(z3, f3):
    ev = iwip_evidence(z3.autos["phi"], z3.maps["phi"], bound=6)
    assert ev.primitive and ev.no_invariant_subgraph
    # phi(a) = b t and phi(b t) = a b t: <a, b t> is invariant and complements the factor
    assert not ev.no_invariant_factor and ev.factor_witness == {"a": "a", "b": "b t"}
    assert not ev.passed
    ev = iwip_evidence(f3.autos["phi"], f3.maps["phi"], bound=6)
    assert ev.factor_witness == {"a": "a", "b": "b x"}


def test_invariant_factor_witness_is_invariant(z3):
    phi = z3.autos["phi"]
    fp = z3.fp
    a, bt = fp.parse("a"), fp.parse("b t")
    assert phi(a) == bt and phi(bt) == a * bt
