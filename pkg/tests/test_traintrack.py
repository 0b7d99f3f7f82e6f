import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iwiplam.fixtures import three_loop_example, z3_example
from iwiplam.graphs import build_omap, map_from_strings
from iwiplam.traintrack import (ReducibleMatrix, cancellation_constants, classify_turn, is_degenerate,
                                is_irreducible, make_turn, path_turns, pf_data, pf_metric, primitivity_exponent, stratify,
                                transition_matrix, turn_image, verify_traintrack)

EX = z3_example()
F = EX.maps["phi"]
G = EX.graph
GOLDEN = (1 + math.sqrt(5)) / 2


def test_transition_matrix_of_golden_map():
    tm = transition_matrix(F)
    assert tm.labels == ["a", "b"]
    assert tm.matrix == [[0, 1], [1, 1]]
    assert tm.irreducible and tm.primitive


def test_pf_data_golden():
    pf = pf_data([[0, 1], [1, 1]])
    assert abs(pf.eigenvalue - GOLDEN) < 1e-12
    assert pf.lower <= GOLDEN + 1e-12 and pf.upper >= GOLDEN - 1e-12
    assert pf.primitivity_exponent == 2
    assert pf.residual < 1e-12
    assert abs(sum(pf.right) - 1) < 1e-12 and min(pf.left) == 1.0


def test_irreducibility_edge_cases():
    assert not is_irreducible([[0]])
    assert is_irreducible([[2]])
    assert not is_irreducible([[1, 1], [0, 1]])
    assert is_irreducible([[0, 1], [1, 0]])
    assert primitivity_exponent([[0, 1], [1, 0]]) is None
    with pytest.raises(ReducibleMatrix):
        pf_data([[1, 1], [0, 1]])


@settings(max_examples=60)
@given(st.integers(1, 4).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 3), min_size=n, max_size=n), min_size=n, max_size=n)))
def test_pf_eigenvalue_matches_numpy(M):
    if not is_irreducible(M):
        return
    pf = pf_data(M)
    spectral = max(abs(np.linalg.eigvals(np.array(M, dtype=float))))
    assert abs(pf.eigenvalue - spectral) < 1e-8
    assert all(x > 0 for x in pf.right)


def test_pf_metric_makes_edges_stretch_uniformly():
    ell = pf_metric(F)
    lam = pf_data(transition_matrix(F)).eigenvalue
    for i, img in enumerate(F.edge_images):
        assert abs(img.length(ell) / ell[i] - lam) < 1e-9


def test_turn_canonical_form():
    t1 = make_turn(G, 0, 1, 2)
    t2 = make_turn(G, 2, 2, 0)
    assert t1 == t2


def test_turn_classification():
    (t,) = path_turns(F.edge_images[1])
    assert classify_turn(F, t).verdict == "legal"
    # f(a^-1) = [t^2] b^-1 and f(b^-1) = b^-1 a^-1: the germs a^-1 and t^2 b^-1 are identified
    bad = make_turn(G, 1, 2, 3)
    v = classify_turn(F, bad)
    assert v.verdict == "illegal" and v.depth == 1
    assert is_degenerate(turn_image(F, bad))


def test_gate_count_matches_illegal_turns():
    legal = illegal = 0
    for d1 in range(4):
        for dec in (None, 1, 2):
            for d2 in range(4):
                t = make_turn(G, d1, dec, d2)
                if is_degenerate(t):
                    continue
                if classify_turn(F, t).legal:
                    legal += 1
                else:
                    illegal += 1
    # 12 germs in 9 gates: one orbit of illegal turns, listed from both orderings
    assert illegal == 2


def test_golden_map_is_train_track():
    v = verify_traintrack(F)
    assert v.passed and v.exact and v.verdict == "train track"
    assert v.gates == {"v": 9}


def test_unreduced_image_fails_with_degenerate_turn():
    bad = map_from_strings(G, G, {"a": "b a a^-1", "b": "a b"})
    v = verify_traintrack(bad)
    assert not v.passed
    assert v.witness["reason"] == "unreduced edge image" and v.witness["degenerate"]
    assert v.witness["edge"] == "a"


def test_square_of_phi_is_train_track():
    assert verify_traintrack(F.power(2)).passed


def test_illegal_turn_in_image_detected():
    h = build_omap(G, G, EX.autos["flip"] * EX.autos["phi"])
    v = verify_traintrack(h)
    assert not v.passed
    assert v.witness["reason"] == "illegal turn in edge image"
    assert v.witness["edge"] == "b" and v.witness["image"] == "a^-1 b"


def test_stratify_three_loop():
    ex = three_loop_example()
    st_ = stratify(ex.maps["h"])
    kinds = [(s.edges, s.kind) for s in st_.strata]
    assert kinds == [([], "T0"), (["c"], "NEG"), (["a", "b"], "EG")]
    assert st_.filtration() == [[], ["c"], ["c", "a", "b"]]
    assert abs(st_.top().eigenvalue - GOLDEN) < 1e-9


def test_stratify_identity_is_all_neg():
    ident = build_omap(G, G, EX.autos["id"])
    assert all(s.kind in ("NEG", "T0") for s in stratify(ident).strata)


def test_cancellation_constants():
    cc = cancellation_constants(F, metric="combinatorial")
    assert cc.bcc_upper == 4.0
    assert abs(cc.c_crit - 8 / (GOLDEN - 1)) < 1e-9
    pf = cancellation_constants(F)
    assert abs(pf.eigenvalue - GOLDEN) < 1e-9
    assert math.isfinite(pf.c_crit)
