import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from iwiplam.io import Params, SpecError, bundled, bundled_names, dumps, load_problem, parse_problem, serialize_problem


def raw(name):
    return serialize_problem(bundled(name))


def test_bundled_names():
    assert bundled_names() == ["golden_f3", "golden_z3", "subdivided_z3", "three_loop"]


@pytest.mark.parametrize("name", ["golden_f3", "golden_z3", "subdivided_z3", "three_loop"])
def test_round_trip(name):
    data = raw(name)
    again = serialize_problem(parse_problem(json.loads(dumps(data))))
    assert again == data


def test_golden_example_contents():
    pr = bundled("golden_z3")
    assert pr.target == "phi"
    assert str(pr.phi.images["a"]) == "b t"
    assert pr.subgroups["mod2_kernel"] == ["b", "t", "a b a^-1", "a t a^-1", "a^2"]
    assert pr.params == Params(length=12, depth=64, seed=0, tolerance=1e-9, bound=6)


def test_second_representative_loaded():
    pr = bundled("subdivided_z3")
    assert pr.second is not None and pr.second.realizes(pr.phi)


@given(st.integers(1, 40), st.integers(0, 2 ** 31), st.floats(1e-12, 1e-3))
def test_params_round_trip(length, seed, tol):
    data = raw("golden_z3")
    data["params"].update(length=length, seed=seed, tolerance=tol)
    pr = parse_problem(data)
    assert (pr.params.length, pr.params.seed, pr.params.tolerance) == (length, seed, tol)
    assert serialize_problem(pr)["params"] == data["params"]


def mutate(path, value):
    data = raw("golden_z3")
    target = data
    for key in path[:-1]:
        target = target[key]
    if value is KeyError:
        del target[path[-1]]
    else:
        target[path[-1]] = value
    return data


BAD = [
    (("graph", "edges", 0, "dst"), "u", "graph.edges[0].dst"),
    (("graph", "edges", 1, "src"), KeyError, "graph.edges[1].src"),
    (("graph", "edges", 0, "length"), "x/0", "graph.edges[0].length"),
    (("graph", "vertices", 0, "factor"), 4, "graph.vertices[0].factor"),
    (("graph", "base"), "w", "graph.base"),
    (("presentation", "factors", 0, "kind"), "dihedral", "presentation.factors[0].kind"),
    (("presentation", "free_basis"), KeyError, "presentation.free_basis"),
    (("automorphisms", "phi", "q"), "a", "automorphisms.phi.q"),
    (("automorphisms", "phi", "t"), "a", "automorphisms.phi"),
    (("target",), "psi", "target"),
    (("subgroups", "whole", 0), "a z", "subgroups.whole[0]"),
    (("loops", "ab_inv"), "a c", "loops.ab_inv"),
    (("pool", 0), "nope", "pool[0]"),
    (("params", "speed"), 3, "params.speed"),
    (("graph",), KeyError, "graph"),
]


@pytest.mark.parametrize("path,value,field", BAD, ids=[b[2] for b in BAD])
def test_field_level_errors(path, value, field):
    with pytest.raises(SpecError) as info:
        parse_problem(mutate(path, value))
    assert info.value.field == field
    assert info.value.as_dict()["field"] == field


def test_representative_must_realize_target():
    data = raw("subdivided_z3")
    data["representative"] = copy.deepcopy(data["representative"])
    data["representative"]["b2"] = "b2"
    with pytest.raises(SpecError) as info:
        parse_problem(data)
    assert info.value.field == "representative"


def test_load_problem_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SpecError) as info:
        load_problem(str(bad))
    assert info.value.field == "<file>"
    with pytest.raises(SpecError):
        load_problem(str(tmp_path / "missing.json"))


def test_dumps_is_deterministic():
    data = raw("golden_f3")
    assert dumps(data) == dumps(json.loads(dumps(data)))
