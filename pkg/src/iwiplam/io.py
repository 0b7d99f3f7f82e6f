"""JSON problem descriptions: parsing with field-level diagnostics and serialization."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Any, Dict, List, Optional

from .freeprod import (Automorphism, CyclicFactor, Element, FreeFactor, FreeProduct,
                       InfiniteCyclicFactor, TableFactor)
from .graphs import GraphMap, MarkedGraph, build_omap, format_path, map_from_strings


class SpecError(ValueError):
    """Invalid problem description; ``field`` points at the offending entry."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message

    def as_dict(self):
        return {"error": "invalid problem description", "field": self.field, "message": self.message}


@dataclass
class Params:
    length: int = 12
    depth: int = 64
    seed: int = 0
    tolerance: float = 1e-9
    bound: int = 6
    maxlen: int = 4
    maxperiod: int = 6
    samples: int = 1000
    max_path: int = 50
    pf_size: int = 2
    pf_entries: int = 2


@dataclass
class Problem:
    name: str
    fp: FreeProduct
    graph: MarkedGraph
    automorphisms: Dict[str, Automorphism]
    target: str
    representative: GraphMap
    raw_representative: Optional[Dict[str, str]] = None
    second: Optional[GraphMap] = None
    raw_second: Optional[Dict[str, str]] = None
    subgroups: Dict[str, List[str]] = field(default_factory=dict)
    loops: Dict[str, str] = field(default_factory=dict)
    pool: List[str] = field(default_factory=list)
    params: Params = field(default_factory=Params)

    @property
    def phi(self) -> Automorphism:
        return self.automorphisms[self.target]


def _need(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise SpecError(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _factor(d: dict, where: str):
    kind = _need(d, "kind", where)
    gens = _need(d, "generators", where)
    if not isinstance(gens, list) or not all(isinstance(x, str) for x in gens):
        raise SpecError(f"{where}.generators", "must be a list of labels")
    try:
        if kind == "cyclic":
            if len(gens) != 1:
                raise SpecError(f"{where}.generators", "cyclic factor has exactly one generator")
            return CyclicFactor(int(_need(d, "order", where)), gens[0])
        if kind == "infinite_cyclic":
            if len(gens) != 1:
                raise SpecError(f"{where}.generators", "infinite cyclic factor has exactly one generator")
            return InfiniteCyclicFactor(gens[0])
        if kind == "free":
            return FreeFactor(gens)
        if kind == "table":
            gen_elems = _need(d, "generator_elements", where)
            return TableFactor(_need(d, "table", where), _need(d, "inverse", where),
                               dict(zip(gens, gen_elems)))
    except SpecError:
        raise
    except (ValueError, TypeError, IndexError) as exc:
        raise SpecError(where, str(exc)) from None
    raise SpecError(f"{where}.kind", f"unknown factor kind {kind!r}")


def _factor_dict(grp) -> dict:
    if isinstance(grp, CyclicFactor):
        return {"kind": "cyclic", "order": grp.order, "generators": list(grp.generators)}
    if isinstance(grp, InfiniteCyclicFactor):
        return {"kind": "infinite_cyclic", "generators": list(grp.generators)}
    if isinstance(grp, FreeFactor):
        return {"kind": "free", "generators": list(grp.generators)}
    return {"kind": "table", "generators": list(grp.generators), "table": grp.table,
            "inverse": grp.inverse, "generator_elements": [grp.gen_elems[x] for x in grp.generators]}


def parse_problem(data: Dict[str, Any]) -> Problem:
    pres = _need(data, "presentation", "")
    factors = [_factor(f, f"presentation.factors[{i}]") for i, f in enumerate(pres.get("factors", []))]
    basis = _need(pres, "free_basis", "presentation")
    try:
        fp = FreeProduct(factors, basis)
    except ValueError as exc:
        raise SpecError("presentation", str(exc)) from None

    gd = _need(data, "graph", "")
    verts = _need(gd, "vertices", "graph")
    vnames = [_need(v, "name", f"graph.vertices[{i}]") for i, v in enumerate(verts)]
    vindex = {n: i for i, n in enumerate(vnames)}
    vertices = []
    for i, v in enumerate(verts):
        fi = v.get("factor")
        if fi is not None and not (isinstance(fi, int) and 0 <= fi < fp.q):
            raise SpecError(f"graph.vertices[{i}].factor", f"no factor with index {fi!r}")
        vertices.append((vnames[i], fi))
    edges, lengths = [], []
    for i, e in enumerate(_need(gd, "edges", "graph")):
        where = f"graph.edges[{i}]"
        ends = []
        for key in ("src", "dst"):
            name = _need(e, key, where)
            if name not in vindex:
                raise SpecError(f"{where}.{key}", f"unknown vertex {name!r}")
            ends.append(vindex[name])
        edges.append((_need(e, "name", where), ends[0], ends[1]))
        try:
            lengths.append(Fraction(str(e.get("length", 1))))
        except (ValueError, ZeroDivisionError):
            raise SpecError(f"{where}.length", f"not a rational number: {e.get('length')!r}") from None
    base = gd.get("base", vnames[0] if vnames else None)
    if base not in vindex:
        raise SpecError("graph.base", f"unknown vertex {base!r}")
    try:
        graph = MarkedGraph(fp, vertices, edges, vindex[base], lengths)
        if gd.get("marking"):
            marking = {}
            for x, text in gd["marking"].items():
                if x not in fp.generators:
                    raise SpecError(f"graph.marking.{x}", "unknown generator")
                marking[x] = graph.parse_path(text, start=graph.base)
            graph = MarkedGraph(fp, vertices, edges, vindex[base], lengths, marking=marking)
    except SpecError:
        raise
    except (ValueError, KeyError) as exc:
        raise SpecError("graph", str(exc)) from None

    autos = {}
    for name, images in _need(data, "automorphisms", "").items():
        where = f"automorphisms.{name}"
        for x in images:
            if x not in fp.generators:
                raise SpecError(f"{where}.{x}", "unknown generator")
        try:
            autos[name] = Automorphism.from_strings(fp, images, name=name)
            autos[name].factor_data()
        except ValueError as exc:
            raise SpecError(where, str(exc)) from None
    target = data.get("target", "phi")
    if target not in autos:
        raise SpecError("target", f"unknown automorphism {target!r}")
    raw_rep = data.get("representative")
    try:
        if raw_rep:
            rep = map_from_strings(graph, graph, raw_rep, name=target, automorphism=autos[target])
            if not rep.realizes(autos[target]):
                raise SpecError("representative", f"map does not realize {target}")
        else:
            rep = build_omap(graph, graph, autos[target], name=target)
    except SpecError:
        raise
    except (ValueError, KeyError) as exc:
        raise SpecError("representative", str(exc)) from None

    raw_second = data.get("second_representative")
    second = None
    if raw_second:
        try:
            second = map_from_strings(graph, graph, raw_second, name=f"{target}_2", automorphism=autos[target])
        except (ValueError, KeyError) as exc:
            raise SpecError("second_representative", str(exc)) from None
        if not second.realizes(autos[target]):
            raise SpecError("second_representative", f"map does not realize {target}")

    subgroups = {}
    for name, gens in data.get("subgroups", {}).items():
        for k, text in enumerate(gens):
            try:
                fp.parse(text)
            except ValueError as exc:
                raise SpecError(f"subgroups.{name}[{k}]", str(exc)) from None
        subgroups[name] = list(gens)
    loops = dict(data.get("loops", {}))
    for name, text in loops.items():
        try:
            graph.parse_path(text, start=graph.base)
        except ValueError as exc:
            raise SpecError(f"loops.{name}", str(exc)) from None
    pool = list(data.get("pool", []))
    for k, name in enumerate(pool):
        if name not in autos:
            raise SpecError(f"pool[{k}]", f"unknown automorphism {name!r}")
    known = Params.__dataclass_fields__
    pd = data.get("params", {})
    for key in pd:
        if key not in known:
            raise SpecError(f"params.{key}", "unknown parameter")
    params = Params(**pd)
    return Problem(data.get("name", "problem"), fp, graph, autos, target, rep, raw_rep, second, raw_second,
                   subgroups, loops, pool, params)


def serialize_problem(pr: Problem) -> Dict[str, Any]:
    g = pr.graph
    out: Dict[str, Any] = {
        "name": pr.name,
        "presentation": {"factors": [_factor_dict(f) for f in pr.fp.factors],
                         "free_basis": list(pr.fp.free_basis)},
        "graph": {
            "vertices": [{"name": n, "factor": f} for n, f in zip(g.vertex_names, g.vertex_factor)],
            "edges": [{"name": n, "src": g.vertex_names[s], "dst": g.vertex_names[t], "length": str(L)}
                      for n, (s, t), L in zip(g.edge_names, g.edge_ends, g.lengths)],
            "base": g.vertex_names[g.base],
            "marking": {x: format_path(p) for x, p in g.marking.items()},
        },
        "automorphisms": {name: {x: str(a.images[x]) for x in pr.fp.generators if a.images[x] != pr.fp.gen(x)}
                          for name, a in pr.automorphisms.items()},
        "target": pr.target,
    }
    if pr.raw_representative:
        out["representative"] = dict(pr.raw_representative)
    if pr.raw_second:
        out["second_representative"] = dict(pr.raw_second)
    if pr.subgroups:
        out["subgroups"] = {k: list(v) for k, v in pr.subgroups.items()}
    if pr.loops:
        out["loops"] = dict(pr.loops)
    if pr.pool:
        out["pool"] = list(pr.pool)
    out["params"] = asdict(pr.params)
    return out


def load_problem(path: str) -> Problem:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError("<file>", f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise SpecError("<file>", str(exc)) from None
    return parse_problem(data)


def bundled(name: str) -> Problem:
    """Bundled problem by stem, e.g. ``golden_z3``."""
    text = resources.files("iwiplam").joinpath("data", f"{name}.json").read_text()
    return parse_problem(json.loads(text))


def bundled_names() -> List[str]:
    return sorted(p.name[:-5] for p in resources.files("iwiplam").joinpath("data").iterdir()
                  if p.name.endswith(".json"))


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, Element):
        return str(o)
    if isinstance(o, float):
        return repr(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if hasattr(o, "as_dict"):
        return o.as_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")
