"""Action on laminations, the stretch homomorphism, kernels, carrying subgroups and centralizers."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .freeprod import (Automorphism, Element, FreeFactor, FreeProduct, InfiniteCyclicFactor,
                       lcm_of_factor_orders, out_equal)
from .graphs import (DecoratedPath, GraphMap, MarkedGraph, build_omap, dec_key, format_key, format_path,
                     key_to_path, metrics)
from .lamination import LaminationSampler, PushedLanguage
from .traintrack import is_irreducible, pf_data, primitivity_exponent, stratify, transition_matrix


# ---------------------------------------------------------------------------
# action and stabilizer membership
# ---------------------------------------------------------------------------

def representative(psi: Automorphism, s: LaminationSampler) -> GraphMap:
    g = s.graph
    return build_omap(g, g, psi)


def act(psi: Automorphism, s: LaminationSampler, h: Optional[GraphMap] = None, **kw) -> PushedLanguage:
    """Window language of psi(Lambda): windows pushed through a map realizing psi."""
    return PushedLanguage(s, h or representative(psi, s), **kw)


@dataclass
class StabVerdict:
    in_stabilizer: bool
    L: int
    checked: int
    witness: Optional[Dict[str, str]] = None

    @property
    def verdict(self) -> str:
        return f"in-stabilizer (evidence at L={self.L})" if self.in_stabilizer else "rejected"

    def as_dict(self):
        return {"verdict": self.verdict, "in_stabilizer": self.in_stabilizer, "L": self.L,
                "windows_checked": self.checked, "witness": self.witness}


def stab_test(psi: Automorphism, s: LaminationSampler, L: int = 12,
              h: Optional[GraphMap] = None) -> StabVerdict:
    """Every trimmed image of every length-L leaf segment must again be a leaf segment."""
    pushed = act(psi, s, h)
    checked = 0
    for w in sorted(s.leaf_segments(L)):
        img = pushed.push(w)
        if not img.edges:
            continue
        checked += 1
        if not s.is_leaf_segment(img):
            return StabVerdict(False, L, checked, {"window": format_key(s.graph, w),
                                                  "trimmed_image": format_path(img)})
    return StabVerdict(True, L, checked)


# ---------------------------------------------------------------------------
# stretch homomorphism
# ---------------------------------------------------------------------------

@dataclass
class StretchResult:
    value: float
    pf_value: float
    trace: List[float]
    k: int
    period: int
    tolerance: float
    crosscheck: List[Tuple[int, float, float]]
    crosscheck_ok: bool
    power: int
    snap_residual: float

    def as_dict(self):
        return {"sigma": self.value, "sigma_pf_metric": self.pf_value, "a_k": self.trace, "k": self.k,
                "period": self.period, "tolerance": self.tolerance,
                "crosscheck": [{"length": n, "ratio": r, "bound": b} for n, r, b in self.crosscheck],
                "crosscheck_ok": self.crosscheck_ok, "lambda_power": self.power,
                "snap_residual": self.snap_residual}


class NoConvergence(RuntimeError):
    pass


def _extrapolate(num: List[float], den: List[float], lam: float, max_period: int = 6):
    """Limit of num/den when num_k - sigma*den_k is eventually periodic; den_k grows like lam^k.

    Returns (estimate, period, spread) using the period whose last estimates agree best.
    """
    n = len(num)
    best = None
    for p in range(1, max_period + 1):
        ests = []
        for k in range(max(0, n - p - 3), n - p):
            dd = den[k + p] - den[k]
            if dd:
                ests.append((num[k + p] - num[k]) / dd)
        if len(ests) < 3:
            continue
        spread = max(ests) - min(ests)
        if best is None or spread < best[2] - 1e-15:
            best = (ests[-1], p, spread)
    if best is None:
        raise NoConvergence("not enough iterates to extrapolate")
    return best


def sigma(psi: Automorphism, s: LaminationSampler, h: Optional[GraphMap] = None,
          tol: float = 1e-9, max_edges: int = 40000, kmin: int = 12) -> StretchResult:
    """Stretch factor of psi on Lambda via PF-weighted lengths of [h(f^k e)].

    a_k = sum r_e len[h(f^k e)] / sum r_e len(f^k e).  With r the right PF
    vector the denominator is exactly lam^k times a constant, so the defect
    of the numerator is bounded; the limit is read off from differences over
    one period of that defect.
    """
    g = s.graph
    h = h or representative(psi, s)
    pf = s.pf
    lam = pf.eigenvalue
    r = pf.right
    ell = pf.left
    num, den, num_pf, den_pf, trace = [], [], [], [], []
    k = 0
    while True:
        its = [s.iterate(e, k) for e in range(g.n_edges)]
        if k >= kmin and max(len(p) for p in its) > max_edges:
            break
        imgs = [h.apply(p) for p in its]
        num.append(sum(r[e] * len(imgs[e]) for e in range(g.n_edges)))
        den.append(sum(r[e] * len(its[e]) for e in range(g.n_edges)))
        num_pf.append(sum(r[e] * float(imgs[e].length(ell)) for e in range(g.n_edges)))
        den_pf.append(sum(r[e] * float(its[e].length(ell)) for e in range(g.n_edges)))
        trace.append(num[-1] / den[-1])
        k += 1
    if max(trace[-4:]) - min(trace[-4:]) == 0.0:
        value, period, spread = trace[-1], 1, 0.0
        value_pf = num_pf[-1] / den_pf[-1]
    else:
        value, period, spread = _extrapolate(num, den, lam)
        value_pf, _, spread_pf = _extrapolate(num_pf, den_pf, lam)
        spread = max(spread, spread_pf)
    achieved = max(spread, abs(value - value_pf))
    if achieved > tol:
        raise NoConvergence(f"stretch estimate did not settle: spread {achieved:.3g} > {tol:.3g}")
    # empirical crosscheck on long iterates of the first edge
    bcc = metrics(h).bcc_upper
    checks, ok = [], True
    for kk in range(max(0, k - 4), k):
        p = s.iterate(0, kk)
        ratio = len(h.apply(p)) / len(p)
        bound = 2 * bcc / len(p) + tol + _frequency_slack(s, kk) * value
        checks.append((len(p), ratio, bound))
        ok = ok and abs(ratio - value) <= bound
    power = round(math.log(value) / math.log(lam)) if lam > 1 else 0
    return StretchResult(value, value_pf, trace, k - 1, period, achieved, checks, ok,
                         power, abs(value - lam ** power))


def _frequency_slack(s: LaminationSampler, k: int) -> float:
    """Relative deviation of edge counts in f^k(e_0) from PF frequencies."""
    p = s.iterate(0, k)
    counts = np.zeros(s.graph.n_edges)
    for o in p.edges:
        counts[o >> 1] += 1
    freq = counts / counts.sum()
    return float(np.abs(freq - np.array(s.pf.right)).sum())


def second_representative(psi: Automorphism, graph: MarkedGraph, w: Optional[Element] = None) -> GraphMap:
    """A different map realizing the same outer class: psi followed by conjugation by w."""
    fp = graph.fp
    w = w if w is not None else fp.gen(fp.free_basis[0])
    return build_omap(graph, graph, Automorphism.inner(w) * psi)


def snap_to_grid(value: float, lam: float) -> Tuple[int, float]:
    n = round(math.log(value) / math.log(lam))
    return n, abs(value - lam ** n)


# ---------------------------------------------------------------------------
# kernel analysis
# ---------------------------------------------------------------------------

def _factor_inner(grp, images: Dict[str, object]) -> bool:
    """Is the factor automorphism given on generators conjugation by a factor element?"""
    gens = grp.generators
    if isinstance(grp, InfiniteCyclicFactor):
        return images[gens[0]] == grp.gen(gens[0])
    if isinstance(grp, FreeFactor):
        fp = FreeProduct([], gens, validate=False)

        def el(t):
            return fp.word([(grp.generators[abs(a) - 1], 1 if a > 0 else -1) for a in t])

        alpha = Automorphism(fp, {x: el(images[x]) for x in gens}, check=False)
        return out_equal(alpha, Automorphism.identity(fp))
    for w in grp.elements():
        if all(grp.mul(grp.mul(w, grp.gen(x)), grp.inv(w)) == images[x] for x in gens):
            return True
    return False


def induced_factor_tuple(psi: Automorphism) -> List[dict]:
    fp = psi.fp
    out = []
    for i, (j, c, theta) in enumerate(psi.factor_data()):
        grp = fp.factors[i]
        entry = {"factor": i, "target": j,
                 "images": {x: fp.factors[j].format_elem(theta[x]) for x in grp.generators}}
        entry["inner"] = (i == j) and _factor_inner(grp, theta)
        out.append(entry)
    return out


@dataclass
class KernelReport:
    growth: str
    eigenvalue: float
    factor_tuple: List[dict]
    in_kernel_subgroup: bool
    inner: bool
    finite_order: Optional[int]
    bound: int

    def as_dict(self):
        return {"growth": self.growth, "eigenvalue": self.eigenvalue, "factor_tuple": self.factor_tuple,
                "trivial_on_factors": self.in_kernel_subgroup, "inner": self.inner,
                "finite_order": self.finite_order if self.finite_order else f"none <= {self.bound}"}


def finite_order_search(psi: Automorphism, bound: int) -> Optional[int]:
    ident = Automorphism.identity(psi.fp)
    p = Automorphism.identity(psi.fp)
    for k in range(1, bound + 1):
        p = psi * p
        if out_equal(p, ident):
            return k
    return None


def classify_growth(psi: Automorphism, rep: GraphMap, bound: Optional[int] = None) -> KernelReport:
    st = stratify(rep)
    eg = [x for x in st.strata if x.kind == "EG"]
    lam = max((x.eigenvalue for x in eg), default=1.0)
    tup = induced_factor_tuple(psi)
    bound = bound or lcm_of_factor_orders(psi.fp) * 12
    inner = out_equal(psi, Automorphism.identity(psi.fp))
    order = None
    if not eg:
        order = 1 if inner else finite_order_search(psi, bound)
    return KernelReport("EG" if eg else "NEG", lam, tup, all(t["inner"] for t in tup), inner, order, bound)


# ---------------------------------------------------------------------------
# N-periodic paths
# ---------------------------------------------------------------------------

@dataclass
class PeriodicReport:
    paths: List[Tuple[str, int]]
    indivisible: List[Tuple[str, int]]
    max_concatenation: int
    capped: bool
    maxlen: int
    maxperiod: int

    def as_dict(self):
        return {"paths": [{"path": p, "period": k} for p, k in self.paths],
                "indivisible": [{"path": p, "period": k} for p, k in self.indivisible],
                "max_concatenation": self.max_concatenation, "capped": self.capped,
                "maxlen": self.maxlen, "maxperiod": self.maxperiod}


def _vertex_decorations(g: MarkedGraph, v: int) -> list:
    """Interior decorations tried at v: all of a finite group, generators^{+-1} of an infinite one."""
    grp = g.group_at(v)
    if grp is None:
        return [None]
    if grp.order is None:
        return [None] + [g.dec_norm(v, grp.gen(x)) for x in grp.generators] + \
            [g.dec_norm(v, grp.inv(grp.gen(x))) for x in grp.generators]
    return [g.dec_norm(v, x) for x in grp.elements()]


def _enumerate_keys(g: MarkedGraph, n: int, starts):
    """Orbit keys (edges, interior decorations) of reduced paths with n edges starting in ``starts``."""
    decs_at = [_vertex_decorations(g, v) for v in range(g.n_vertices)]

    def rec(edges, decs):
        if len(edges) == n:
            yield tuple(edges), tuple(decs)
            return
        v = g.dst(edges[-1])
        for d in decs_at[v]:
            for o in g.directions(v):
                if d is None and o == (edges[-1] ^ 1):
                    continue
                edges.append(o)
                decs.append(d)
                yield from rec(edges, decs)
                edges.pop()
                decs.pop()

    for o in range(2 * g.n_edges):
        if g.src(o) in starts:
            yield from rec([o], [])


def _reverse_key(g: MarkedGraph, edges, decs) -> tuple:
    return (tuple(o ^ 1 for o in reversed(edges)),
            tuple(dec_key(g.dec_inv(g.dst(o), d)) for o, d in zip(reversed(edges[:-1]), reversed(decs))))


def _image_key(rep: GraphMap, edges, decs) -> Tuple[tuple, tuple]:
    """Tightened image of a path given by edges and interior decorations; boundary dropped."""
    d = rep.dst
    s = rep.src
    es: List[int] = []
    ds: list = [None]
    n = len(edges)
    for k, o in enumerate(edges):
        img = rep.image_of(o)
        ds[-1] = d.dec_mul(img.start, ds[-1], img.decs[0])
        for e2, h in zip(img.edges, img.decs[1:]):
            if es and ds[-1] is None and e2 == (es[-1] ^ 1):
                es.pop()
                ds.pop()
                ds[-1] = d.dec_mul(d.dst(e2), ds[-1], h)
            else:
                es.append(e2)
                ds.append(h)
        if k < n - 1:
            v = s.dst(o)
            ds[-1] = d.dec_mul(rep.vmap[v], ds[-1], rep.theta_at(v, decs[k]))
    return tuple(es), tuple(ds[1:-1])


def nperiodic_search(rep: GraphMap, maxlen: int = 4, maxperiod: int = 6, cap: int = 50) -> PeriodicReport:
    """Paths p of length <= maxlen with [rep^k(p)] a translate of p for some k <= maxperiod.

    Paths are compared in orbit form (interior decorations kept, boundary
    decorations dropped), i.e. up to the action of G on the tree.
    """
    g = rep.src
    periodic_v = set()
    for v in range(g.n_vertices):
        w = v
        for _ in range(g.n_vertices):
            w = rep.vmap[w]
            if w == v:
                periodic_v.add(v)
                break
    limit = maxlen * 4 + 8
    image: Dict[tuple, Optional[tuple]] = {}

    def step(edges, decs):
        key = (edges, decs)
        if key not in image:
            es, ds = _image_key(rep, edges, decs)
            image[key] = (es, ds) if 0 < len(es) <= limit else None
        return image[key]

    found: Dict[tuple, int] = {}
    for n in range(1, maxlen + 1):
        for edges, decs in _enumerate_keys(g, n, periodic_v):
            if g.dst(edges[-1]) not in periodic_v:
                continue
            key = (edges, tuple(dec_key(x) for x in decs))
            if _reverse_key(g, edges, decs) < key:
                continue
            q = (edges, decs)
            for k in range(1, maxperiod + 1):
                q = step(*q)
                if q is None:
                    break
                if q[0] == edges and q[1] == decs:
                    found[key] = k
                    break
    keys = set(found)
    keys |= {key_to_path(g, k).reverse().key() for k in found}

    def divisible(key):
        p = key_to_path(g, key)
        for i in range(1, len(p)):
            a, b = p.subpath(0, i).key(), p.subpath(i, len(p)).key()
            if a in keys and b in keys:
                return True
        return False

    indiv = [k for k in sorted(found) if not divisible(k)]
    # longest chain of indivisible periodic paths (either orientation) joined end to start
    nodes = indiv + [key_to_path(g, k).reverse().key() for k in indiv]
    ends = {k: (key_to_path(g, k).start, key_to_path(g, k).end) for k in nodes}
    best, capped = 0, False
    if nodes:
        length = {k: 1 for k in nodes}
        for step in range(2, cap + 1):
            new = {}
            for k in nodes:
                prev = [length[j] for j in nodes if ends[j][1] == ends[k][0] and j in length]
                if prev:
                    new[k] = max(prev) + 1
            if not new:
                break
            length = new
            best = step
        else:
            capped = True
        best = max(best, 1)
    return PeriodicReport([(format_key(g, k), found[k]) for k in sorted(found)],
                          [(format_key(g, k), found[k]) for k in indiv], best, capped, maxlen, maxperiod)


# ---------------------------------------------------------------------------
# subgroup graphs, coverings, carrying
# ---------------------------------------------------------------------------

def _closure(grp, gens) -> frozenset:
    out = {grp.identity}
    frontier = [grp.identity]
    gens = [x for x in gens if x is not None]
    while frontier:
        nxt = []
        for a in frontier:
            for x in gens:
                b = grp.mul(a, x)
                if b not in out:
                    out.add(b)
                    nxt.append(b)
        frontier = nxt
    return frozenset(out)


class SubgroupGraph:
    """Folded graph over a marked graph describing a subgroup (finite vertex groups only).

    Each node x lies over a vertex of the base graph and carries a subgroup of
    that vertex group.  Each arc from x to y over oriented edge e carries
    labels (a, b): it reads as [a] e [b].
    """

    def __init__(self, graph: MarkedGraph, loops: Sequence[DecoratedPath]):
        for v in range(graph.n_vertices):
            grp = graph.group_at(v)
            if grp is not None and grp.order is None:
                raise ValueError("subgroup graphs need finite vertex groups")
        self.graph = graph
        self.node_vertex: Dict[int, int] = {0: graph.base}
        self.groups: Dict[int, frozenset] = {0: self._trivial(graph.base)}
        self.arcs: Dict[int, list] = {}
        self._next_node = 1
        self._next_arc = 0
        for p in loops:
            self._add_loop(p)
        self.fold()

    def _trivial(self, v):
        grp = self.graph.group_at(v)
        return frozenset([None]) if grp is None else frozenset([grp.identity])

    def _grp(self, x):
        return self.graph.group_at(self.node_vertex[x])

    def _norm(self, x, g):
        grp = self._grp(x)
        if grp is None:
            return None
        return grp.identity if g is None else g

    def _new_node(self, v):
        x = self._next_node
        self._next_node += 1
        self.node_vertex[x] = v
        self.groups[x] = self._trivial(v)
        return x

    def _new_arc(self, x, o, y, a, b):
        self.arcs[self._next_arc] = [x, o, y, self._norm(x, a), self._norm(y, b)]
        self._next_arc += 1

    def _add_loop(self, p: DecoratedPath):
        g = self.graph
        if p.start != g.base or p.end != g.base:
            raise ValueError("subgroup generators must be loops at the base vertex")
        if not p.edges:
            self._add_to_group(0, p.decs[0])
            return
        x = 0
        for k, o in enumerate(p.edges):
            last = k == len(p.edges) - 1
            y = 0 if last else self._new_node(g.dst(o))
            self._new_arc(x, o, y, p.decs[k], p.decs[-1] if last else None)
            x = y

    def _add_to_group(self, x, g):
        grp = self._grp(x)
        if grp is None or g is None:
            return
        self.groups[x] = _closure(grp, list(self.groups[x]) + [g])

    def ends_at(self, x):
        """(arc id, direction o, far node, near label, far label) for every arc end at x."""
        out = []
        for i, (s, o, t, a, b) in self.arcs.items():
            if s == x:
                out.append((i, o, t, a, b, False))
            if t == x:
                grp_t, grp_s = self._grp(t), self._grp(s)
                out.append((i, o ^ 1, s, None if grp_t is None else grp_t.inv(b),
                            None if grp_s is None else grp_s.inv(a), True))
        return out

    def _conjugate_node(self, x, k):
        """Change coordinates at x by k: groups k^-1 A k, outgoing labels a -> k^-1 a."""
        grp = self._grp(x)
        if grp is None or k is None or k == grp.identity:
            return
        ki = grp.inv(k)
        self.groups[x] = frozenset(grp.mul(grp.mul(ki, a), k) for a in self.groups[x])
        for arc in self.arcs.values():
            if arc[0] == x:
                arc[3] = grp.mul(ki, arc[3])
            if arc[2] == x:
                arc[4] = grp.mul(arc[4], k)

    def _fold_step(self) -> bool:
        for x in list(self.node_vertex):
            grp = self._grp(x)
            ends = self.ends_at(x)
            for (i1, o1, y1, a1, b1, r1), (i2, o2, y2, a2, b2, r2) in itertools.combinations(ends, 2):
                if o1 != o2:
                    continue
                if grp is not None:
                    c = grp.mul(a2, grp.inv(a1))
                    if c not in self.groups[x]:
                        continue
                if y1 == y2:
                    gy = self._grp(y1)
                    if gy is not None:
                        self._add_to_group(y1, gy.mul(gy.inv(b1), b2))
                elif y2 != x:
                    # recoordinate y2 so that arc 2 ends with the label b1, then merge
                    gy = self._grp(y2)
                    if gy is not None:
                        self._conjugate_node(y2, gy.mul(gy.inv(b2), b1))
                    self._merge(y1, y2)
                else:
                    gy = self._grp(y1)
                    if gy is not None:
                        self._conjugate_node(y1, gy.mul(gy.inv(b1), b2))
                    self._merge(y2, y1)
                del self.arcs[i2]
                return True
        return False

    def _merge(self, keep, drop):
        grp = self._grp(keep)
        if grp is not None:
            self.groups[keep] = _closure(grp, list(self.groups[keep]) + list(self.groups[drop]))
        for arc in self.arcs.values():
            if arc[0] == drop:
                arc[0] = keep
            if arc[2] == drop:
                arc[2] = keep
        del self.node_vertex[drop]
        del self.groups[drop]

    def fold(self):
        while self._fold_step():
            pass

    # --- queries -----------------------------------------------------------
    def is_covering(self) -> bool:
        g = self.graph
        for x, v in self.node_vertex.items():
            grp = g.group_at(v)
            A = self.groups[x]
            need = 1 if grp is None else grp.order // len(A)
            ends = self.ends_at(x)
            for o in g.directions(v):
                here = [e for e in ends if e[1] == o]
                if len(here) != need:
                    return False
                if grp is not None:
                    cosets = {frozenset(grp.mul(h, e[3]) for h in A) for e in here}
                    if len(cosets) != need:
                        return False
        return True

    def index(self) -> Optional[int]:
        if not self.is_covering():
            return None
        g = self.graph
        grp = g.group_at(g.base)
        lifts = [x for x, v in self.node_vertex.items() if v == g.base]
        if grp is None:
            return len(lifts)
        return sum(grp.order // len(self.groups[x]) for x in lifts)

    def lifts(self, key: tuple) -> bool:
        """Does the window lift to some path in this graph (boundary decorations free)?"""
        g = self.graph
        p = key_to_path(g, key)
        for x, v in self.node_vertex.items():
            if v != p.start:
                continue
            for e in self.ends_at(x):
                if e[1] != p.edges[0]:
                    continue
                if self._follow(p, 1, e[2], e[4]):
                    return True
        return False

    def _follow(self, p, k, x, b) -> bool:
        if k == len(p.edges):
            return True
        grp = self._grp(x)
        d = p.decs[k]
        for e in self.ends_at(x):
            if e[1] != p.edges[k]:
                continue
            if grp is not None:
                target = grp.mul(grp.inv(b), self._norm(x, d))
                coset = {grp.mul(h, target) for h in self.groups[x]}
                if e[3] not in coset:
                    continue
            if self._follow(p, k + 1, e[2], e[4]):
                return True
        return False

    def describe(self) -> dict:
        g = self.graph
        return {"nodes": {x: {"vertex": g.vertex_names[v], "group_order": len(self.groups[x])}
                          for x, v in self.node_vertex.items()},
                "arcs": [{"from": s, "edge": g.edge_names[o >> 1] + ("^-1" if o & 1 else ""), "to": t}
                         for s, o, t, a, b in self.arcs.values()]}


def subgroup_graph(graph: MarkedGraph, generators: Sequence[Element]) -> SubgroupGraph:
    return SubgroupGraph(graph, [graph.spell(graph.mu(w)) for w in generators])


def covering_complete(sg: SubgroupGraph) -> Optional[int]:
    """Index of the subgroup, or None for infinite index."""
    return sg.index()


@dataclass
class CarryVerdict:
    verdict: str
    index: Optional[int]
    L: int
    witness: Optional[str] = None

    @property
    def carries(self) -> bool:
        return self.verdict.startswith("carries")

    def as_dict(self):
        return {"verdict": self.verdict, "index": self.index if self.index else "infinite",
                "L": self.L, "witness": self.witness}


def carries_test(sg: SubgroupGraph, s: LaminationSampler, L: int = 12) -> CarryVerdict:
    idx = covering_complete(sg)
    if idx is None:
        return CarryVerdict("cannot carry", None, L)
    for w in sorted(s.leaf_segments(L)):
        if not sg.lifts(w):
            return CarryVerdict("does not carry", idx, L, format_key(s.graph, w))
    return CarryVerdict(f"carries (evidence at L={L})", idx, L)


# ---------------------------------------------------------------------------
# invariant subgraphs, commuting and commensuration
# ---------------------------------------------------------------------------

def invariant_subgraph_power(rep: GraphMap, sub: Sequence[str], bound: int = 24) -> Optional[int]:
    """Least k <= bound with rep^k fixing every edge of sub, decorations included."""
    g = rep.src
    idx = {g.edge_index[e] for e in sub}
    for i in idx:
        if any((o >> 1) not in idx for o in rep.edge_images[i].edges):
            raise ValueError(f"edge set {sorted(sub)} is not invariant")
    verts = {v for i in idx for v in g.edge_ends[i]}
    pk = rep
    for k in range(1, bound + 1):
        if k > 1:
            pk = rep.compose(pk)
        if all(pk.edge_images[i] == g.edge_path(2 * i) for i in idx) and all(
                pk.vmap[v] == v for v in verts) and all(
                pk.theta_at(v, grp.gen(lab)) == g.dec_norm(v, grp.gen(lab))
                for v in verts if not g.is_free(v)
                for grp in [g.group_at(v)] for lab in grp.generators):
            return k
    return None


def commute_test(psi: Automorphism, phi: Automorphism) -> bool:
    return out_equal(psi * phi, phi * psi)


def commute_witness(psi: Automorphism, phi: Automorphism) -> Optional[Dict[str, str]]:
    """None when psi and phi commute in Out; otherwise a generator where the two composites differ.

    No single conjugator relates the composites, so the pointwise difference
    at that generator is a genuine obstruction.
    """
    lhs, rhs = psi * phi, phi * psi
    if out_equal(lhs, rhs):
        return None
    for x in psi.fp.generators:
        if lhs.images[x] != rhs.images[x]:
            return {"generator": x, "psi_phi": str(lhs.images[x]), "phi_psi": str(rhs.images[x])}
    return {"generator": "", "psi_phi": "", "phi_psi": ""}


def commensuration_search(psi: Automorphism, phi: Automorphism, bound: int = 4) -> Optional[Tuple[int, int]]:
    """Least (m, n) with psi phi^m psi^-1 = phi^n in Out, 1 <= m, n <= bound."""
    psi_inv = psi.inverse()
    for m in range(1, bound + 1):
        lhs = psi * (phi ** m) * psi_inv
        for n in range(1, bound + 1):
            if out_equal(lhs, phi ** n):
                return (m, n)
    return None


# ---------------------------------------------------------------------------
# discreteness of PF values
# ---------------------------------------------------------------------------

@dataclass
class SpectrumGap:
    values: List[float]
    min_gap: float
    matrices: int

    def as_dict(self):
        return {"values": self.values, "min_gap": self.min_gap, "irreducible_matrices": self.matrices}


def pf_spectrum_gap(n: int, B: int, limit: int = 2_000_000) -> SpectrumGap:
    total = sum((B + 1) ** (k * k) for k in range(1, n + 1))
    if total > limit:
        raise ValueError(f"{total} matrices exceed the enumeration guard {limit}")
    vals = []
    count = 0
    for k in range(1, n + 1):
        for entries in itertools.product(range(B + 1), repeat=k * k):
            M = [list(entries[i * k:(i + 1) * k]) for i in range(k)]
            if not is_irreducible(M):
                continue
            count += 1
            vals.append(pf_data(M).eigenvalue)
    vals.sort()
    distinct = []
    for v in vals:
        if not distinct or v - distinct[-1] > 1e-9:
            distinct.append(v)
    gaps = [b - a for a, b in zip(distinct, distinct[1:])]
    return SpectrumGap(distinct, min(gaps) if gaps else math.inf, count)


# ---------------------------------------------------------------------------
# irreducibility evidence
# ---------------------------------------------------------------------------

def invariant_subgraphs(rep: GraphMap) -> List[List[str]]:
    g = rep.src
    out = []
    n = g.n_edges
    for size in range(1, n):
        for S in itertools.combinations(range(n), size):
            Sset = set(S)
            if all((o >> 1) in Sset for i in S for o in rep.edge_images[i].edges):
                out.append([g.edge_names[i] for i in S])
    return out


def _permitted_forest(g: MarkedGraph, edges: Sequence[str]) -> bool:
    """A forest whose components each contain at most one non-free vertex."""
    idx = [g.edge_index[e] for e in edges]
    parent = {}

    def find(v):
        parent.setdefault(v, v)
        while parent[v] != v:
            v = parent[v]
        return v

    for i in idx:
        a, b = (find(x) for x in g.edge_ends[i])
        if a == b:
            return False
        parent[a] = b
    comps: Dict[int, int] = {}
    for v in {v for i in idx for v in g.edge_ends[i]}:
        if not g.is_free(v):
            comps[find(v)] = comps.get(find(v), 0) + 1
    return all(c <= 1 for c in comps.values())


def _project(u: Element) -> Tuple[Tuple[int, int], ...]:
    """Image in G / <<G_1, ..., G_q>>: free syllables only, freely reduced."""
    fp = u.fp
    out: List[Tuple[int, int]] = []
    for s, g in u.syl:
        if fp.is_free_slot(s):
            if out and out[-1][0] == s:
                e = out[-1][1] + g
                out.pop()
                if e:
                    out.append((s, e))
            else:
                out.append((s, g))
    return tuple(out)


def _normal_closure_elements(fp: FreeProduct, bound: int, cap: int):
    """Elements of <<G_1..G_q>> with at most ``bound`` syllables."""
    letters = []
    for i, grp in enumerate(fp.factors):
        if grp.order is not None:
            letters += [fp.syllable(i, x) for x in grp.elements() if not grp.is_identity(x)]
        else:
            letters += [fp.gen(x) for x in grp.generators] + [fp.gen(x).inverse() for x in grp.generators]
    letters += [fp.gen(x) for x in fp.free_basis] + [fp.gen(x).inverse() for x in fp.free_basis]
    seen = {(): fp.identity}
    frontier = [fp.identity]
    yield fp.identity
    count = 1
    for _ in range(bound):
        nxt = []
        for u in frontier:
            for x in letters:
                w = u * x
                if w.syl in seen or len(w) > bound:
                    continue
                seen[w.syl] = w
                nxt.append(w)
                if not _project(w):
                    count += 1
                    if count > cap:
                        return
                    yield w
        frontier = nxt


@dataclass
class IwipEvidence:
    primitive: bool
    primitive_detail: str
    no_invariant_subgraph: bool
    invariant_witness: Optional[List[str]]
    no_invariant_factor: bool
    factor_witness: Optional[Dict[str, str]]
    bound: int
    candidates: int

    @property
    def passed(self) -> bool:
        return self.primitive and self.no_invariant_subgraph and self.no_invariant_factor

    def as_dict(self):
        return {"a_primitive": self.primitive, "a_detail": self.primitive_detail,
                "b_no_invariant_subgraph": self.no_invariant_subgraph, "b_witness": self.invariant_witness,
                "c_no_invariant_complement": self.no_invariant_factor, "c_witness": self.factor_witness,
                "c_bound": self.bound, "c_candidates": self.candidates, "passed": self.passed}


def iwip_evidence(phi: Automorphism, rep: GraphMap, bound: int = 6, cap: int = 200000) -> IwipEvidence:
    """Necessary-condition checklist for full irreducibility.

    (a) primitive transition matrix; (b) no invariant subgraph other than
    forests with at most one non-free vertex per component; (c) for rank 2,
    search for a free factor <a m, b n> (m, n in the normal closure of the
    factors) complementary to the factors and invariant under phi, acting on it
    as phi acts on G / <<G_i>>.
    """
    tm = transition_matrix(rep)
    pe = primitivity_exponent(tm.matrix)
    lam = pf_data(tm, require_irreducible=False).eigenvalue
    prim = pe is not None and lam > 1 + 1e-9
    detail = f"primitivity exponent {pe}, lambda {lam:.10g}" if pe else "not primitive"
    inv = [S for S in invariant_subgraphs(rep) if not _permitted_forest(rep.src, S)]
    fp = phi.fp
    witness, n_cand = None, 0
    if fp.r == 2:
        a_lab, b_lab = fp.free_basis
        imgs = {x: _project(phi.images[x]) for x in (a_lab, b_lab)}
        # phi-bar written as words in a, b
        def word(proj, x, y):
            out = fp.identity
            for s, e in proj:
                out = out * ((x if s == fp.q else y) ** e)
            return out
        single = [lab for lab in (a_lab, b_lab) if len(imgs[lab]) == 1 and abs(imgs[lab][0][1]) == 1]
        if single:
            src_lab = single[0]
            tgt_slot, tgt_exp = imgs[src_lab][0]
            for m in _normal_closure_elements(fp, bound, cap):
                n_cand += 1
                xs = {src_lab: fp.gen(src_lab) * m}
                # phi(x_src) = x_tgt^{+-1} fixes the other generator of the candidate factor
                tgt_lab = fp.free_basis[tgt_slot - fp.q]
                if tgt_lab == src_lab:
                    continue
                val = phi(xs[src_lab]) ** tgt_exp
                xs[tgt_lab] = val
                x, y = xs[a_lab], xs[b_lab]
                ok = all(phi(xs[lab]) == word(imgs[lab], x, y) for lab in (a_lab, b_lab))
                if ok and _project(fp.gen(tgt_lab).inverse() * val) == ():
                    witness = {a_lab: str(x), b_lab: str(y)}
                    break
    return IwipEvidence(prim, detail, not inv, inv[0] if inv else None, witness is None, witness, bound, n_cand)
