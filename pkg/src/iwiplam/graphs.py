"""Graphs of groups with trivial edge groups, decorated paths, and maps between them.

Oriented edges are integers: ``2*i`` runs edge ``i`` forwards, ``2*i + 1``
backwards, so reversal is ``o ^ 1``.  A decoration is a vertex-group element,
or ``None`` when trivial (always ``None`` at free vertices).
"""
from __future__ import annotations

import difflib
import random
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .freeprod import (Automorphism, Element, FreeProduct, factor_automorphism_inverse)


def rev(o: int) -> int:
    return o ^ 1


def dec_key(g):
    return () if g is None else (g,)


# ---------------------------------------------------------------------------
# marked graphs
# ---------------------------------------------------------------------------

class MarkedGraph:
    """Quotient graph of groups with a marking by the free product ``fp``.

    ``vertices`` is a list of ``(name, factor_index_or_None)``; ``edges`` a list
    of ``(name, src, dst)`` with vertex indices.  The spanning tree is the BFS
    tree from ``base`` (edges scanned in index order); the non-tree edges, in
    index order, play the role of the free basis in reading coordinates.
    """

    def __init__(self, fp: FreeProduct, vertices: Sequence[Tuple[str, Optional[int]]],
                 edges: Sequence[Tuple[str, int, int]], base: int = 0,
                 lengths: Optional[Sequence] = None,
                 marking: Optional[Dict[str, "DecoratedPath"]] = None,
                 check_minimal: bool = True):
        self.fp = fp
        self.vertex_names = [v[0] for v in vertices]
        self.vertex_factor = [v[1] for v in vertices]
        self.edge_names = [e[0] for e in edges]
        self.edge_ends = [(e[1], e[2]) for e in edges]
        self.base = base
        nv, ne = len(self.vertex_names), len(self.edge_names)
        if len(set(self.vertex_names)) != nv or len(set(self.edge_names)) != ne:
            raise ValueError("duplicate vertex or edge names")
        for name, (s, t) in zip(self.edge_names, self.edge_ends):
            if not (0 <= s < nv and 0 <= t < nv):
                raise ValueError(f"edge {name} has an endpoint outside the vertex set")
        if not 0 <= base < nv:
            raise ValueError("base vertex out of range")
        self.lengths = [Fraction(x) for x in (lengths if lengths is not None else [1] * ne)]
        if len(self.lengths) != ne or any(x <= 0 for x in self.lengths):
            raise ValueError("edge lengths must be positive, one per edge")
        factor_vertex = {}
        for v, i in enumerate(self.vertex_factor):
            if i is None:
                continue
            if not 0 <= i < fp.q or i in factor_vertex:
                raise ValueError(f"factor index {i} at vertex {self.vertex_names[v]} is invalid or repeated")
            factor_vertex[i] = v
        if len(factor_vertex) != fp.q:
            raise ValueError("every factor needs exactly one vertex")
        self.factor_vertex = factor_vertex
        self._build_tree()
        if len(self.nontree) != fp.r:
            raise ValueError(f"graph rank {len(self.nontree)} differs from free rank {fp.r}")
        if check_minimal:
            for v in range(nv):
                if self.vertex_factor[v] is None and self.valence(v) <= 1:
                    raise ValueError(f"free vertex {self.vertex_names[v]} has valence <= 1")
        self.edge_index = {n: i for i, n in enumerate(self.edge_names)}
        self.vertex_index = {n: i for i, n in enumerate(self.vertex_names)}
        if marking is None:
            marking = self.standard_marking()
        self.marking = {x: DecoratedPath(self, p.start, p.edges, p.decs) for x, p in marking.items()}
        self.mu = Automorphism(fp, {x: self.read(p) for x, p in self.marking.items()}, name="marking")
        for x, p in self.marking.items():
            if p.start != base or p.end != base:
                raise ValueError(f"marking loop for {x} is not based at the base vertex")
        self.mu_inv = self.mu.inverse()

    # --- structure ---------------------------------------------------------
    @property
    def n_edges(self) -> int:
        return len(self.edge_names)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_names)

    def src(self, o: int) -> int:
        s, t = self.edge_ends[o >> 1]
        return t if o & 1 else s

    def dst(self, o: int) -> int:
        s, t = self.edge_ends[o >> 1]
        return s if o & 1 else t

    def valence(self, v: int) -> int:
        return sum((s == v) + (t == v) for s, t in self.edge_ends)

    def directions(self, v: int) -> List[int]:
        return [o for o in range(2 * self.n_edges) if self.src(o) == v]

    def is_free(self, v: int) -> bool:
        return self.vertex_factor[v] is None

    def group_at(self, v: int):
        i = self.vertex_factor[v]
        return None if i is None else self.fp.factors[i]

    def dec_mul(self, v: int, g, h):
        if g is None:
            return h
        if h is None:
            return g
        grp = self.group_at(v)
        m = grp.mul(g, h)
        return None if grp.is_identity(m) else m

    def dec_inv(self, v: int, g):
        return None if g is None else self.group_at(v).inv(g)

    def dec_norm(self, v: int, g):
        if g is None:
            return None
        grp = self.group_at(v)
        if grp is None:
            raise ValueError(f"decoration at free vertex {self.vertex_names[v]}")
        return None if grp.is_identity(g) else g

    def volume(self) -> Fraction:
        return sum(self.lengths, Fraction(0))

    def with_lengths(self, lengths) -> "MarkedGraph":
        g = MarkedGraph.__new__(MarkedGraph)
        g.__dict__.update(self.__dict__)
        g.lengths = list(lengths)
        return g

    def _build_tree(self):
        nv = self.n_vertices
        self.tree_path: Dict[int, Tuple[int, ...]] = {self.base: ()}
        tree_edges = set()
        queue = deque([self.base])
        while queue:
            v = queue.popleft()
            for o in range(2 * self.n_edges):
                if self.src(o) == v and self.dst(o) not in self.tree_path:
                    self.tree_path[self.dst(o)] = self.tree_path[v] + (o,)
                    tree_edges.add(o >> 1)
                    queue.append(self.dst(o))
        if len(self.tree_path) != nv:
            raise ValueError("graph is not connected")
        self.nontree = [i for i in range(self.n_edges) if i not in tree_edges]
        self.free_slot = {i: self.fp.q + k for k, i in enumerate(self.nontree)}

    # --- paths -------------------------------------------------------------
    def path(self, start: int, edges: Sequence[int] = (), decs: Optional[Sequence] = None) -> "DecoratedPath":
        edges = tuple(edges)
        if decs is None:
            decs = (None,) * (len(edges) + 1)
        return DecoratedPath(self, start, edges, tuple(decs))

    def edge_path(self, o: int) -> "DecoratedPath":
        return self.path(self.src(o), (o,))

    def tree_to(self, v: int) -> "DecoratedPath":
        return self.path(self.base, self.tree_path[v])

    def read(self, p: "DecoratedPath") -> Element:
        """Element of G (in reading coordinates) spelled by p."""
        fp = self.fp
        syl: tuple = ()
        v = p.start
        for k in range(len(p.edges) + 1):
            g = p.decs[k]
            if g is not None:
                syl = fp._mul(syl, ((self.vertex_factor[v], g),))
            if k < len(p.edges):
                o = p.edges[k]
                slot = self.free_slot.get(o >> 1)
                if slot is not None:
                    syl = fp._mul(syl, ((slot, -1 if o & 1 else 1),))
                v = self.dst(o)
        return Element(fp, syl)

    def group_element(self, p: "DecoratedPath") -> Element:
        """Marked element of G represented by a path (loop at base)."""
        return self.mu_inv(self.read(p))

    def spell(self, g: Element, start: Optional[int] = None, end: Optional[int] = None) -> "DecoratedPath":
        """A tight path from ``start`` to ``end`` whose reading is ``g``."""
        start = self.base if start is None else start
        end = self.base if end is None else end
        out = self.tree_to(start).reverse()
        for slot, h in g.syl:
            if slot < self.fp.q:
                v = self.factor_vertex[slot]
                t = self.tree_to(v)
                out = out.concat(t).concat(self.path(v, (), (h,))).concat(t.reverse())
            else:
                i = self.nontree[slot - self.fp.q]
                o = 2 * i if h > 0 else 2 * i + 1
                loop = self.tree_to(self.src(o)).concat(self.edge_path(o)).concat(self.tree_to(self.dst(o)).reverse())
                for _ in range(abs(h)):
                    out = out.concat(loop)
        return out.concat(self.tree_to(end)).tighten()

    def standard_marking(self) -> Dict[str, "DecoratedPath"]:
        fp = self.fp
        return {x: self.spell(fp.gen(x)) for x in fp.generators}

    def parse_path(self, text: str, start: Optional[int] = None) -> "DecoratedPath":
        """Parse ``"b[t]a b^-1"``; a leading ``[g]`` needs ``start`` when no edge follows."""
        tokens = re.findall(r"\[([^\]]*)\]|([A-Za-z_][A-Za-z0-9_]*)(\^-1)?", text)
        edges: List[int] = []
        decs_raw: List[List[str]] = [[]]
        for dec, name, inv in tokens:
            if dec:
                decs_raw[-1].append(dec)
            else:
                if name not in self.edge_index:
                    raise ValueError(f"unknown edge {name!r} in path {text!r}")
                edges.append(2 * self.edge_index[name] + (1 if inv else 0))
                decs_raw.append([])
        if edges:
            s = self.src(edges[0])
            if start is not None and start != s:
                raise ValueError("path start does not match its first edge")
            start = s
        elif start is None:
            start = self.base
        for a, b in zip(edges, edges[1:]):
            if self.dst(a) != self.src(b):
                raise ValueError(f"edges are not consecutive in {text!r}")
        verts = [start] + [self.dst(o) for o in edges]
        decs = []
        for v, raws in zip(verts, decs_raw):
            g = None
            for raw in raws:
                g = self.dec_mul(v, g, self.parse_decoration(v, raw))
            decs.append(g)
        return self.path(start, edges, decs)

    def parse_decoration(self, v: int, raw: str):
        grp = self.group_at(v)
        if grp is None:
            raise ValueError(f"decoration [{raw}] at free vertex {self.vertex_names[v]}")
        m = re.fullmatch(r"\s*<(\d+)>\s*", raw)
        if m:
            return self.dec_norm(v, int(m.group(1)))
        el = self.fp.parse(raw)
        if not el.syl:
            return None
        if len(el.syl) != 1 or el.syl[0][0] != self.vertex_factor[v]:
            raise ValueError(f"decoration [{raw}] is not in the vertex group of {self.vertex_names[v]}")
        return el.syl[0][1]

    def format_dec(self, v: int, g) -> str:
        return "" if g is None else f"[{self.group_at(v).format_elem(g)}]"

    def random_path(self, rng: random.Random, n: int, dec_prob: float = 0.5) -> "DecoratedPath":
        """Random reduced path with n edges (random start, random decorations)."""
        v = rng.randrange(self.n_vertices)
        while not self.directions(v):
            v = rng.randrange(self.n_vertices)
        edges, decs = [], [None]
        for _ in range(n):
            choices = self.directions(v)
            grp = self.group_at(v)
            g = None
            if grp is not None and grp.order is not None and rng.random() < dec_prob:
                g = self.dec_norm(v, rng.choice(list(grp.elements())))
            elif grp is not None and grp.order is None and rng.random() < dec_prob:
                lab = rng.choice(grp.generators)
                g = self.dec_norm(v, grp.power(grp.gen(lab), rng.choice([1, -1, 2])))
            if edges and g is None:
                choices = [o for o in choices if o != rev(edges[-1])]
            if edges:
                decs[-1] = g
            o = rng.choice(choices)
            edges.append(o)
            decs.append(None)
            v = self.dst(o)
        return self.path(self.src(edges[0]) if edges else v, edges, decs)

    def describe(self) -> dict:
        return {
            "vertices": [{"name": n, "factor": f} for n, f in zip(self.vertex_names, self.vertex_factor)],
            "edges": [{"name": n, "src": self.vertex_names[s], "dst": self.vertex_names[t],
                       "length": str(l)} for n, (s, t), l in zip(self.edge_names, self.edge_ends, self.lengths)],
            "base": self.vertex_names[self.base],
        }


# ---------------------------------------------------------------------------
# decorated paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecoratedPath:
    """g0 e1 g1 ... en gn.  ``decs`` has one more entry than ``edges``."""

    graph: MarkedGraph = field(compare=False, repr=False)
    start: int
    edges: Tuple[int, ...]
    decs: tuple

    def __post_init__(self):
        if len(self.decs) != len(self.edges) + 1:
            raise ValueError("decoration count must be edge count + 1")

    def __len__(self):
        return len(self.edges)

    @property
    def end(self) -> int:
        return self.graph.dst(self.edges[-1]) if self.edges else self.start

    def vertices(self) -> List[int]:
        return [self.start] + [self.graph.dst(o) for o in self.edges]

    def length(self, lengths=None):
        lengths = self.graph.lengths if lengths is None else lengths
        return sum((lengths[o >> 1] for o in self.edges), Fraction(0) if lengths is self.graph.lengths else 0.0)

    def reverse(self) -> "DecoratedPath":
        gr = self.graph
        verts = self.vertices()
        decs = tuple(gr.dec_inv(v, g) for v, g in zip(reversed(verts), reversed(self.decs)))
        return DecoratedPath(gr, self.end, tuple(rev(o) for o in reversed(self.edges)), decs)

    def concat(self, other: "DecoratedPath") -> "DecoratedPath":
        if self.end != other.start:
            raise ValueError("paths do not meet")
        mid = self.graph.dec_mul(self.end, self.decs[-1], other.decs[0])
        return DecoratedPath(self.graph, self.start, self.edges + other.edges,
                             self.decs[:-1] + (mid,) + other.decs[1:])

    def __add__(self, other):
        return self.concat(other)

    def is_reduced(self) -> bool:
        return all(not (self.edges[k + 1] == rev(self.edges[k]) and self.decs[k + 1] is None)
                   for k in range(len(self.edges) - 1))

    def first_backtrack(self) -> Optional[int]:
        """Index k with e_{k+1} = reverse(e_k) and trivial decoration between, else None."""
        for k in range(len(self.edges) - 1):
            if self.edges[k + 1] == rev(self.edges[k]) and self.decs[k + 1] is None:
                return k
        return None

    def tighten(self) -> "DecoratedPath":
        gr = self.graph
        es: List[int] = []
        ds: list = [self.decs[0]]
        for o, h in zip(self.edges, self.decs[1:]):
            if es and ds[-1] is None and o == rev(es[-1]):
                es.pop()
                ds.pop()
                ds[-1] = gr.dec_mul(gr.dst(o), ds[-1], h)
            else:
                es.append(o)
                ds.append(h)
        return DecoratedPath(gr, self.start, tuple(es), tuple(ds))

    def subpath(self, i: int, j: int, keep_ends: bool = False) -> "DecoratedPath":
        """Edges i..j-1; boundary decorations dropped unless ``keep_ends``."""
        decs = list(self.decs[i:j + 1])
        if not keep_ends:
            decs[0] = decs[-1] = None
        start = self.graph.src(self.edges[i]) if i < len(self.edges) else self.end
        return DecoratedPath(self.graph, start, self.edges[i:j], tuple(decs))

    def key(self) -> tuple:
        """Hashable, orderable key of the path with boundary decorations dropped."""
        inner = self.decs[1:-1] if self.edges else ()
        return (self.edges, tuple(dec_key(g) for g in inner))

    def canonical(self) -> tuple:
        """Orbit-canonical key of the unoriented segment."""
        return min(self.key(), self.reverse().key())

    def loop_canonical(self) -> tuple:
        """Key of a closed path up to rotation, reversal and conjugation."""
        p = self.cyclic_tighten()
        if not p.edges:
            return ((), (dec_key(p.decs[0]),))
        cands = []
        for q in (p, p.reverse()):
            n = len(q.edges)
            # fold the boundary decoration into position 0 so rotations are clean
            decs = [q.graph.dec_mul(q.start, q.decs[-1], q.decs[0])] + list(q.decs[1:-1])
            for k in range(n):
                es = q.edges[k:] + q.edges[:k]
                ds = decs[k:] + decs[:k]
                cands.append((es, tuple(dec_key(g) for g in ds)))
        return min(cands)

    def cyclic_tighten(self) -> "DecoratedPath":
        """Tighten a closed path cyclically (assumes start == end)."""
        p = self.tighten()
        gr = self.graph
        while len(p.edges) >= 1:
            merged = gr.dec_mul(p.start, p.decs[-1], p.decs[0])
            if len(p.edges) >= 2 and merged is None and p.edges[-1] == rev(p.edges[0]):
                p = DecoratedPath(gr, gr.src(p.edges[1]), p.edges[1:-1], p.decs[1:-1]).tighten()
                continue
            break
        return p

    def windows(self, L: int):
        """Orbit-canonical keys of all length-L subpaths."""
        n = len(self.edges)
        out = set()
        for i in range(n - L + 1):
            out.add(self.subpath(i, i + L).canonical())
        return out

    def turns(self) -> List[tuple]:
        """Interior turns as (incoming-reversed direction, decoration, outgoing direction)."""
        return [(rev(self.edges[k]), self.decs[k + 1], self.edges[k + 1]) for k in range(len(self.edges) - 1)]

    def __str__(self):
        return format_path(self)

    def __repr__(self):
        return f"DecoratedPath({self})"


def format_path(p: DecoratedPath) -> str:
    gr = p.graph
    if not p.edges:
        return gr.format_dec(p.start, p.decs[0]) or f"<{gr.vertex_names[p.start]}>"
    out = gr.format_dec(p.start, p.decs[0])
    v = p.start
    for k, o in enumerate(p.edges):
        name = gr.edge_names[o >> 1] + ("^-1" if o & 1 else "")
        if k and not out.endswith("]"):
            out += " "
        out += name
        v = gr.dst(o)
        out += gr.format_dec(v, p.decs[k + 1])
    return out


def key_to_path(gr: MarkedGraph, key: tuple) -> DecoratedPath:
    edges, dks = key
    decs = (None,) + tuple(d[0] if d else None for d in dks) + (None,)
    start = gr.src(edges[0]) if edges else gr.base
    return DecoratedPath(gr, start, tuple(edges), decs if edges else (None,))


def format_key(gr: MarkedGraph, key: tuple) -> str:
    return format_path(key_to_path(gr, key))


# ---------------------------------------------------------------------------
# maps of graphs of groups
# ---------------------------------------------------------------------------

class GraphMap:
    """Morphism src -> dst: vertex map, vertex-group maps, edge images.

    ``theta[v]`` maps generator labels of the factor at a non-free vertex v to
    elements of the factor at ``vmap[v]``.  The image of g0 e1 g1 ... is
    theta(g0) f(e1) theta(g1) ... pulled tight.
    """

    def __init__(self, src: MarkedGraph, dst: MarkedGraph, vmap: Sequence[int],
                 theta: Dict[int, Dict[str, object]], edge_images: Sequence[DecoratedPath],
                 name: str = "", automorphism: Optional[Automorphism] = None):
        self.src, self.dst = src, dst
        self.vmap = list(vmap)
        self.theta = {v: dict(t) for v, t in theta.items()}
        self.edge_images = [p for p in edge_images]
        self.name = name
        self.automorphism = automorphism
        self._theta_cache: Dict[tuple, object] = {}
        self._validate()
        self._images = []
        for q in self.edge_images:
            self._images += [q, q.reverse()]

    def _validate(self):
        s, d = self.src, self.dst
        if len(self.vmap) != s.n_vertices or len(self.edge_images) != s.n_edges:
            raise ValueError("map data has the wrong size")
        for v in range(s.n_vertices):
            fi = s.vertex_factor[v]
            if fi is not None:
                w = self.vmap[v]
                if d.vertex_factor[w] is None:
                    raise ValueError(f"non-free vertex {s.vertex_names[v]} sent to a free vertex")
                if v not in self.theta:
                    raise ValueError(f"missing factor map at {s.vertex_names[v]}")
                src_g, dst_g = s.group_at(v), d.group_at(w)
                if src_g.kind != dst_g.kind or src_g.order != dst_g.order:
                    raise ValueError(f"vertex {s.vertex_names[v]}: factor kinds differ")
        for i, p in enumerate(self.edge_images):
            a, b = s.edge_ends[i]
            if p.graph is not d or p.start != self.vmap[a] or p.end != self.vmap[b]:
                raise ValueError(f"image of edge {s.edge_names[i]} is not incident-compatible")

    # --- evaluation ------------------------------------------------------
    def theta_at(self, v: int, g):
        if g is None:
            return None
        key = (v, g)
        if key not in self._theta_cache:
            grp = self.src.group_at(v)
            tgt = self.dst.group_at(self.vmap[v])
            val = tgt.evaluate(grp.as_word(g), self.theta[v])
            self._theta_cache[key] = None if tgt.is_identity(val) else val
        return self._theta_cache[key]

    def image_of(self, o: int) -> DecoratedPath:
        return self._images[o]

    def apply(self, p: DecoratedPath, tight: bool = True) -> DecoratedPath:
        if p.graph is not self.src:
            raise ValueError("path is not in the domain graph")
        d = self.dst
        es: List[int] = []
        ds: list = [self.theta_at(p.start, p.decs[0])]
        v = p.start
        for k, o in enumerate(p.edges):
            img = self.image_of(o)
            w = self.vmap[v]
            ds[-1] = d.dec_mul(w, ds[-1], img.decs[0])
            es.extend(img.edges)
            ds.extend(img.decs[1:])
            v = self.src.dst(o)
            ds[-1] = d.dec_mul(self.vmap[v], ds[-1], self.theta_at(v, p.decs[k + 1]))
        out = DecoratedPath(d, self.vmap[p.start], tuple(es), tuple(ds))
        return out.tighten() if tight else out

    __call__ = apply

    def iterate(self, p: DecoratedPath, k: int) -> DecoratedPath:
        for _ in range(k):
            p = self.apply(p)
        return p

    def compose(self, other: "GraphMap") -> "GraphMap":
        """self o other."""
        if other.dst is not self.src:
            raise ValueError("maps do not compose")
        vmap = [self.vmap[w] for w in other.vmap]
        theta = {}
        for v, imgs in other.theta.items():
            mid = other.vmap[v]
            tgt = self.dst.group_at(vmap[v])
            theta[v] = {}
            for lab, g in imgs.items():
                val = self.theta_at(mid, other.dst.dec_norm(mid, g))
                theta[v][lab] = tgt.identity if val is None else val
        edges = [self.apply(p) for p in other.edge_images]
        auto = None
        if self.automorphism is not None and other.automorphism is not None:
            auto = self.automorphism * other.automorphism
        return GraphMap(other.src, self.dst, vmap, theta, edges,
                        name=f"{self.name}.{other.name}" if self.name and other.name else "",
                        automorphism=auto)

    def power(self, k: int) -> "GraphMap":
        if self.src is not self.dst:
            raise ValueError("power needs a self-map")
        out = identity_map(self.src)
        for _ in range(k):
            out = self.compose(out)
        out.name = f"{self.name}^{k}" if self.name else ""
        if self.automorphism is not None:
            out.automorphism = self.automorphism ** k
        return out

    def is_self_map(self) -> bool:
        return self.src is self.dst

    def induced_automorphism(self) -> Automorphism:
        """Automorphism of G realized through both markings (up to inner)."""
        fp = self.src.fp
        imgs = {x: self.dst.group_element(self.apply(loop)) for x, loop in self.src.marking.items()}
        return Automorphism(fp, imgs, check=False)

    def realizes(self, psi: Automorphism) -> bool:
        from .freeprod import out_equal
        return out_equal(self.induced_automorphism(), psi)

    def stretch(self, i: int, src_lengths=None, dst_lengths=None) -> float:
        sl = self.src.lengths if src_lengths is None else src_lengths
        return self.edge_images[i].length(dst_lengths) / sl[i]

    def describe(self) -> dict:
        return {"name": self.name,
                "edges": {self.src.edge_names[i]: format_path(p) for i, p in enumerate(self.edge_images)}}

    def __repr__(self):
        body = ", ".join(f"{self.src.edge_names[i]}->{format_path(p)}" for i, p in enumerate(self.edge_images))
        return f"GraphMap({self.name}: {body})"


def identity_map(g: MarkedGraph) -> GraphMap:
    theta = {v: {lab: g.group_at(v).gen(lab) for lab in g.group_at(v).generators}
             for v in range(g.n_vertices) if not g.is_free(v)}
    m = GraphMap(g, g, list(range(g.n_vertices)), theta,
                 [g.edge_path(2 * i) for i in range(g.n_edges)], name="id",
                 automorphism=Automorphism.identity(g.fp))
    return m


def map_from_strings(src: MarkedGraph, dst: MarkedGraph, images: Dict[str, str],
                     vmap: Optional[Dict[str, str]] = None, theta: Optional[Dict[str, Dict[str, str]]] = None,
                     name: str = "", automorphism: Optional[Automorphism] = None) -> GraphMap:
    """Build a map from edge-image strings; vertex map inferred from images where possible."""
    vm: Dict[int, int] = {}
    if vmap:
        for a, b in vmap.items():
            vm[src.vertex_index[a]] = dst.vertex_index[b]
    for v in range(src.n_vertices):
        fi = src.vertex_factor[v]
        if fi is not None and v not in vm:
            vm[v] = dst.factor_vertex[fi]
    edge_imgs: List[Optional[DecoratedPath]] = [None] * src.n_edges
    pending = dict(images)
    for _ in range(len(images) + 1):
        for ename, text in list(pending.items()):
            i = src.edge_index[ename]
            a, b = src.edge_ends[i]
            start = vm.get(a)
            p = dst.parse_path(text, start=start if not re.search(r"[A-Za-z_]", re.sub(r"\[[^\]]*\]", "", text)) else None)
            if p.edges:
                vm.setdefault(a, p.start)
                vm.setdefault(b, p.end)
            elif a in vm:
                vm.setdefault(b, vm[a])
            else:
                continue
            edge_imgs[i] = p
            del pending[ename]
    if pending or len(vm) != src.n_vertices:
        raise ValueError("cannot infer the vertex map from the edge images")
    th: Dict[int, Dict[str, object]] = {}
    for v in range(src.n_vertices):
        grp = src.group_at(v)
        if grp is None:
            continue
        w = vm[v]
        given = (theta or {}).get(src.vertex_names[v], {})
        th[v] = {}
        for lab in grp.generators:
            if lab in given:
                val = dst.parse_decoration(w, given[lab])
                th[v][lab] = dst.group_at(w).identity if val is None else val
            else:
                th[v][lab] = dst.group_at(w).gen(lab) if lab in dst.group_at(w).generators else grp.gen(lab)
    return GraphMap(src, dst, [vm[v] for v in range(src.n_vertices)], th, edge_imgs,
                    name=name, automorphism=automorphism)


def build_omap(src: MarkedGraph, dst: MarkedGraph, psi: Automorphism, name: str = "") -> GraphMap:
    """A map src -> dst realizing psi through the markings.

    In reading coordinates psi becomes alpha = mu_dst psi mu_src^-1.  Each
    non-free vertex goes to the vertex of its target factor via a path spelling
    the factor conjugator; free vertices go to the base; each edge is spelled
    from alpha of its reading.
    """
    fp = src.fp
    if dst.fp is not fp:
        raise ValueError("graphs over different free products")
    psi.factor_data()  # raises outside Aut(G, O)
    alpha = dst.mu * psi * src.mu_inv
    data = alpha.factor_data()
    vmap, theta, P = [], {}, []
    for v in range(src.n_vertices):
        fi = src.vertex_factor[v]
        if fi is None:
            vmap.append(dst.base)
            P.append(dst.path(dst.base))
        else:
            j, c, imgs = data[fi]
            w = dst.factor_vertex[j]
            vmap.append(w)
            theta[v] = imgs
            P.append(dst.spell(c, dst.base, w))
    edges = []
    for i in range(src.n_edges):
        a, b = src.edge_ends[i]
        x = src.read(src.edge_path(2 * i))
        edges.append(P[a].reverse().concat(dst.spell(alpha(x))).concat(P[b]).tighten())
    f = GraphMap(src, dst, vmap, theta, edges, name=name or psi.name, automorphism=psi)
    if not f.realizes(psi):
        raise AssertionError("constructed map does not realize the automorphism")
    return f


# ---------------------------------------------------------------------------
# metrics and comparison
# ---------------------------------------------------------------------------

@dataclass
class MapMetrics:
    lip: float
    vol: float
    qvol: float
    bcc_upper: float
    stretches: List[float]

    def as_dict(self):
        return {"lip": self.lip, "vol": self.vol, "qvol": self.qvol, "bcc_upper": self.bcc_upper}


def metrics(f: GraphMap, src_lengths=None, dst_lengths=None) -> MapMetrics:
    sl = [float(x) for x in (f.src.lengths if src_lengths is None else src_lengths)]
    dl = [float(x) for x in (f.dst.lengths if dst_lengths is None else dst_lengths)]
    st = [f.edge_images[i].length(dl) / sl[i] for i in range(f.src.n_edges)]
    lip = max(st) if st else 0.0
    vol = sum(sl)
    return MapMetrics(lip=lip, vol=vol, qvol=vol, bcc_upper=lip * vol, stretches=st)


def coincidence_constant(f: GraphMap, h: GraphMap) -> float:
    mf, mh = metrics(f), metrics(h)
    return max(mf.vol * mf.lip, mh.vol * mh.lip)


def measured_cancellation(f: GraphMap, p: DecoratedPath, q: DecoratedPath, lengths=None) -> float:
    """(|[f p]| + |[f q]| - |[f(pq)]|) / 2 in the codomain metric."""
    lengths = [float(x) for x in (f.dst.lengths if lengths is None else lengths)]
    a = f.apply(p).length(lengths)
    b = f.apply(q).length(lengths)
    c = f.apply(p.concat(q)).length(lengths)
    return (a + b - c) / 2


@dataclass
class OmapComparison:
    common: str
    common_length: float
    prefix_discrepancy: float
    suffix_discrepancy: float
    image_f: str
    image_h: str

    def as_dict(self):
        return dict(self.__dict__)


def _tokens(p: DecoratedPath) -> list:
    out = []
    for k, o in enumerate(p.edges):
        if k:
            out.append(("d", dec_key(p.decs[k])))
        out.append(("e", o))
    return out


def compare_omaps(f: GraphMap, h: GraphMap, p: DecoratedPath) -> OmapComparison:
    """Longest common decorated middle of [f(p)] and [h(p)] plus the end discrepancies."""
    A, B = f.apply(p), h.apply(p)
    ta, tb = _tokens(A), _tokens(B)
    sm = difflib.SequenceMatcher(None, ta, tb, autojunk=False)
    m = sm.find_longest_match(0, len(ta), 0, len(tb))
    i, j, size = m.a, m.b, m.size
    # a match must start and end on edge tokens
    if size and ta[i][0] == "d":
        i, j, size = i + 1, j + 1, size - 1
    if size and ta[i + size - 1][0] == "d":
        size -= 1
    lens = [float(x) for x in f.dst.lengths]
    if size <= 0:
        la, lb = A.length(lens), B.length(lens)
        return OmapComparison("", 0.0, max(la, lb), max(la, lb), format_path(A), format_path(B))
    ea, eb = i // 2, j // 2
    n = (size + 1) // 2
    common = A.subpath(ea, ea + n)
    pre = max(A.subpath(0, ea).length(lens), B.subpath(0, eb).length(lens))
    suf = max(A.subpath(ea + n, len(A)).length(lens), B.subpath(eb + n, len(B)).length(lens))
    return OmapComparison(format_path(common), common.length(lens), pre, suf, format_path(A), format_path(B))


# ---------------------------------------------------------------------------
# fold factorization
# ---------------------------------------------------------------------------

class FoldError(ValueError):
    pass


@dataclass
class FoldStep:
    kind: str  # "subdivide", "fold"
    map: GraphMap
    vertex: str = ""
    germs: Tuple[str, str] = ("", "")
    twist: Optional[str] = None
    reframe: Optional[str] = None

    def as_dict(self):
        return {"kind": self.kind, "vertex": self.vertex, "germs": list(self.germs),
                "twist": self.twist, "reframe": self.reframe}


@dataclass
class FoldFactorization:
    steps: List[FoldStep]
    terminal: GraphMap

    @property
    def folds(self) -> List[FoldStep]:
        return [s for s in self.steps if s.kind == "fold"]

    def composite(self) -> GraphMap:
        out = None
        for s in self.steps:
            out = s.map if out is None else s.map.compose(out)
        return self.terminal if out is None else self.terminal.compose(out)

    def as_dict(self):
        return {"steps": [s.as_dict() for s in self.steps],
                "terminal": self.terminal.describe()}


def _oname(g: MarkedGraph, o: int) -> str:
    return g.edge_names[o >> 1] + ("^-1" if o & 1 else "")


def _factor_inverse_map(grp, imgs):
    return factor_automorphism_inverse(grp, imgs)


def subdivide(f: GraphMap) -> Tuple[GraphMap, GraphMap]:
    """Split each domain edge so every piece maps to one edge.  Returns (S, f') with f = f' o S."""
    s, d = f.src, f.dst
    vertices = [(n, fi) for n, fi in zip(s.vertex_names, s.vertex_factor)]
    vmap2 = list(f.vmap)
    new_edges, new_imgs, pieces = [], [], []
    for i, img in enumerate(f.edge_images):
        if not img.edges:
            raise FoldError(f"edge {s.edge_names[i]} collapses to a point")
        a, b = s.edge_ends[i]
        n = len(img.edges)
        chain = [a]
        for k in range(1, n):
            vertices.append((f"{s.edge_names[i]}.{k}", None))
            vmap2.append(d.dst(img.edges[k - 1]))
            chain.append(len(vertices) - 1)
        chain.append(b)
        idx = []
        for k in range(n):
            name = s.edge_names[i] if n == 1 else f"{s.edge_names[i]}{k + 1}"
            new_edges.append((name, chain[k], chain[k + 1]))
            idx.append(len(new_edges) - 1)
            decs = [img.decs[k], None]
            if k == n - 1:
                decs[1] = img.decs[n]
            new_imgs.append((img.edges[k], tuple(decs)))
        pieces.append(idx)
    sub = MarkedGraph(s.fp, vertices, new_edges, base=s.base,
                      lengths=[Fraction(1)] * len(new_edges), marking=None, check_minimal=False)
    S_imgs = [sub.path(s.edge_ends[i][0], tuple(2 * j for j in idx)) for i, idx in enumerate(pieces)]
    ident_theta = {v: {lab: s.group_at(v).gen(lab) for lab in s.group_at(v).generators}
                   for v in range(s.n_vertices) if not s.is_free(v)}
    S = GraphMap(s, sub, list(range(s.n_vertices)), ident_theta, S_imgs, name="subdivide")
    # transport the marking so that S is marking-preserving
    sub.marking = {x: S.apply(p) for x, p in s.marking.items()}
    sub.mu = Automorphism(sub.fp, {x: sub.read(p) for x, p in sub.marking.items()}, check=False)
    sub.mu_inv = sub.mu.inverse()
    f_imgs = [d.path(d.src(o), (o,), decs) for o, decs in new_imgs]
    f2 = GraphMap(sub, d, vmap2, f.theta, f_imgs, name=f.name)
    return S, f2


def _candidates(f: GraphMap):
    g = f.src
    out = []
    for v in range(g.n_vertices):
        dirs = g.directions(v)
        info = {}
        for o in dirs:
            img = f.image_of(o)
            info[o] = (img.edges[0], img.decs[0])
        for x in range(len(dirs)):
            for y in range(x + 1, len(dirs)):
                o1, o2 = dirs[x], dirs[y]
                if info[o1][0] != info[o2][0]:
                    continue
                if g.is_free(v) and info[o1][1] != info[o2][1]:
                    continue
                out.append((v, o1, o2))
    return out


def _fold_once(f: GraphMap, v: int, o1: int, o2: int) -> Tuple[FoldStep, GraphMap]:
    g, d = f.src, f.dst
    w = f.vmap[v]
    imgs = [p for p in f.edge_images]
    hs = lambda o: (imgs[o >> 1].reverse() if o & 1 else imgs[o >> 1]).decs[0]
    ht = lambda o: (imgs[o >> 1].reverse() if o & 1 else imgs[o >> 1]).decs[-1]

    def set_img(o, p):
        imgs[o >> 1] = p.reverse() if o & 1 else p

    def lmul(o, k):  # f(o) <- k f(o) at the start of direction o
        p = imgs[o >> 1].reverse() if o & 1 else imgs[o >> 1]
        set_img(o, d.path(p.start, (), (k,)).concat(p))

    twist_g, tw_dir = None, o2
    if not g.is_free(v) and hs(o1) != hs(o2):
        grp = g.group_at(v)
        target = d.dec_mul(w, hs(o2), d.dec_inv(w, hs(o1)))
        inv_imgs = _factor_inverse_map(grp, f.theta[v])
        twist_g = g.dec_norm(v, grp.evaluate(d.group_at(w).as_word(target), inv_imgs))
        lmul(o2, d.dec_inv(w, f.theta_at(v, twist_g)))
    u1, u2 = g.dst(o1), g.dst(o2)
    if u1 == u2:
        raise FoldError(f"fold at {g.vertex_names[v]} would identify germs with the same terminal vertex")
    if not g.is_free(u1) and not g.is_free(u2):
        raise FoldError("fold would merge two non-free vertices")
    if g.is_free(u1) and not g.is_free(u2):
        o1, o2, u1, u2 = o2, o1, u2, u1
    wu = f.vmap[u1]
    reframe = None
    z = None
    if g.is_free(u1):
        if ht(o1) != ht(o2):
            k = d.dec_mul(wu, d.dec_inv(wu, ht(o2)), ht(o1))
            reframe = d.format_dec(wu, k)
            for o in g.directions(u2):
                lmul(o, d.dec_inv(wu, k))
    else:
        grp = g.group_at(u1)
        target = d.dec_mul(wu, d.dec_inv(wu, ht(o1)), ht(o2))
        if target is not None:
            inv_imgs = _factor_inverse_map(grp, f.theta[u1])
            z = g.dec_norm(u1, grp.evaluate(d.group_at(wu).as_word(target), inv_imgs))
    e2 = o2 >> 1
    # new graph
    keep_v = [x for x in range(g.n_vertices) if x != u2]
    vnew = {x: k for k, x in enumerate(keep_v)}
    vnew[u2] = vnew[u1]
    keep_e = [i for i in range(g.n_edges) if i != e2]
    enew = {i: k for k, i in enumerate(keep_e)}
    vertices = [(g.vertex_names[x], g.vertex_factor[x]) for x in keep_v]
    edges = [(g.edge_names[i], vnew[g.edge_ends[i][0]], vnew[g.edge_ends[i][1]]) for i in keep_e]
    base = vnew[g.base]
    G2 = _raw_graph(g.fp, vertices, edges, base, [g.lengths[i] for i in keep_e])
    o1n = 2 * enew[o1 >> 1] + (o1 & 1)
    F_imgs = []
    for i in range(g.n_edges):
        s0, t0 = g.edge_ends[i]
        if i == e2:
            via = G2.path(vnew[v], (o1n,), (None, G2.dec_norm(vnew[u1], z)))
            F_imgs.append(via.reverse() if o2 & 1 else via)
        else:
            F_imgs.append(G2.edge_path(2 * enew[i]))
    if twist_g is not None:
        # the twist at v: the twisted germ leaves v through [twist_g]
        t_img = F_imgs[tw_dir >> 1].reverse() if tw_dir & 1 else F_imgs[tw_dir >> 1]
        t_img = G2.path(t_img.start, (), (twist_g,)).concat(t_img)
        F_imgs[tw_dir >> 1] = t_img.reverse() if tw_dir & 1 else t_img
    ident_theta = {x: {lab: g.group_at(x).gen(lab) for lab in g.group_at(x).generators}
                   for x in range(g.n_vertices) if not g.is_free(x)}
    F = GraphMap(g, G2, [vnew[x] for x in range(g.n_vertices)], ident_theta, F_imgs, name="fold")
    G2.marking = {x: F.apply(p) for x, p in g.marking.items()}
    G2.mu = Automorphism(G2.fp, {x: G2.read(p) for x, p in G2.marking.items()}, check=False)
    G2.mu_inv = G2.mu.inverse()
    theta2 = {vnew[x]: t for x, t in f.theta.items()}
    f2 = GraphMap(G2, d, [f.vmap[x] for x in keep_v], theta2, [imgs[i] for i in keep_e], name=f.name)
    step = FoldStep("fold", F, vertex=g.vertex_names[v], germs=(_oname(g, o1), _oname(g, o2)),
                    twist=None if twist_g is None else g.format_dec(v, twist_g), reframe=reframe)
    return step, f2


def _raw_graph(fp, vertices, edges, base, lengths) -> MarkedGraph:
    g = MarkedGraph.__new__(MarkedGraph)
    g.fp = fp
    g.vertex_names = [v[0] for v in vertices]
    g.vertex_factor = [v[1] for v in vertices]
    g.edge_names = [e[0] for e in edges]
    g.edge_ends = [(e[1], e[2]) for e in edges]
    g.base = base
    g.lengths = list(lengths)
    g.factor_vertex = {i: v for v, i in enumerate(g.vertex_factor) if i is not None}
    g.edge_index = {n: i for i, n in enumerate(g.edge_names)}
    g.vertex_index = {n: i for i, n in enumerate(g.vertex_names)}
    g._build_tree()
    return g


def fold_factorize(m: GraphMap, order: str = "first") -> FoldFactorization:
    """Subdivide, then fold germ pairs with equal images until an isomorphism remains.

    ``order`` picks the first or last available fold at each step, giving
    distinct factorizations of the same map.
    """
    S, f = subdivide(m)
    steps = [FoldStep("subdivide", S)] if any(len(p) > 1 for p in m.edge_images) else []
    if not steps:
        # no subdivision needed; keep the domain as is
        f = GraphMap(m.src, m.dst, m.vmap, m.theta, m.edge_images, name=m.name)
    limit = 4 * (sum(len(p) for p in m.edge_images) + m.src.n_edges) + 8
    for _ in range(limit):
        cands = _candidates(f)
        if not cands:
            break
        v, o1, o2 = cands[0] if order == "first" else cands[-1]
        step, f = _fold_once(f, v, o1, o2)
        steps.append(step)
    else:
        raise FoldError("fold sequence did not terminate")
    d = f.dst
    targets = sorted(p.edges[0] >> 1 for p in f.edge_images)
    if targets != list(range(d.n_edges)) or sorted(f.vmap) != list(range(d.n_vertices)):
        raise FoldError("folded map is not an isomorphism (input is not a homotopy equivalence)")
    f.name = "isomorphism"
    return FoldFactorization(steps, f)
