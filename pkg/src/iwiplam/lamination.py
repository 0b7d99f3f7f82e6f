"""The attracting lamination of a train track map, encoded by its window language.

A window is a leaf segment of a fixed combinatorial length, stored as an
orbit-canonical key (boundary decorations dropped, minimum over both
orientations) so that equality of keys is equality of segments up to the
group action.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .graphs import DecoratedPath, GraphMap, MarkedGraph, dec_key, format_key, key_to_path, metrics, rev
from .traintrack import (DEFAULT_DEPTH, path_turns, pf_data, transition_matrix, turn_image,
                         verify_traintrack)

STABLE_STEPS = 3


class HorizonExceeded(RuntimeError):
    """The window set did not stabilize before the iterate horizon."""


def path_windows(p: DecoratedPath, L: int) -> List[tuple]:
    """Canonical keys of the length-L subpaths of p, in order of position."""
    gr = p.graph
    E = p.edges
    n = len(E)
    if L <= 0 or n < L:
        return []
    verts = p.vertices()
    D = [dec_key(g) for g in p.decs]
    RE = tuple(rev(o) for o in reversed(E))
    RD = [dec_key(gr.dec_inv(v, g)) for v, g in zip(reversed(verts), reversed(p.decs))]
    out = []
    for i in range(n - L + 1):
        fw = (E[i:i + L], tuple(D[i + 1:i + L]))
        j = n - i - L
        bw = (RE[j:j + L], tuple(RD[j + 1:j + L]))
        out.append(fw if fw <= bw else bw)
    return out


def cyclic_windows(loop: DecoratedPath, L: int) -> List[tuple]:
    """One canonical length-L window per position of a closed path, read cyclically."""
    gr = loop.graph
    p = loop.cyclic_tighten()
    n = len(p.edges)
    if n == 0:
        return []
    junction = gr.dec_mul(p.start, p.decs[-1], p.decs[0])
    reps = L // n + 2
    edges = p.edges * reps
    decs = (junction,) + (p.decs[1:-1] + (junction,)) * reps
    unrolled = DecoratedPath(gr, p.start, edges, decs)
    return path_windows(unrolled, L)[:n]


class WindowLanguage:
    """Shared queries for anything that can list its length-L windows."""

    graph: MarkedGraph

    def leaf_segments(self, L: int) -> Set[tuple]:
        raise NotImplementedError

    def is_leaf_segment(self, p: DecoratedPath) -> bool:
        p = p.tighten()
        if not p.edges:
            return True
        return p.canonical() in self.leaf_segments(len(p))

    def membership(self, p: DecoratedPath) -> str:
        try:
            return "member" if self.is_leaf_segment(p) else "non-member"
        except HorizonExceeded:
            return "unknown-at-horizon"

    def window_strings(self, L: int) -> List[str]:
        return sorted(format_key(self.graph, k) for k in self.leaf_segments(L))

    def subwindows(self, key: tuple, L: int) -> Set[tuple]:
        return set(path_windows(key_to_path(self.graph, key), L))

    def quasiperiodicity_constant(self, L: int, cap: int = 64) -> "QPResult":
        """Least L' such that every L'-window contains a translate of every L-window."""
        short = self.leaf_segments(L)
        for Lp in range(L, cap + 1):
            long = self.leaf_segments(Lp)
            missing = None
            for w in sorted(long):
                if not short <= self.subwindows(w, L):
                    missing = w
                    break
            if missing is None:
                return QPResult(L, Lp, True, len(short), len(long))
        return QPResult(L, None, False, len(short), 0, lower_bound=cap + 1)


@dataclass
class QPResult:
    L: int
    constant: Optional[int]
    found: bool
    n_short: int
    n_long: int
    lower_bound: Optional[int] = None

    def as_dict(self):
        return dict(self.__dict__)


class LaminationSampler(WindowLanguage):
    """Cached iterates [f^k(e)] of a train track map with a primitive transition matrix."""

    def __init__(self, f: GraphMap, max_k: int = 60, max_edges: int = 400000,
                 depth: int = DEFAULT_DEPTH, check: bool = True):
        if not f.is_self_map():
            raise ValueError("sampler needs a self-map")
        self.f = f
        self.graph = f.src
        self.depth = depth
        self.max_k = max_k
        self.max_edges = max_edges
        tm = transition_matrix(f)
        self.pf = pf_data(tm) if tm.irreducible else None
        if check:
            if self.pf is None or not self.pf.primitive:
                raise ValueError("top stratum is not primitive; the window language is not defined here")
            tt = verify_traintrack(f, depth)
            if not tt.passed:
                raise ValueError(f"not a train track map: {tt.witness}")
        self._iter: Dict[int, List[DecoratedPath]] = {
            e: [self.graph.edge_path(2 * e)] for e in range(self.graph.n_edges)}
        self._windows: Dict[Tuple[int, Optional[int]], Set[tuple]] = {}
        self.horizon: Dict[Tuple[int, Optional[int]], int] = {}

    def iterate(self, e: int, k: int) -> DecoratedPath:
        cache = self._iter[e]
        while len(cache) <= k:
            cache.append(self.f.apply(cache[-1]))
        return cache[k]

    def _stabilize(self, L: int, seeds: Iterable[int]) -> Tuple[Set[tuple], int]:
        seeds = list(seeds)
        union: Set[tuple] = set()
        stable = 0
        for k in range(self.max_k + 1):
            its = [self.iterate(e, k) for e in seeds]
            if max(len(p) for p in its) > self.max_edges:
                break
            new = set()
            for p in its:
                new.update(path_windows(p, L))
            grown = not new <= union
            union |= new
            if min(len(p) for p in its) < 2 * L + 2:
                continue
            stable = 0 if grown else stable + 1
            if stable >= STABLE_STEPS:
                return union, k
        raise HorizonExceeded(f"window set of length {L} did not stabilize by k = {k}")

    def leaf_segments(self, L: int, seed: Optional[int] = None) -> Set[tuple]:
        key = (L, seed)
        if key not in self._windows:
            seeds = range(self.graph.n_edges) if seed is None else [seed]
            self._windows[key], self.horizon[key] = self._stabilize(L, seeds)
        return self._windows[key]

    def weak_convergence_ratio(self, loop: DecoratedPath, i: int, L: int) -> float:
        """Share of positions of [f^i(loop)] whose length-L window is a leaf segment."""
        p = loop.cyclic_tighten()
        if not p.edges:
            raise ValueError("degenerate loop")
        for _ in range(i):
            p = self.f.apply(p).cyclic_tighten()
        ws = cyclic_windows(p, L)
        lang = self.leaf_segments(L)
        return sum(w in lang for w in ws) / len(ws)

    def taken_turns(self, cap: int = DEFAULT_DEPTH) -> Set[tuple]:
        """Turns crossed by iterated edges: edge-image turns closed under the turn map."""
        pending = [t for img in self.f.edge_images for t in path_turns(img)]
        seen: Set[tuple] = set()
        for _ in range(cap):
            nxt = []
            for t in pending:
                if t not in seen:
                    seen.add(t)
                    nxt.append(turn_image(self.f, t))
            if not nxt:
                break
            pending = nxt
        return seen

    def preimage_window(self, key: tuple) -> Optional[tuple]:
        """A window u with key contained in [f(u)], searched over short windows."""
        L = len(key[0])
        for m in range(1, L + 2):
            for u in sorted(self.leaf_segments(m)):
                img = self.f.apply(key_to_path(self.graph, u))
                if key in set(path_windows(img, L)):
                    return u
        return None


class PushedLanguage(WindowLanguage):
    """Windows of a lamination pushed through a map, with cancellation buffers trimmed."""

    def __init__(self, base: WindowLanguage, tau: GraphMap, max_source: int = 64,
                 lengths=None):
        if tau.src is not base.graph:
            raise ValueError("map does not start at the sampler's graph")
        self.base = base
        self.tau = tau
        self.graph = tau.dst
        self.max_source = max_source
        lens = [float(x) for x in (tau.dst.lengths if lengths is None else lengths)]
        self.lengths = lens
        self.bcc = metrics(tau, None, lens).bcc_upper
        self._windows: Dict[int, Set[tuple]] = {}

    def trim(self, p: DecoratedPath) -> DecoratedPath:
        """Drop edges from both ends until at least bcc length is removed at each end."""
        E = p.edges
        i, acc = 0, 0.0
        while i < len(E) and acc < self.bcc - 1e-12:
            acc += self.lengths[E[i] >> 1]
            i += 1
        j, acc = len(E), 0.0
        while j > i and acc < self.bcc - 1e-12:
            j -= 1
            acc += self.lengths[E[j] >> 1]
        return p.subpath(i, j) if i < j else p.graph.path(p.graph.dst(E[i - 1]) if i else p.start)

    def push(self, key: tuple) -> DecoratedPath:
        src = key_to_path(self.base.graph, key)
        return self.trim(self.tau.apply(src))

    def leaf_segments(self, L: int) -> Set[tuple]:
        if L in self._windows:
            return self._windows[L]
        prev, stable = None, 0
        for m in range(max(1, L), self.max_source + 1):
            cur: Set[tuple] = set()
            for w in self.base.leaf_segments(m):
                cur.update(path_windows(self.push(w), L))
            if cur and cur == prev:
                stable += 1
                if stable >= STABLE_STEPS - 1:
                    self._windows[L] = cur
                    return cur
            else:
                stable = 0
            prev = cur
        raise HorizonExceeded(f"pushed windows of length {L} did not stabilize by source length {self.max_source}")


def transport(s: WindowLanguage, tau: GraphMap, **kw) -> PushedLanguage:
    return PushedLanguage(s, tau, **kw)


@dataclass
class PropertyReport:
    L: int
    edges_are_leaves: bool
    image_is_leaf: bool
    subpaths_are_leaves: bool
    iterate_subpaths: bool
    preimages_exist: bool
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all([self.edges_are_leaves, self.image_is_leaf, self.subpaths_are_leaves,
                    self.iterate_subpaths, self.preimages_exist])

    def as_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def property_suite(s: LaminationSampler, L: int) -> PropertyReport:
    """Checks (i)-(v) of the lamination properties on the length-L window set."""
    gr = s.graph
    W = s.leaf_segments(L)
    fails = []
    edges_ok = all(gr.edge_path(2 * e).canonical() in s.leaf_segments(1) for e in range(gr.n_edges))
    if not edges_ok:
        fails.append("some edge is not a leaf segment")
    img_ok = True
    for w in sorted(W):
        img = s.f.apply(key_to_path(gr, w))
        if not s.is_leaf_segment(img):
            img_ok = False
            fails.append(f"image of {format_key(gr, w)} is not a leaf segment")
            break
    sub_ok = True
    if L > 1:
        lower = s.leaf_segments(L - 1)
        for w in W:
            if not s.subwindows(w, L - 1) <= lower:
                sub_ok = False
                fails.append(f"subpath of {format_key(gr, w)} is not a leaf segment")
                break
    it_ok = True
    k = s.horizon.get((L, None), 0)
    for e in range(gr.n_edges):
        if not set(path_windows(s.iterate(e, k), L)) <= W:
            it_ok = False
            fails.append(f"window of an iterate of {gr.edge_names[e]} is missing")
    pre_ok = True
    for w in sorted(W):
        if s.preimage_window(w) is None:
            pre_ok = False
            fails.append(f"{format_key(gr, w)} has no preimage window")
            break
    return PropertyReport(L, edges_ok, img_ok, sub_ok, it_ok, pre_ok, fails)
