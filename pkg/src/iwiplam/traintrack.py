"""Transition matrices, Perron-Frobenius data, turns and train track checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .graphs import DecoratedPath, GraphMap, MarkedGraph, dec_key, format_path, metrics, rev

DEFAULT_DEPTH = 64


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

@dataclass
class TransitionMatrix:
    labels: List[str]
    matrix: List[List[int]]

    @property
    def n(self) -> int:
        return len(self.matrix)

    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float).reshape(self.n, self.n)

    @property
    def irreducible(self) -> bool:
        return is_irreducible(self.matrix)

    @property
    def primitive(self) -> bool:
        return primitivity_exponent(self.matrix) is not None

    def as_dict(self):
        return {"edges": self.labels, "matrix": self.matrix,
                "irreducible": self.irreducible, "primitive": self.primitive}


def transition_matrix(f: GraphMap) -> TransitionMatrix:
    """entry[e][e'] = number of times e or its reverse occurs in f(e')."""
    g = f.src
    n = g.n_edges
    M = [[0] * n for _ in range(n)]
    for j, img in enumerate(f.edge_images):
        for o in img.tighten().edges:
            M[o >> 1][j] += 1
    return TransitionMatrix(list(g.edge_names), M)


def _bool_mul(A, B):
    n = len(A)
    return [[any(A[i][k] and B[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def is_irreducible(M: Sequence[Sequence[int]]) -> bool:
    n = len(M)
    if n == 0:
        return False
    if n == 1:
        return M[0][0] > 0
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    G.add_edges_from((i, j) for i in range(n) for j in range(n) if M[i][j] > 0)
    return nx.is_strongly_connected(G)


def primitivity_exponent(M: Sequence[Sequence[int]]) -> Optional[int]:
    """Least k <= (n-1)^2 + 1 with M^k entrywise positive, else None (exact boolean check)."""
    n = len(M)
    if n == 0:
        return None
    B = [[M[i][j] > 0 for j in range(n)] for i in range(n)]
    P = B
    for k in range(1, (n - 1) ** 2 + 2):
        if all(all(r) for r in P):
            return k
        P = _bool_mul(P, B)
    return None


@dataclass
class PFData:
    eigenvalue: float
    lower: float
    upper: float
    residual: float
    right: List[float]
    left: List[float]
    irreducible: bool
    primitivity_exponent: Optional[int]

    @property
    def primitive(self) -> bool:
        return self.primitivity_exponent is not None

    def as_dict(self):
        return {"eigenvalue": self.eigenvalue, "bounds": [self.lower, self.upper],
                "residual": self.residual, "right": self.right, "left": self.left,
                "irreducible": self.irreducible, "primitivity_exponent": self.primitivity_exponent}


class ReducibleMatrix(ValueError):
    pass


def _power_iterate(A: np.ndarray, tol: float = 1e-15, max_iter: int = 100000):
    """Perron vector of a primitive nonnegative matrix plus Collatz-Wielandt bounds."""
    n = A.shape[0]
    x = np.ones(n) / n
    lo, hi = 0.0, math.inf
    for _ in range(max_iter):
        y = A @ x
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        x = y / y.sum()
        if hi - lo <= tol * max(1.0, hi):
            break
    return x, lo, hi


def pf_data(M, require_irreducible: bool = True) -> PFData:
    """PF eigenvalue and vectors via power iteration on M + I with certified bounds."""
    mat = M.matrix if isinstance(M, TransitionMatrix) else [list(r) for r in M]
    irr = is_irreducible(mat)
    if require_irreducible and not irr:
        raise ReducibleMatrix("matrix is reducible; use stratify for per-stratum data")
    A = np.array(mat, dtype=float)
    n = A.shape[0]
    if not irr:
        lam = float(max(abs(np.linalg.eigvals(A)))) if n else 0.0
        return PFData(lam, lam, lam, 0.0, [], [], False, None)
    S = A + np.eye(n)
    r, lo, hi = _power_iterate(S)
    l, _, _ = _power_iterate(S.T)
    lam = (lo + hi) / 2 - 1.0
    r = r / r.sum()
    l = l / l.min()
    residual = float(np.max(np.abs(A @ r - lam * r)))
    return PFData(lam, lo - 1.0, hi - 1.0, residual, [float(x) for x in r], [float(x) for x in l],
                  True, primitivity_exponent(mat))


def pf_metric(f: GraphMap) -> List[float]:
    """Edge lengths making every edge stretch by lambda (left PF vector, min length 1)."""
    return pf_data(transition_matrix(f)).left


# ---------------------------------------------------------------------------
# turns
# ---------------------------------------------------------------------------

def make_turn(g: MarkedGraph, d1: int, dec, d2: int) -> tuple:
    """Canonical turn (d1, g, d2) ~ (d2, g^-1, d1) at the common vertex."""
    v = g.src(d1)
    if g.src(d2) != v:
        raise ValueError("turn directions leave different vertices")
    dec = g.dec_norm(v, dec) if dec is not None else None
    a = (d1, dec_key(dec), d2)
    b = (d2, dec_key(g.dec_inv(v, dec)), d1)
    return min(a, b)


def turn_parts(t: tuple):
    d1, dk, d2 = t
    return d1, (dk[0] if dk else None), d2


def is_degenerate(t: tuple) -> bool:
    d1, dk, d2 = t
    return d1 == d2 and not dk


def format_turn(g: MarkedGraph, t: tuple) -> str:
    d1, dec, d2 = turn_parts(t)
    v = g.src(d1)
    name = lambda o: g.edge_names[o >> 1] + ("^-1" if o & 1 else "")
    return f"({name(d1)}, {g.group_at(v).format_elem(dec) if dec is not None else '1'}, {name(d2)})"


def path_turns(p: DecoratedPath) -> List[tuple]:
    return [make_turn(p.graph, rev(p.edges[k]), p.decs[k + 1], p.edges[k + 1]) for k in range(len(p.edges) - 1)]


def Df(f: GraphMap, d: int) -> Tuple[object, int]:
    """(initial decoration, first edge) of f on direction d."""
    img = f.image_of(d)
    if not img.edges:
        raise ValueError(f"direction {d} collapses under {f.name}")
    return img.decs[0], img.edges[0]


def turn_image(f: GraphMap, t: tuple) -> tuple:
    g, h = f.src, f.dst
    d1, dec, d2 = turn_parts(t)
    v = g.src(d1)
    w = f.vmap[v]
    h1, e1 = Df(f, d1)
    h2, e2 = Df(f, d2)
    mid = h.dec_mul(w, h.dec_mul(w, h.dec_inv(w, h1), f.theta_at(v, dec)), h2)
    return make_turn(h, e1, mid, e2)


@dataclass
class TurnVerdict:
    verdict: str  # "legal", "illegal", "legal-at-depth-K"
    depth: int
    orbit: List[tuple] = field(default_factory=list)

    @property
    def legal(self) -> bool:
        return self.verdict != "illegal"


def classify_turn(f: GraphMap, t: tuple, depth: int = DEFAULT_DEPTH) -> TurnVerdict:
    if not f.is_self_map():
        raise ValueError("classify_turn needs a self-map")
    seen = {}
    orbit = []
    cur = t
    for i in range(depth + 1):
        if is_degenerate(cur):
            return TurnVerdict("illegal", i, orbit + [cur])
        if cur in seen:
            return TurnVerdict("legal", i, orbit)
        seen[cur] = i
        orbit.append(cur)
        cur = turn_image(f, cur)
    return TurnVerdict(f"legal-at-depth-{depth}", depth, orbit)


@dataclass
class TrainTrackVerdict:
    passed: bool
    exact: bool
    verdict: str
    witness: Optional[dict] = None
    gates: Dict[str, int] = field(default_factory=dict)

    def as_dict(self):
        return {"passed": self.passed, "exact": self.exact, "verdict": self.verdict,
                "witness": self.witness, "gates": self.gates}


def _gates(f: GraphMap, v: int, depth: int):
    """Gate partition of germs (g, d) at a lift of v, for finite vertex groups."""
    g = f.src
    grp = g.group_at(v)
    elems = [None] if grp is None else [g.dec_norm(v, x) for x in grp.elements()]
    germs = [(x, d) for x in elems for d in g.directions(v)]
    parent = {germ: germ for germ in germs}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, (x1, d1) in enumerate(germs):
        for x2, d2 in germs[i + 1:]:
            rel = g.dec_mul(v, g.dec_inv(v, x1), x2)
            if not classify_turn(f, make_turn(g, d1, rel, d2), depth).legal:
                parent[find((x1, d1))] = find((x2, d2))
    return germs, find


def verify_traintrack(f: GraphMap, depth: int = DEFAULT_DEPTH) -> TrainTrackVerdict:
    g = f.src
    exact = True
    for i, img in enumerate(f.edge_images):
        k = img.first_backtrack()
        if k is not None:
            t = make_turn(f.dst, rev(img.edges[k]), img.decs[k + 1], img.edges[k + 1])
            return TrainTrackVerdict(False, True, "not a train track", {
                "reason": "unreduced edge image", "edge": g.edge_names[i], "image": format_path(img),
                "position": k + 1, "turn": format_turn(f.dst, t), "degenerate": True})
        for pos, t in enumerate(path_turns(img)):
            tv = classify_turn(f, t, depth)
            if tv.verdict == "illegal":
                return TrainTrackVerdict(False, True, "not a train track", {
                    "reason": "illegal turn in edge image", "edge": g.edge_names[i],
                    "image": format_path(img), "position": pos + 1, "turn": format_turn(g, t),
                    "degenerates_at": tv.depth})
            if tv.verdict != "legal":
                exact = False
    gates = {}
    for v in range(g.n_vertices):
        grp = g.group_at(v)
        if grp is not None and grp.order is None:
            continue
        germs, find = _gates(f, v, depth)
        gates[g.vertex_names[v]] = len({find(x) for x in germs})
        if f.vmap[v] == v:
            # inequivalent germs must have inequivalent images
            imgs = {}
            for x, d in germs:
                h, e = Df(f, d)
                key = find((x, d))
                img_germ = (f.dst.dec_mul(v, f.theta_at(v, x), h), e)
                imgs.setdefault(key, img_germ)
            reps = list(imgs.items())
            for i, (k1, (y1, e1)) in enumerate(reps):
                for k2, (y2, e2) in reps[i + 1:]:
                    t = make_turn(g, e1, g.dec_mul(v, g.dec_inv(v, y1), y2), e2)
                    if not classify_turn(f, t, depth).legal:
                        return TrainTrackVerdict(False, True, "not a train track", {
                            "reason": "germ map identifies gates", "vertex": g.vertex_names[v]})
    verdict = "train track" if exact else f"train track at depth {depth}"
    return TrainTrackVerdict(True, exact, verdict, None, gates)


# ---------------------------------------------------------------------------
# strata and cancellation
# ---------------------------------------------------------------------------

@dataclass
class Stratum:
    edges: List[str]
    kind: str  # "EG", "NEG", "zero", "T0"
    eigenvalue: float
    matrix: List[List[int]]
    vertices: List[str] = field(default_factory=list)

    def as_dict(self):
        return {"edges": self.edges, "class": self.kind, "eigenvalue": self.eigenvalue,
                "matrix": self.matrix, "vertices": self.vertices}


@dataclass
class Stratification:
    strata: List[Stratum]

    def filtration(self) -> List[List[str]]:
        out, acc = [], []
        for s in self.strata:
            acc = acc + s.edges
            out.append(list(acc))
        return out

    def top(self) -> Stratum:
        return self.strata[-1]

    def as_dict(self):
        return {"strata": [s.as_dict() for s in self.strata], "filtration": self.filtration()}


def stratify(f: GraphMap, eg_threshold: float = 1e-9) -> Stratification:
    """SCCs of the transition digraph, lowest first; ties put NEG first, then lowest edge."""
    tm = transition_matrix(f)
    M = tm.matrix
    n = tm.n
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    # e' -> e when f(e') crosses e; lower strata are reached from higher ones
    G.add_edges_from((j, i) for i in range(n) for j in range(n) if M[i][j] > 0)
    C = nx.condensation(G)
    info = {}
    for c in C.nodes:
        members = sorted(C.nodes[c]["members"])
        sub = [[M[i][j] for j in members] for i in members]
        if is_irreducible(sub):
            lam = pf_data(sub).eigenvalue
            kind = "EG" if lam > 1 + eg_threshold else "NEG"
        else:
            lam, kind = 0.0, "zero"
        info[c] = (members, sub, lam, kind)
    order = list(nx.lexicographical_topological_sort(
        C.reverse(copy=True), key=lambda c: (info[c][3] == "EG", info[c][0][0])))
    strata = [Stratum([], "T0", 1.0, [], [f.src.vertex_names[v] for v in range(f.src.n_vertices)
                                          if not f.src.is_free(v)])]
    for c in order:
        members, sub, lam, kind = info[c]
        strata.append(Stratum([tm.labels[i] for i in members], kind, lam, sub))
    return Stratification(strata)


@dataclass
class CancellationConstants:
    bcc_upper: float
    eigenvalue: float
    c_crit: float
    lengths: List[float]

    def as_dict(self):
        return {"bcc_upper": self.bcc_upper, "lambda": self.eigenvalue,
                "c_crit": self.c_crit if math.isfinite(self.c_crit) else "infinite",
                "lengths": self.lengths}


def cancellation_constants(f: GraphMap, metric: str = "pf") -> CancellationConstants:
    """bcc_upper = Lip * qvol and c_crit = 2 bcc_upper / (lambda - 1) for the top EG stratum."""
    st = stratify(f)
    eg = [s for s in st.strata if s.kind == "EG"]
    lam = eg[-1].eigenvalue if eg else 1.0
    tm = transition_matrix(f)
    if metric == "pf" and tm.irreducible:
        lengths = pf_data(tm).left
    else:
        lengths = [float(x) for x in f.src.lengths]
    m = metrics(f, lengths, lengths)
    c_crit = 2 * m.bcc_upper / (lam - 1) if lam > 1 + 1e-12 else math.inf
    return CancellationConstants(m.bcc_upper, lam, c_crit, lengths)
