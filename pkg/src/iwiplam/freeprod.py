"""Free products G = G_1 * ... * G_q * F_r: normal forms, conjugacy, automorphisms.

Free-basis letters are stored as infinite cyclic slots, so an element is an
alternating tuple of ``(slot, factor_element)`` syllables over ``q + r`` slots.
"""
from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from math import gcd
from typing import Dict, Iterable, List, Optional, Sequence, Tuple


class UndecidedAtBound(Exception):
    """A bounded search ran out of room before reaching a verdict."""


# ---------------------------------------------------------------------------
# factor groups
# ---------------------------------------------------------------------------

class FactorGroup:
    kind = "abstract"
    order: Optional[int] = None  # None means infinite

    def __init__(self, generators: Sequence[str]):
        self.generators = list(generators)

    # every subclass provides identity/mul/inv/gen/as_word/format_elem
    def is_identity(self, g) -> bool:
        return g == self.identity

    def power(self, g, n: int):
        if n < 0:
            g, n = self.inv(g), -n
        out = self.identity
        for _ in range(n):
            out = self.mul(out, g)
        return out

    def word_length(self, g) -> int:
        return 0 if self.is_identity(g) else 1

    def elements(self):
        raise ValueError(f"{self.kind} factor is infinite")

    def conjugator(self, u, v):
        """Return w with w u w^-1 = v, or None."""
        for w in self.elements():
            if self.mul(self.mul(w, u), self.inv(w)) == v:
                return w
        return None

    def centralizer_is_finite(self) -> bool:
        return self.order is not None

    def evaluate(self, word, images: Dict[str, object]):
        out = self.identity
        for label, e in word:
            out = self.mul(out, self.power(images[label], e))
        return out

    def __repr__(self):
        return f"{type(self).__name__}({self.generators})"


class CyclicFactor(FactorGroup):
    kind = "cyclic"

    def __init__(self, order: int, generator: str = "t"):
        if order < 2:
            raise ValueError("cyclic factor needs order >= 2")
        super().__init__([generator])
        self.order = order
        self.identity = 0

    def mul(self, g, h):
        return (g + h) % self.order

    def inv(self, g):
        return (-g) % self.order

    def gen(self, label):
        return 1

    def elements(self):
        return range(self.order)

    def conjugator(self, u, v):
        return 0 if u == v else None

    def as_word(self, g):
        return [(self.generators[0], g)] if g else []

    def format_elem(self, g):
        lab = self.generators[0]
        return lab if g == 1 else f"{lab}^{g}"


class InfiniteCyclicFactor(FactorGroup):
    kind = "infinite-cyclic"

    def __init__(self, generator: str):
        super().__init__([generator])
        self.identity = 0

    def mul(self, g, h):
        return g + h

    def inv(self, g):
        return -g

    def gen(self, label):
        return 1

    def power(self, g, n):
        return g * n

    def word_length(self, g):
        return abs(g)

    def conjugator(self, u, v):
        return 0 if u == v else None

    def as_word(self, g):
        return [(self.generators[0], g)] if g else []

    def format_elem(self, g):
        lab = self.generators[0]
        return lab if g == 1 else f"{lab}^{g}"


def _free_reduce(word):
    out = []
    for a in word:
        if out and out[-1] == -a:
            out.pop()
        else:
            out.append(a)
    return tuple(out)


class FreeFactor(FactorGroup):
    """Free group on the given labels; elements are reduced tuples of +-(i+1)."""

    kind = "free"

    def __init__(self, generators: Sequence[str]):
        if not generators:
            raise ValueError("free factor of rank 0")
        super().__init__(generators)
        self.identity = ()
        self._index = {g: i + 1 for i, g in enumerate(generators)}

    def mul(self, g, h):
        return _free_reduce(g + h)

    def inv(self, g):
        return tuple(-a for a in reversed(g))

    def gen(self, label):
        return (self._index[label],)

    def word_length(self, g):
        return len(g)

    def as_word(self, g):
        return [(self.generators[abs(a) - 1], 1 if a > 0 else -1) for a in g]

    def format_elem(self, g):
        return " ".join(lab if e == 1 else f"{lab}^-1" for lab, e in self.as_word(g))

    def _cyclic_core(self, g):
        i = 0
        while i < len(g) // 2 and g[i] == -g[-1 - i]:
            i += 1
        return g[:i], g[i:len(g) - i]

    def conjugator(self, u, v):
        pu, cu = self._cyclic_core(u)
        pv, cv = self._cyclic_core(v)
        if len(cu) != len(cv):
            return None
        if not cu:
            return ()
        for k in range(len(cu)):
            if cu[k:] + cu[:k] == cv:
                # cv = x cu x^-1 with x = cu[:k]^-1
                x = self.inv(cu[:k])
                return self.mul(self.mul(pv, x), self.inv(pu))
        return None

    def automorphism_inverse(self, images: Dict[str, tuple]) -> Dict[str, tuple]:
        """Invert the automorphism of this free group given on generators."""
        fp = FreeProduct([], self.generators, validate=False)
        auto = Automorphism(fp, {
            lab: Element(fp, tuple((abs(a) - 1, 1 if a > 0 else -1) for a in images[lab]))
            for lab in self.generators})
        inv = auto.inverse()
        out = {}
        for lab in self.generators:
            w = []
            for slot, e in inv.images[lab].syl:
                w.extend([(slot + 1) if e > 0 else -(slot + 1)] * abs(e))
            out[lab] = tuple(w)
        return out


class TableFactor(FactorGroup):
    """Finite group from a multiplication table; element 0 must be the identity."""

    kind = "table"

    def __init__(self, table: Sequence[Sequence[int]], inverse: Sequence[int],
                 generators: Dict[str, int]):
        super().__init__(list(generators))
        self.table = [list(r) for r in table]
        self.inverse = list(inverse)
        self.gen_elems = dict(generators)
        self.order = len(self.table)
        self.identity = 0
        n = self.order
        for i in range(n):
            if self.table[0][i] != i or self.table[i][0] != i:
                raise ValueError("element 0 is not the identity")
            if self.table[i][self.inverse[i]] != 0:
                raise ValueError(f"bad inverse for element {i}")
        for a, b, c in itertools.product(range(n), repeat=3):
            if self.table[self.table[a][b]][c] != self.table[a][self.table[b][c]]:
                raise ValueError("table is not associative")
        self._words = self._spell()

    def _spell(self):
        words = {0: []}
        queue = deque([0])
        while queue:
            g = queue.popleft()
            for lab, h in self.gen_elems.items():
                for e, x in ((1, h), (-1, self.inverse[h])):
                    y = self.table[g][x]
                    if y not in words:
                        words[y] = words[g] + [(lab, e)]
                        queue.append(y)
        if len(words) != self.order:
            raise ValueError("table generators do not generate the group")
        return words

    def mul(self, g, h):
        return self.table[g][h]

    def inv(self, g):
        return self.inverse[g]

    def gen(self, label):
        return self.gen_elems[label]

    def elements(self):
        return range(self.order)

    def as_word(self, g):
        return list(self._words[g])

    def format_elem(self, g):
        return f"<{g}>"


def factor_automorphism_inverse(factor: FactorGroup, images: Dict[str, object]) -> Dict[str, object]:
    """Inverse of an automorphism of a single factor, given on its generators."""
    if isinstance(factor, FreeFactor):
        return factor.automorphism_inverse(images)
    if isinstance(factor, InfiniteCyclicFactor):
        (lab,) = factor.generators
        if images[lab] not in (1, -1):
            raise ValueError("not an automorphism of Z")
        return {lab: images[lab]}
    # finite: brute-force preimage of each generator
    fwd = {g: factor.evaluate(factor.as_word(g), images) for g in factor.elements()}
    if len(set(fwd.values())) != factor.order:
        raise ValueError("factor map is not bijective")
    back = {v: k for k, v in fwd.items()}
    return {lab: back[factor.gen(lab)] for lab in factor.generators}


# ---------------------------------------------------------------------------
# the free product and its elements
# ---------------------------------------------------------------------------

class FreeProduct:
    """G = G_1 * ... * G_q * F_r with labelled generators."""

    def __init__(self, factors: Sequence[FactorGroup], free_basis: Sequence[str], validate: bool = True):
        self.factors = list(factors)
        self.free_basis = list(free_basis)
        self.q = len(self.factors)
        self.r = len(self.free_basis)
        if validate and (self.r < 1 or self.q + self.r < 2):
            raise ValueError("need free rank r >= 1 and q + r >= 2")
        self.slots: List[FactorGroup] = self.factors + [InfiniteCyclicFactor(x) for x in self.free_basis]
        self.gen_slot: Dict[str, int] = {}
        for i, grp in enumerate(self.slots):
            for lab in grp.generators:
                if lab in self.gen_slot:
                    raise ValueError(f"duplicate generator label {lab!r}")
                self.gen_slot[lab] = i
        self.generators = list(self.gen_slot)
        self.identity = Element(self, ())

    def is_free_slot(self, slot: int) -> bool:
        return slot >= self.q

    def gen(self, label: str) -> "Element":
        slot = self.gen_slot[label]
        return Element(self, ((slot, self.slots[slot].gen(label)),))

    def syllable(self, slot: int, g) -> "Element":
        if self.slots[slot].is_identity(g):
            return self.identity
        return Element(self, ((slot, g),))

    def word(self, letters: Iterable[Tuple[str, int]]) -> "Element":
        out = self.identity
        for lab, e in letters:
            out = out * self.gen(lab) ** e
        return out

    def parse(self, text: str) -> "Element":
        """Parse ``"b x a^-1 t^2"``; juxtaposed labels need whitespace or ``*``."""
        text = text.strip()
        if text in ("", "1", "e"):
            return self.identity
        out = self.identity
        for tok in re.split(r"[\s*]+", text):
            if not tok:
                continue
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)(?:\^(-?\d+))?", tok)
            if not m or m.group(1) not in self.gen_slot:
                raise ValueError(f"cannot parse token {tok!r} in {text!r}")
            out = out * self.gen(m.group(1)) ** int(m.group(2) or 1)
        return out

    def describe(self) -> str:
        parts = [f"{f.kind}{f.generators}" for f in self.factors]
        parts.append(f"F{self.free_basis}")
        return " * ".join(parts)

    # --- syllable arithmetic on raw tuples --------------------------------
    def _mul(self, u: tuple, v: tuple) -> tuple:
        out = list(u)
        for slot, g in v:
            if out and out[-1][0] == slot:
                grp = self.slots[slot]
                m = grp.mul(out[-1][1], g)
                out.pop()
                if not grp.is_identity(m):
                    out.append((slot, m))
            else:
                out.append((slot, g))
        return tuple(out)

    def _inv(self, u: tuple) -> tuple:
        return tuple((s, self.slots[s].inv(g)) for s, g in reversed(u))


@dataclass(frozen=True)
class Element:
    """Normal form: alternating nontrivial syllables; () is the identity."""

    fp: FreeProduct = field(compare=False, repr=False)
    syl: tuple

    def _check(self, other: "Element"):
        if other.fp is not self.fp:
            raise ValueError("elements of different free products")

    def __mul__(self, other: "Element") -> "Element":
        self._check(other)
        return Element(self.fp, self.fp._mul(self.syl, other.syl))

    def inverse(self) -> "Element":
        return Element(self.fp, self.fp._inv(self.syl))

    def __invert__(self):
        return self.inverse()

    def __pow__(self, n: int) -> "Element":
        base = self if n >= 0 else self.inverse()
        out = self.fp.identity
        for _ in range(abs(n)):
            out = out * base
        return out

    def conj(self, w: "Element") -> "Element":
        """w self w^-1."""
        return w * self * w.inverse()

    def __len__(self):
        return len(self.syl)

    def is_identity(self) -> bool:
        return not self.syl

    def weighted_length(self) -> int:
        return sum(self.fp.slots[s].word_length(g) for s, g in self.syl)

    def letters(self) -> List[Tuple[str, int]]:
        out = []
        for s, g in self.syl:
            out.extend(self.fp.slots[s].as_word(g))
        return out

    def __str__(self):
        if not self.syl:
            return "1"
        return " ".join(self.fp.slots[s].format_elem(g) for s, g in self.syl)

    def __repr__(self):
        return f"Element({self})"


# ---------------------------------------------------------------------------
# conjugacy
# ---------------------------------------------------------------------------

def cyclic_reduction(u: Element) -> Tuple[Element, Element]:
    """Return (c, u') with u = c u' c^-1 and u' cyclically reduced."""
    fp = u.fp
    c = fp.identity
    while len(u) >= 2 and u.syl[0][0] == u.syl[-1][0]:
        s = Element(fp, (u.syl[0],))
        u = s.inverse() * u * s
        c = c * s
    return c, u


def is_elliptic(u: Element) -> bool:
    """True iff u lies in a conjugate of a single slot (incl. free letters)."""
    return len(cyclic_reduction(u)[1]) <= 1


def conjugacy_solve(u: Element, v: Element) -> Optional[Element]:
    """Some w with w u w^-1 = v, or None when u and v are not conjugate."""
    u._check(v)
    fp = u.fp
    cu, ru = cyclic_reduction(u)
    cv, rv = cyclic_reduction(v)
    if len(ru) != len(rv):
        return None
    if not ru.syl:
        return fp.identity
    if len(ru) == 1:
        (su, gu), (sv, gv) = ru.syl[0], rv.syl[0]
        if su != sv:
            return None
        y = fp.slots[su].conjugator(gu, gv)
        if y is None:
            return None
        x = fp.syllable(su, y)
    else:
        n = len(ru)
        x = None
        for k in range(n):
            if ru.syl[k:] + ru.syl[:k] == rv.syl:
                x = Element(fp, ru.syl[:k]).inverse()
                break
        if x is None:
            return None
    return cv * x * cu.inverse()


def root(u: Element) -> Element:
    """Primitive root of a hyperbolic element (generator of its centralizer)."""
    c, r = cyclic_reduction(u)
    n = len(r)
    if n < 2:
        raise ValueError("root() needs a hyperbolic element")
    for d in range(1, n + 1):
        if n % d == 0 and all(r.syl[i] == r.syl[i % d] for i in range(n)):
            return Element(u.fp, r.syl[:d]).conj(c)
    raise AssertionError("unreachable")


def abelianize(u: Element) -> Tuple[int, ...]:
    """Exponent sums over the free letters (a cheap oracle for Out-inequality)."""
    fp = u.fp
    out = [0] * fp.r
    for s, g in u.syl:
        if fp.is_free_slot(s):
            out[s - fp.q] += g
    return tuple(out)


# ---------------------------------------------------------------------------
# automorphisms
# ---------------------------------------------------------------------------

class Automorphism:
    """An automorphism of a free product, given by generator images.

    ``inverse`` is either supplied (and verified) or computed lazily by
    Nielsen-style length reduction of the image tuple.
    """

    def __init__(self, fp: FreeProduct, images: Dict[str, Element], name: str = "",
                 inverse_images: Optional[Dict[str, Element]] = None, check: bool = True):
        self.fp = fp
        self.images = {g: images.get(g, fp.gen(g)) for g in fp.generators}
        for g, im in self.images.items():
            if im.fp is not fp:
                raise ValueError(f"image of {g} lives in another free product")
        self.name = name
        self._inverse: Optional[Automorphism] = None
        self._factor_data = None
        if check:
            self.factor_data()  # raises when a factor is not sent into a factor conjugate
        if inverse_images is not None:
            inv = Automorphism(fp, inverse_images, name=f"{name}^-1" if name else "", check=False)
            for g in fp.generators:
                if self(inv(fp.gen(g))) != fp.gen(g) or inv(self(fp.gen(g))) != fp.gen(g):
                    raise ValueError(f"declared inverse fails on generator {g}")
            self._link_inverse(inv)

    def _link_inverse(self, inv: "Automorphism"):
        self._inverse = inv
        inv._inverse = self

    @classmethod
    def identity(cls, fp: FreeProduct) -> "Automorphism":
        a = cls(fp, {}, name="id")
        a._link_inverse(a)
        return a

    @classmethod
    def from_strings(cls, fp: FreeProduct, images: Dict[str, str], name: str = "",
                     inverse: Optional[Dict[str, str]] = None) -> "Automorphism":
        inv = {k: fp.parse(v) for k, v in inverse.items()} if inverse else None
        return cls(fp, {k: fp.parse(v) for k, v in images.items()}, name=name, inverse_images=inv)

    @classmethod
    def inner(cls, w: Element, name: str = "") -> "Automorphism":
        fp = w.fp
        a = cls(fp, {g: fp.gen(g).conj(w) for g in fp.generators}, name=name or f"inn({w})")
        a._link_inverse(cls(fp, {g: fp.gen(g).conj(w.inverse()) for g in fp.generators}, check=False))
        return a

    # --- evaluation --------------------------------------------------------
    def __call__(self, u: Element) -> Element:
        fp = self.fp
        out = fp.identity
        for slot, g in u.syl:
            grp = fp.slots[slot]
            for lab, e in grp.as_word(g):
                out = out * self.images[lab] ** e
        return out

    def __mul__(self, other: "Automorphism") -> "Automorphism":
        """Composition: (self * other)(x) = self(other(x))."""
        comp = Automorphism(self.fp, {g: self(other.images[g]) for g in self.fp.generators},
                            name=f"{self.name}.{other.name}" if self.name and other.name else "",
                            check=False)
        if self._inverse is not None and other._inverse is not None:
            inv = Automorphism(self.fp, {g: other._inverse(self._inverse.images[g])
                                         for g in self.fp.generators}, check=False)
            comp._link_inverse(inv)
        return comp

    def __pow__(self, n: int) -> "Automorphism":
        base = self if n >= 0 else self.inverse()
        out = Automorphism.identity(self.fp)
        for _ in range(abs(n)):
            out = base * out
        if n != 0 and self.name:
            out.name = f"{self.name}^{n}"
        return out

    def __eq__(self, other):
        return isinstance(other, Automorphism) and other.fp is self.fp and other.images == self.images

    def __hash__(self):
        return hash(tuple(sorted((k, v.syl) for k, v in self.images.items())))

    def __repr__(self):
        body = ", ".join(f"{g}->{self.images[g]}" for g in self.fp.generators)
        return f"Automorphism({self.name}: {body})"

    def is_identity(self) -> bool:
        return all(self.images[g] == self.fp.gen(g) for g in self.fp.generators)

    # --- factor structure --------------------------------------------------
    def factor_data(self):
        """Per factor i: (target factor j, conjugator c, images in G_j) with
        self(g) = c theta(g) c^-1 for g in G_i. Raises when not in Aut(G, O)."""
        if self._factor_data is not None:
            return self._factor_data
        fp = self.fp
        data = []
        targets = set()
        for i, grp in enumerate(fp.factors):
            c, j, theta = None, None, {}
            for lab in grp.generators:
                im = self.images[lab]
                ci, red = cyclic_reduction(im)
                if len(red) != 1 or fp.is_free_slot(red.syl[0][0]):
                    raise ValueError(f"{lab} is not sent into a conjugate of a factor")
                if c is None:
                    c, j = ci, red.syl[0][0]
                # all generators must share the conjugate c G_j c^-1
                inside = c.inverse() * im * c
                if len(inside) > 1 or (inside.syl and inside.syl[0][0] != j):
                    raise ValueError(f"factor {i} is not sent into a single conjugate")
                theta[lab] = inside.syl[0][1] if inside.syl else fp.slots[j].identity
            if j in targets:
                raise ValueError("two factors sent into the same factor class")
            targets.add(j)
            if fp.factors[j].kind != grp.kind or len(fp.factors[j].generators) != len(grp.generators):
                raise ValueError(f"factor {i} sent to non-isomorphic factor {j}")
            data.append((j, c, theta))
        self._factor_data = data
        return data

    def induced_factor_map(self, i: int):
        """theta_i : G_i -> G_j as a callable on factor elements."""
        j, _c, theta = self.factor_data()[i]
        src, dst = self.fp.factors[i], self.fp.factors[j]
        imgs = {lab: theta[lab] for lab in src.generators}
        return j, (lambda g: dst.evaluate(src.as_word(g), imgs))

    # --- inversion ---------------------------------------------------------
    def inverse(self) -> "Automorphism":
        if self._inverse is None:
            self._link_inverse(_nielsen_inverse(self))
        return self._inverse


def _nielsen_inverse(auto: Automorphism) -> Automorphism:
    fp = auto.fp
    gens = fp.generators
    T = [auto.images[g] for g in gens]
    W = [fp.gen(g) for g in gens]

    def total(ts):
        return sum(t.weighted_length() for t in ts)

    cur = total(T)
    improved = True
    while improved:
        improved = False
        best = None
        for i, j in itertools.permutations(range(len(T)), 2):
            for e in (1, -1):
                tj, wj = T[j] ** e, W[j] ** e
                for cand_t, cand_w in ((T[i] * tj, W[i] * wj), (tj * T[i], wj * W[i]),
                                        (T[i].conj(tj), W[i].conj(wj))):
                    delta = cand_t.weighted_length() - T[i].weighted_length()
                    if delta < 0 and (best is None or delta < best[0]):
                        best = (delta, i, cand_t, cand_w)
        if best is not None:
            _, i, T[i], W[i] = best
            cur += best[0]
            improved = True
    inv: Dict[str, Element] = {}
    # free letters: need T_i == x^{+-1}
    for i, t in enumerate(T):
        if len(t) == 1 and t.weighted_length() == 1 and fp.is_free_slot(t.syl[0][0]):
            slot, e = t.syl[0]
            inv[fp.slots[slot].generators[0]] = W[i] ** e
    # factors: collect images landing in each factor and spell generators in them
    for k, grp in enumerate(fp.factors):
        pool = [(T[i].syl[0][1], W[i]) for i in range(len(T))
                if len(T[i]) == 1 and T[i].syl[0][0] == k]
        if grp.order is not None:
            spelled = {grp.identity: fp.identity}
            queue = deque([grp.identity])
            while queue:
                g = queue.popleft()
                for h, w in pool:
                    for hh, ww in ((h, w), (grp.inv(h), w.inverse())):
                        y = grp.mul(g, hh)
                        if y not in spelled:
                            spelled[y] = spelled[g] * ww
                            queue.append(y)
            for lab in grp.generators:
                if grp.gen(lab) in spelled:
                    inv[lab] = spelled[grp.gen(lab)]
        else:
            for h, w in pool:
                word = grp.as_word(h)
                if len(word) == 1 and abs(word[0][1]) == 1:
                    inv[word[0][0]] = w ** word[0][1]
    if set(inv) != set(gens):
        raise ValueError(f"could not invert {auto.name or auto}; supply inverse images")
    result = Automorphism(fp, inv, name=f"{auto.name}^-1" if auto.name else "", check=False)
    for g in gens:
        if auto(result(fp.gen(g))) != fp.gen(g):
            raise ValueError(f"inverse search produced a non-inverse for {auto.name}")
    return result


def out_conjugator(alpha: Automorphism, beta: Automorphism) -> Optional[Element]:
    """Some w with alpha(x) = w beta(x) w^-1 for every generator x, or None.

    Conjugacy is solved for one hyperbolic test element; the remaining freedom
    is the centralizer coset w0 <root>, swept over exponents bounded by the
    total image length (larger exponents make the conjugated images too long).
    """
    fp = alpha.fp
    gens = fp.generators
    tests = [(fp.gen(x),) for x in gens] + [(fp.gen(x), fp.gen(y)) for x, y in itertools.combinations(gens, 2)]
    probe = None
    for t in tests:
        u = fp.identity
        for el in t:
            u = u * el
        if not is_elliptic(beta(u)):
            probe = u
            break
    if probe is None:
        raise UndecidedAtBound("no hyperbolic probe element among generator pairs")
    w0 = conjugacy_solve(beta(probe), alpha(probe))
    if w0 is None:
        return None
    rt = root(beta(probe))
    bound = sum(len(alpha.images[g]) + len(beta.images[g]) for g in gens) + len(w0) + 2
    for j in sorted(range(-bound, bound + 1), key=lambda j: (abs(j), j)):
        w = w0 * rt ** j
        if all(alpha.images[g] == beta.images[g].conj(w) for g in gens):
            return w
    return None


def out_equal(alpha: Automorphism, beta: Automorphism) -> bool:
    """Equality in Out(G): alpha = inn(w) beta for some w."""
    if alpha.fp is not beta.fp:
        raise ValueError("automorphisms of different free products")
    return out_conjugator(alpha, beta) is not None


def apply(alpha: Automorphism, u: Element) -> Element:
    return alpha(u)


def multiply(u: Element, v: Element) -> Element:
    return u * v


def lcm_of_factor_orders(fp: FreeProduct) -> int:
    out = 1
    for f in fp.factors:
        if f.order:
            out = out * f.order // gcd(out, f.order)
    return out
