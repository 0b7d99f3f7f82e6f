"""Ready-made groups, graphs and maps used by tests, scripts and the CLI report."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

from .freeprod import Automorphism, CyclicFactor, FreeFactor, FreeProduct
from .graphs import GraphMap, MarkedGraph, build_omap, map_from_strings


@dataclass
class Example:
    fp: FreeProduct
    graph: MarkedGraph
    autos: Dict[str, Automorphism]
    maps: Dict[str, GraphMap]


def thorny_rose(fp: FreeProduct, loops=("a", "b")) -> MarkedGraph:
    """One non-free vertex for the single factor, one loop per free letter."""
    return MarkedGraph(fp, [("v", 0)], [(x, 0, 0) for x in loops], base=0)


def z3_example() -> Example:
    """G = Z/3 * F(a, b) with a -> b t, b -> a b."""
    fp = FreeProduct([CyclicFactor(3, "t")], ["a", "b"])
    g = thorny_rose(fp)
    phi = Automorphism.from_strings(fp, {"a": "b t", "b": "a b"}, name="phi")
    conj_t = Automorphism.from_strings(fp, {"a": "t a t^-1"}, name="conj_t")
    flip = Automorphism.from_strings(fp, {"a": "a^-1"}, name="flip")
    autos = {"phi": phi, "conj_t": conj_t, "flip": flip, "id": Automorphism.identity(fp)}
    maps = {"phi": build_omap(g, g, phi, name="f")}
    return Example(fp, g, autos, maps)


def f3_example() -> Example:
    """G = F(x, y, z) * F(a, b) with a -> b x, b -> a b; g1 = x."""
    fp = FreeProduct([FreeFactor(["x", "y", "z"])], ["a", "b"])
    g = thorny_rose(fp)
    phi = Automorphism.from_strings(fp, {"a": "b x", "b": "a b"}, name="phi")
    fix_x = Automorphism.from_strings(fp, {"y": "y x"}, name="y_to_yx")
    swap = Automorphism.from_strings(fp, {"x": "y", "y": "x"}, name="swap_xy")
    fix_x2 = Automorphism.from_strings(fp, {"z": "z x"}, name="z_to_zx")
    conj_x = Automorphism.from_strings(fp, {"y": "x y x^-1", "z": "x z x^-1"}, name="conj_yz_by_x")
    autos = {"phi": phi, "y_to_yx": fix_x, "swap_xy": swap, "z_to_zx": fix_x2,
             "conj_yz_by_x": conj_x, "id": Automorphism.identity(fp)}
    maps = {"phi": build_omap(g, g, phi, name="f")}
    return Example(fp, g, autos, maps)


def three_loop_example() -> Example:
    """Z/3 * F(a, b, c) with a -> b t, b -> a b and an invariant loop c."""
    fp = FreeProduct([CyclicFactor(3, "t")], ["a", "b", "c"])
    g = thorny_rose(fp, ("a", "b", "c"))
    h = Automorphism.from_strings(fp, {"a": "b t", "b": "a b"}, name="h")
    ht = Automorphism.from_strings(fp, {"c": "c t"}, name="c_to_ct")
    maps = {"h": build_omap(g, g, h, name="h"), "c_to_ct": build_omap(g, g, ht, name="c_to_ct")}
    return Example(fp, g, {"h": h, "c_to_ct": ht}, maps)


def subdivided_rose(fp: FreeProduct) -> MarkedGraph:
    """Thorny rose with the b loop split at a free vertex w into b1, b2."""
    return MarkedGraph(fp, [("v", 0), ("w", None)], [("a", 0, 0), ("b1", 0, 1), ("b2", 1, 0)], base=0)


def coincidence_pair(ex: Example):
    """Two maps of the subdivided rose realizing phi that differ on b1 and b2.

    Works for the examples whose phi is a -> b g1, b -> a b with g1 the first
    generator of the first factor.
    """
    g = subdivided_rose(ex.fp)
    phi = ex.autos["phi"]
    g1 = ex.fp.factors[0].generators[0]
    f = map_from_strings(g, g, {"a": f"b1 b2[{g1}]", "b1": "a", "b2": "b1 b2"}, name="f", automorphism=phi)
    h = map_from_strings(g, g, {"a": f"b1 b2[{g1}]", "b1": "a b1", "b2": "b2"}, name="h", automorphism=phi)
    return g, f, h


def shared_image_fold(fp: FreeProduct):
    """Two edges c1, c2 with the same image c: a single fold."""
    src = MarkedGraph(fp, [("v", 0), ("w1", None), ("w2", None)],
                      [("c1", 0, 1), ("c2", 0, 2), ("a", 1, 1), ("b", 2, 2)], base=0)
    dst = MarkedGraph(fp, [("v", 0), ("w", None)], [("c", 0, 1), ("a", 1, 1), ("b", 1, 1)], base=0)
    m = map_from_strings(src, dst, {"c1": "c", "c2": "c", "a": "a", "b": "b"}, name="fold")
    return src, dst, m
