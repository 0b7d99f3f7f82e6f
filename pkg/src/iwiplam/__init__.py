"""Train tracks, attracting laminations and their stabilizers for automorphisms of free products."""
from .freeprod import (Automorphism, CyclicFactor, Element, FreeFactor, FreeProduct, InfiniteCyclicFactor,
                       TableFactor, UndecidedAtBound, conjugacy_solve, out_conjugator, out_equal)
from .graphs import (DecoratedPath, GraphMap, MarkedGraph, build_omap, fold_factorize, format_path,
                     identity_map, map_from_strings)
from .io import Params, Problem, SpecError, bundled, load_problem, parse_problem, serialize_problem
from .lamination import LaminationSampler, PushedLanguage, property_suite
from .stabilizer import (carries_test, classify_growth, commensuration_search, commute_test,
                         covering_complete, iwip_evidence, nperiodic_search, pf_spectrum_gap, sigma,
                         stab_test, subgroup_graph)
from .traintrack import pf_data, stratify, transition_matrix, verify_traintrack

__all__ = [
    "Automorphism", "CyclicFactor", "Element", "FreeFactor", "FreeProduct", "InfiniteCyclicFactor",
    "TableFactor", "UndecidedAtBound", "conjugacy_solve", "out_conjugator", "out_equal",
    "DecoratedPath", "GraphMap", "MarkedGraph", "build_omap", "fold_factorize", "format_path",
    "identity_map", "map_from_strings", "Params", "Problem", "SpecError", "bundled", "load_problem",
    "parse_problem", "serialize_problem", "LaminationSampler", "PushedLanguage", "property_suite",
    "carries_test", "classify_growth", "commensuration_search", "commute_test", "covering_complete",
    "iwip_evidence", "nperiodic_search", "pf_spectrum_gap", "sigma", "stab_test", "subgroup_graph",
    "pf_data", "stratify", "transition_matrix", "verify_traintrack",
]
__version__ = "0.1.0"
