"""Command line interface: ``iwiplam <command> --spec problem.json``."""
from __future__ import annotations

import argparse
import math
import os
import random
import sys
from typing import Any, Callable, Dict, List, Optional, Tuple

from .freeprod import UndecidedAtBound
from .graphs import (build_omap, coincidence_constant, compare_omaps, format_path,
                     identity_map)
from .io import Problem, SpecError, bundled, bundled_names, dumps, load_problem
from .lamination import HorizonExceeded, LaminationSampler, property_suite
from .stabilizer import (NoConvergence, carries_test, classify_growth, commensuration_search,
                         commute_witness, covering_complete, iwip_evidence, nperiodic_search,
                         pf_spectrum_gap, second_representative, sigma, snap_to_grid, stab_test,
                         subgroup_graph)
from .traintrack import cancellation_constants, stratify, transition_matrix, verify_traintrack

OK, FAILED, INPUT_ERROR = 0, 1, 2


class Context:
    def __init__(self, problem: Problem, args: argparse.Namespace):
        self.problem = problem
        self.args = args
        p = problem.params
        self.length = args.length if args.length is not None else p.length
        self.depth = args.depth if args.depth is not None else p.depth
        self.seed = args.seed if args.seed is not None else p.seed
        self.tolerance = args.tolerance if args.tolerance is not None else p.tolerance
        self.bound = args.bound if args.bound is not None else p.bound
        self._sampler = None

    @property
    def sampler(self) -> LaminationSampler:
        if self._sampler is None:
            self._sampler = LaminationSampler(self.problem.representative, depth=self.depth)
        return self._sampler

    def auto(self, name: Optional[str] = None, flag: str = "--auto"):
        name = name or self.problem.target
        if name not in self.problem.automorphisms:
            raise SpecError(flag, f"unknown automorphism {name!r}")
        return self.problem.automorphisms[name]

    def rep_for(self, name: Optional[str]):
        name = name or self.problem.target
        if name == self.problem.target:
            return self.problem.representative
        g = self.problem.graph
        return build_omap(g, g, self.auto(name))

    def subgroup(self, name: Optional[str]):
        subs = self.problem.subgroups
        if not name:
            raise SpecError("--subgroup", "a subgroup name is required")
        if name not in subs:
            raise SpecError("--subgroup", f"unknown subgroup {name!r}")
        fp = self.problem.fp
        return subgroup_graph(self.problem.graph, [fp.parse(x) for x in subs[name]])


Result = Tuple[Dict[str, Any], int]


def cmd_check_tt(ctx: Context) -> Result:
    """Check the train-track property of a representative."""
    v = verify_traintrack(ctx.rep_for(ctx.args.auto), ctx.depth)
    return v.as_dict(), OK if v.passed else FAILED


def cmd_transition(ctx: Context) -> Result:
    """Transition matrix and its Perron-Frobenius data."""
    tm = transition_matrix(ctx.rep_for(ctx.args.auto))
    return tm.as_dict(), OK


def cmd_stratify(ctx: Context) -> Result:
    """Filtration into strata with growth types."""
    rep = ctx.rep_for(ctx.args.auto)
    out = stratify(rep).as_dict()
    out["cancellation"] = cancellation_constants(rep).as_dict() if transition_matrix(rep).irreducible else None
    return out, OK


def cmd_lamination_sample(ctx: Context) -> Result:
    """Leaf-segment windows of the attracting lamination."""
    s = ctx.sampler
    L = ctx.length
    out: Dict[str, Any] = {"L": L, "windows": s.window_strings(L), "horizon": s.horizon.get((L, None))}
    seeds = {s.graph.edge_names[e]: len(s.leaf_segments(L, seed=e)) for e in range(s.graph.n_edges)}
    out["seed_window_counts"] = seeds
    out["seeds_agree"] = all(s.leaf_segments(L, seed=e) == s.leaf_segments(L) for e in range(s.graph.n_edges))
    out["properties"] = property_suite(s, min(L, 8)).as_dict()
    qp = s.quasiperiodicity_constant(min(L, 2))
    out["quasiperiodicity"] = qp.as_dict()
    conv = {}
    for name, text in sorted(ctx.problem.loops.items()):
        loop = s.graph.parse_path(text, start=s.graph.base)
        conv[name] = [s.weak_convergence_ratio(loop, i, 2) for i in range(13)]
    out["weak_convergence_L2"] = conv
    return out, OK


def cmd_sigma(ctx: Context) -> Result:
    """Stretch factor of a stabilizer element."""
    psi = ctx.auto(ctx.args.auto)
    s = ctx.sampler
    st = stab_test(psi, s, min(ctx.length, 8))
    if not st.in_stabilizer:
        return {"automorphism": psi.name, "verdict": "not in the stabilizer", "stab_test": st.as_dict()}, FAILED
    g = ctx.problem.graph
    h1, h2 = build_omap(g, g, psi), second_representative(psi, g)
    r = sigma(psi, s, h1, tol=ctx.tolerance)
    r2 = sigma(psi, s, h2, tol=ctx.tolerance)
    out = r.as_dict()
    out["automorphism"] = psi.name
    out["second_representative_sigma"] = r2.value
    out["second_representative_distinct"] = [p.key() for p in h1.edge_images] != [p.key() for p in h2.edge_images]
    out["representative_gap"] = abs(r.value - r2.value)
    return out, OK


def cmd_stab_test(ctx: Context) -> Result:
    """Test whether an automorphism preserves the lamination."""
    psi = ctx.auto(ctx.args.auto)
    v = stab_test(psi, ctx.sampler, ctx.length)
    out = v.as_dict()
    out["automorphism"] = psi.name
    return out, OK if v.in_stabilizer else FAILED


def cmd_commute(ctx: Context) -> Result:
    """Compare psi phi with phi psi on generators."""
    psi, phi = ctx.auto(ctx.args.auto), ctx.auto(ctx.args.other, "--other")
    w = commute_witness(psi, phi)
    return {"psi": psi.name, "phi": phi.name, "commute": w is None, "witness": w}, OK if w is None else FAILED


def cmd_commensurate(ctx: Context) -> Result:
    """Search for matching powers of two automorphisms."""
    psi, phi = ctx.auto(ctx.args.auto), ctx.auto(ctx.args.other, "--other")
    mn = commensuration_search(psi, phi, ctx.bound)
    return {"psi": psi.name, "phi": phi.name, "bound": ctx.bound,
            "result": {"m": mn[0], "n": mn[1]} if mn else f"none <= {ctx.bound}"}, OK


def cmd_kernel_analyze(ctx: Context) -> Result:
    """Growth, inner-ness and finite order of an automorphism."""
    psi = ctx.auto(ctx.args.auto)
    rep = ctx.rep_for(ctx.args.auto)
    out = classify_growth(psi, rep).as_dict()
    out["automorphism"] = psi.name
    return out, OK


def cmd_covering_index(ctx: Context) -> Result:
    """Index of a subgroup through its core graph."""
    sg = ctx.subgroup(ctx.args.subgroup)
    idx = covering_complete(sg)
    return {"subgroup": ctx.args.subgroup, "index": idx if idx else "infinite", "graph": sg.describe()}, OK


def cmd_carries(ctx: Context) -> Result:
    """Whether a subgroup carries the lamination."""
    sg = ctx.subgroup(ctx.args.subgroup)
    v = carries_test(sg, ctx.sampler, ctx.length)
    out = v.as_dict()
    out["subgroup"] = ctx.args.subgroup
    return out, FAILED if v.verdict == "does not carry" else OK


def cmd_nperiodic(ctx: Context) -> Result:
    """Periodic paths of a representative up to a length."""
    p = ctx.problem.params
    maxlen = ctx.args.length if ctx.args.length is not None else p.maxlen
    maxperiod = ctx.args.bound if ctx.args.bound is not None else p.maxperiod
    rep = identity_map(ctx.problem.graph) if ctx.args.auto == "identity-map" else ctx.rep_for(ctx.args.auto)
    return nperiodic_search(rep, maxlen, maxperiod).as_dict(), OK


def cmd_pf_gap(ctx: Context) -> Result:
    """Smallest gap between small Perron-Frobenius eigenvalues."""
    p = ctx.problem.params
    B = ctx.args.bound if ctx.args.bound is not None else p.pf_entries
    try:
        out = pf_spectrum_gap(p.pf_size, B).as_dict()
    except ValueError as exc:
        return {"verdict": "undecided-at-bound", "reason": str(exc)}, OK
    out["n"], out["B"] = p.pf_size, B
    return out, OK


def cmd_iwip_evidence(ctx: Context) -> Result:
    """Bounded evidence for full irreducibility."""
    phi = ctx.auto(ctx.args.auto)
    ev = iwip_evidence(phi, ctx.rep_for(ctx.args.auto), ctx.bound)
    out = ev.as_dict()
    out["automorphism"] = phi.name
    return out, OK if ev.passed else FAILED


def cmd_compare_omaps(ctx: Context) -> Result:
    """Two maps realizing the same automorphism: discrepancies at the ends of images."""
    psi = ctx.auto(ctx.args.auto)
    g = ctx.problem.graph
    f = ctx.rep_for(ctx.args.auto)
    pr = ctx.problem
    h = pr.second if pr.second is not None and f is pr.representative else second_representative(psi, g)
    C = coincidence_constant(f, h)
    rng = random.Random(ctx.seed)
    worst, worst_path = 0.0, ""
    n = ctx.problem.params.samples
    for _ in range(n):
        p = g.random_path(rng, rng.randint(1, ctx.problem.params.max_path))
        cmp = compare_omaps(f, h, p)
        d = max(cmp.prefix_discrepancy, cmp.suffix_discrepancy)
        if d > worst:
            worst, worst_path = d, format_path(p)
    out = {"automorphism": psi.name, "C": C, "samples": n, "max_discrepancy": worst,
           "worst_path": worst_path, "within_bound": worst <= C + 1e-9,
           "f": {g.edge_names[i]: format_path(x) for i, x in enumerate(f.edge_images)},
           "h": {g.edge_names[i]: format_path(x) for i, x in enumerate(h.edge_images)}}
    return out, OK if worst <= C + 1e-9 else FAILED


def cmd_report(ctx: Context) -> Result:
    """Summary of every check on a problem."""
    pr = ctx.problem
    phi = pr.phi
    s = ctx.sampler
    out: Dict[str, Any] = {"problem": pr.name, "group": pr.fp.describe(), "target": pr.target}
    rep = pr.representative
    out["representative"] = {pr.graph.edge_names[i]: format_path(x) for i, x in enumerate(rep.edge_images)}
    out["transition_matrix"] = transition_matrix(rep).matrix
    out["pf"] = s.pf.as_dict()
    out["train_track"] = verify_traintrack(rep, ctx.depth).as_dict()
    out["stratification"] = stratify(rep).as_dict()
    out["windows_L2"] = s.window_strings(2)
    out["quasiperiodicity_L1"] = s.quasiperiodicity_constant(1).constant
    autos = {}
    lam = s.pf.eigenvalue
    for name in sorted(pr.automorphisms):
        psi = pr.automorphisms[name]
        entry: Dict[str, Any] = {}
        st = stab_test(psi, s, min(ctx.length, 8))
        entry["stab_test"] = st.as_dict()
        if st.in_stabilizer:
            try:
                r = sigma(psi, s, tol=max(ctx.tolerance, 1e-9))
                entry["sigma"] = r.value
                entry["lambda_power"], entry["snap_residual"] = snap_to_grid(r.value, lam)
            except NoConvergence as exc:
                entry["sigma"] = f"undecided-at-bound: {exc}"
        w = commute_witness(psi, phi)
        entry["commutes_with_target"] = w is None
        entry["commutation_witness"] = w
        entry["kernel"] = classify_growth(psi, build_omap(pr.graph, pr.graph, psi)).as_dict()
        autos[name] = entry
    out["automorphisms"] = autos
    out["subgroups"] = {name: carries_test(ctx.subgroup(name), s, min(ctx.length, 8)).as_dict()
                        for name in sorted(pr.subgroups)}
    out["iwip_evidence"] = iwip_evidence(phi, rep, ctx.bound).as_dict()
    return out, OK


COMMANDS: Dict[str, Callable[[Context], Result]] = {
    "check-tt": cmd_check_tt,
    "transition": cmd_transition,
    "stratify": cmd_stratify,
    "lamination-sample": cmd_lamination_sample,
    "sigma": cmd_sigma,
    "stab-test": cmd_stab_test,
    "commute": cmd_commute,
    "commensurate": cmd_commensurate,
    "kernel-analyze": cmd_kernel_analyze,
    "covering-index": cmd_covering_index,
    "carries": cmd_carries,
    "nperiodic": cmd_nperiodic,
    "pf-gap": cmd_pf_gap,
    "iwip-evidence": cmd_iwip_evidence,
    "compare-omaps": cmd_compare_omaps,
    "report": cmd_report,
}


def render_text(obj: Any, indent: int = 0) -> List[str]:
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        for k in sorted(obj, key=str):
            v = obj[k]
            if isinstance(v, (dict, list)) and v and not _flat(v):
                lines.append(f"{pad}{k}:")
                lines += render_text(v, indent + 1)
            else:
                lines.append(f"{pad}{k}: {_scalar(v)}")
    elif isinstance(obj, list):
        for v in obj:
            if isinstance(v, (dict, list)) and v and not _flat(v):
                lines.append(f"{pad}-")
                lines += render_text(v, indent + 1)
            else:
                lines.append(f"{pad}- {_scalar(v)}")
    else:
        lines.append(f"{pad}{_scalar(obj)}")
    return lines


def _flat(v) -> bool:
    return isinstance(v, list) and all(not isinstance(x, (dict, list)) or _flat(x) for x in v)


def _scalar(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, list):
        return "[" + ", ".join(_scalar(x) for x in v) + "]"
    return str(v)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", default="bundled:golden_z3",
                        help="problem JSON file, or bundled:<name> (%s)" % ", ".join(bundled_names()))
    common.add_argument("--out", help="directory for <command>.json and <command>.txt")
    common.add_argument("--seed", type=int)
    common.add_argument("--depth", type=int)
    common.add_argument("--length", type=int)
    common.add_argument("--tolerance", type=float)
    common.add_argument("--bound", type=int)
    common.add_argument("--auto", help="automorphism name (defaults to the target)")
    common.add_argument("--other", help="second automorphism name (defaults to the target)")
    common.add_argument("--subgroup", help="subgroup name from the problem file")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json")
    fmt.add_argument("--text", dest="fmt", action="store_const", const="text")
    parser = argparse.ArgumentParser(prog="iwiplam", description="Laminations and stabilizers for free products")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return parser


def _load(spec: str) -> Problem:
    if spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        if name not in bundled_names():
            raise SpecError("--spec", f"no bundled problem {name!r}")
        return bundled(name)
    return load_problem(spec)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.fmt or "json"
    try:
        problem = _load(args.spec)
        ctx = Context(problem, args)
        out, code = COMMANDS[args.command](ctx)
    except SpecError as exc:
        sys.stdout.write(dumps(exc.as_dict()))
        return INPUT_ERROR
    except (UndecidedAtBound, HorizonExceeded, NoConvergence) as exc:
        out, code = {"verdict": "undecided-at-bound", "reason": str(exc)}, OK
    out = {"command": args.command, **out}
    text_js = dumps(out)
    text_tx = "\n".join(render_text(out)) + "\n"
    sys.stdout.write(text_js if fmt == "json" else text_tx)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{args.command}.json"), "w") as fh:
            fh.write(text_js)
        with open(os.path.join(args.out, f"{args.command}.txt"), "w") as fh:
            fh.write(text_tx)
    return code


if __name__ == "__main__":
    sys.exit(main())
