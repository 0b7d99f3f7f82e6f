"""Run the golden-ratio example end to end and print the headline numbers.

    python3 scripts/golden_pipeline.py [--length 8]
"""
import argparse
import math

from iwiplam.io import bundled
from iwiplam.lamination import LaminationSampler
from iwiplam.stabilizer import iwip_evidence, sigma, stab_test
from iwiplam.traintrack import pf_data, transition_matrix, verify_traintrack


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length", type=int, default=8)
    args = parser.parse_args()

    pr = bundled("golden_z3")
    f = pr.representative
    tm = transition_matrix(f)
    print("train track:", verify_traintrack(f, pr.params.depth).passed)
    print("transition matrix:", tm.matrix)
    print("PF eigenvalue: %.12f (golden ratio %.12f)" % (pf_data(tm.matrix).eigenvalue, (1 + math.sqrt(5)) / 2))

    s = LaminationSampler(f)
    for name, psi in sorted(pr.automorphisms.items()):
        v = stab_test(psi, s, args.length)
        line = "%-8s %s" % (name, v.verdict)
        if v.in_stabilizer:
            line += "  sigma=%.10f" % sigma(psi, s).value
        print(line)

    ev = iwip_evidence(pr.phi, f, pr.params.bound)
    print("irreducibility evidence passed:", ev.passed)
    if ev.factor_witness:
        print("  invariant free factor complement:", ev.factor_witness)


if __name__ == "__main__":
    main()
