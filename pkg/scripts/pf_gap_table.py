"""Print the smallest gap among Perron-Frobenius eigenvalues of small primitive matrices.

    python3 scripts/pf_gap_table.py --max-size 2 --max-entry 3
"""
import argparse

from iwiplam.stabilizer import pf_spectrum_gap


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--max-size", type=int, default=2)
    parser.add_argument("--max-entry", type=int, default=3)
    args = parser.parse_args()
    for n in range(1, args.max_size + 1):
        for b in range(1, args.max_entry + 1):
            try:
                g = pf_spectrum_gap(n, b)
            except ValueError as exc:
                print("n=%d B=%d  skipped: %s" % (n, b, exc))
                continue
            print("n=%d B=%d  matrices=%d  values=%d  min_gap=%s" % (n, b, g.matrices, len(g.values), g.min_gap))


if __name__ == "__main__":
    main()
