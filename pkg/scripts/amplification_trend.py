#!/usr/bin/env python3
"""Sweep lattice sizes and record the long-run a2 fraction per variant.

The one-way sweep approaches 1/2 - alpha and the two-way sweep approaches
2/3 as the lattice grows; this script writes the measured trend as CSV.
"""

import argparse
import sys
import time
from fractions import Fraction

from hamca.encoding import anchored_configuration, scattered_m_sites
from hamca.machine import run_stats, stats_average
from hamca.staged import build_staged_machine


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="100,250,500,1000,2000")
    ap.add_argument("--alpha", default="1/64", help="simulation-cell rate (one-way)")
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    alpha = Fraction(args.alpha)
    sizes = [int(s) for s in args.sizes.split(",")]

    oneway = build_staged_machine("halt_now", "one-way-amp")
    twoway = build_staged_machine("halt_now", "two-way-amp", include_decode=False)
    rows = ["L,oneway_a2_avg,oneway_target,twoway_a2_avg,twoway_target,seconds"]
    for L in sizes:
        t0 = time.time()
        sites = scattered_m_sites(L, round(alpha * L))
        st1 = run_stats(oneway, anchored_configuration(oneway, L, sites), 10**7)
        avg1 = float(stats_average(st1, "a2", L + 1))
        st2 = run_stats(twoway, anchored_configuration(twoway, L), 30_000_000)
        avg2 = float(stats_average(st2, "a2", L + 1))
        rows.append(
            f"{L},{avg1:.6f},{0.5 - float(alpha):.6f},{avg2:.6f},{2/3:.6f},"
            f"{time.time() - t0:.2f}"
        )
        print(rows[-1], file=sys.stderr)
    text = "\n".join(rows) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
