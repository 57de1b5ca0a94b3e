"""Time each solver on doubling sizes and summarise the growth.

    python3 scripts/bench_scaling.py [--mode lir-path] [--max-exp 20] [--out timings.csv]

Prints the timing CSV (mode,n,ms,ratio,...) and, per mode, the median
doubling ratio time(2n)/time(n). For n log n growth it tends to about 2.1.
"""

import argparse
import io
import math
import statistics
import sys

from lipreg.cli_io import BENCH_RANGES, bench, rotation_violations


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", action="append", choices=sorted(BENCH_RANGES))
    ap.add_argument("--max-exp", type=int)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()
    buf = io.StringIO()
    rows = bench(args.mode or list(BENCH_RANGES), args.max_exp, args.seed, args.repeats, out=buf)
    sys.stdout.write(buf.getvalue())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    print()
    for mode in dict.fromkeys(r[0] for r in rows):
        mine = [r for r in rows if r[0] == mode]
        ratios = [r[3] for r in mine if not math.isnan(r[3])]
        med = statistics.median(ratios) if ratios else math.nan
        largest = mine[-1]
        print(f"{mode}: n up to {largest[1]} in {largest[2]:.0f} ms, median doubling ratio {med:.2f}")
    bad = rotation_violations(rows)
    for r in bad:
        print(f"rotation bound exceeded: {r}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
