#!/usr/bin/env python3
"""Naive vs halved rounding on the gap instance; CSV per h."""

from __future__ import annotations

import argparse
import csv
import sys

from maxmin_arbor.experiments import gap_sweep


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--h", type=int, nargs="+", default=[2, 3, 4])
    p.add_argument("--B", type=int, default=64)
    p.add_argument("--q", type=int, default=8)
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    rows = gap_sweep(args.h, args.B, args.q, args.pairs, args.seed, args.jobs)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()
