#!/usr/bin/env python3
"""Conditional congestion across sparsification steps on planted instances."""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from maxmin_arbor.generators import gen_planted
from maxmin_arbor.params import desk_small
from maxmin_arbor.path_lp import max_feasible_k
from maxmin_arbor.sparsifier import sparsify, supermartingale_steps


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--h", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--g", type=int, default=2)
    p.add_argument("--seeds", type=int, default=10)
    args = p.parse_args()
    li, _ = gen_planted(args.k, args.h, 1, args.noise, np.random.default_rng(0))
    k, x = max_feasible_k(li)
    prof = desk_small(li.n, k, g=args.g)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "steps", "ok", "worst_margin"])
    for s in range(args.seeds):
        wm = sparsify(x, k, prof, np.random.default_rng(s))
        rows = supermartingale_steps(wm)
        margin = min((r["before"] / 2 + wm.weight(r["p"]) - r["after"] for r in rows), default=0.0)
        w.writerow([s, len(rows), sum(r["ok"] for r in rows), f"{margin:.6g}"])


if __name__ == "__main__":
    main()
