#!/usr/bin/env python3
"""Sink deletion on complete k-ary trees: removed fraction per depth, adversarial vs random."""

from __future__ import annotations

import argparse
import csv
import sys

from maxmin_arbor.pruning import adversarial_deletion_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--h", type=int, default=6)
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--beta", type=float, nargs="+", default=[0.01, 0.05, 0.1])
    p.add_argument("--seeds", type=int, default=5)
    args = p.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["mode", "beta", "depth", "removed_fraction", "predicted"])
    for mode in ("adversarial", "random"):
        for beta in args.beta:
            res = adversarial_deletion_experiment(args.k, args.h, args.alpha, beta,
                                                  seeds=range(args.seeds), mode=mode)
            for d, (got, pred) in enumerate(zip(res["removed_fraction"], res["predicted"])):
                w.writerow([mode, beta, d, f"{got:.6g}", f"{pred:.6g}"])


if __name__ == "__main__":
    main()
