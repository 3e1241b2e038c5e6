"""Monte-Carlo harnesses: the rounding gap sweep and the sink-degree band."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .generators import HardInstanceLP, gen_hard_instance, hard_instance_leaf_degrees
from .oracle import halved_randomized_rounding, naive_randomized_rounding, sink_congestion_stats


def hard_k(q: int, m: int) -> int:
    """Integral demand just below q / (1 + 1/log2 m)."""
    return max(1, math.floor(q / (1 + 1 / math.log2(max(m, 2)))))


def sink_degree_band(li, B: int, q: int) -> dict:
    """Fraction of sinks whose leaf degree lies within (1 +- 3/sqrt(B/q)) of (B/q)^(h-1)."""
    deg = hard_instance_leaf_degrees(li)
    mu = (B / q) ** (li.h - 1)
    tol = 3 / math.sqrt(B / q)
    inside = (deg >= (1 - tol) * mu) & (deg <= (1 + tol) * mu)
    return {"mean_degree": float(deg.mean()), "target": mu, "tol": tol,
            "fraction_inside": float(inside.mean()), "sinks": int(len(deg))}


def _pair(args) -> tuple[float, float]:
    li, k, seed = args
    x = HardInstanceLP(li, k)
    a = naive_randomized_rounding(x, k, np.random.default_rng(seed))
    b = halved_randomized_rounding(x, k, np.random.default_rng(seed))
    return (sink_congestion_stats(a, li.sinks)["mean"], sink_congestion_stats(b, li.sinks)["mean"])


def gap_sweep(hs, B: int = 64, q: int = 8, pairs: int = 200, seed: int = 0, jobs: int = 1) -> list[dict]:
    """Naive vs halved rounding on one gap instance per h with m = q^h sinks.

    Pair i uses the same child seed for both rounders.
    """
    rows = []
    root = np.random.SeedSequence(seed)
    inst_seqs = root.spawn(len(hs))
    for h, iseq in zip(hs, inst_seqs):
        m = q ** h
        li = gen_hard_instance(h, B, q, m, np.random.default_rng(iseq))
        k = hard_k(q, m)
        seeds = [int(s.generate_state(1)[0]) for s in iseq.spawn(pairs)]
        work = [(li, k, s) for s in seeds]
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as ex:
                res = list(ex.map(_pair, work))
        else:
            res = [_pair(w) for w in work]
        naive = np.array([r[0] for r in res])
        halved = np.array([r[1] for r in res])
        band = sink_degree_band(li, B, q)
        rows.append({
            "h": h, "B": B, "q": q, "m": m, "k": k, "pairs": pairs,
            "naive_mean": float(naive.mean()), "halved_mean": float(halved.mean()),
            "naive_se": float(naive.std(ddof=1) / math.sqrt(pairs)) if pairs > 1 else 0.0,
            "halved_se": float(halved.std(ddof=1) / math.sqrt(pairs)) if pairs > 1 else 0.0,
            "paired_wins": int((naive > halved).sum()),
            "band_fraction": band["fraction_inside"],
        })
    return rows
