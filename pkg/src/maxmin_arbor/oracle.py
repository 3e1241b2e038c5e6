"""Exact brute-force solver and randomized-rounding baselines."""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from typing import Protocol

import numpy as np

from .core import ForestBuilder, Instance, Path, SolutionForest

log = logging.getLogger(__name__)


class BudgetExceeded(RuntimeError):
    pass


def _viable(inst: Instance, k: int, banned: int) -> list[bool]:
    """Vertices that could head a degree-k subtree, ignoring disjointness."""
    ok = [v not in inst.sources and not (banned >> v) & 1 for v in range(inst.n)]
    changed = True
    while changed:
        changed = False
        for v in range(inst.n):
            if ok[v] and v not in inst.sinks:
                if sum(1 for w in inst.adjacency[v] if ok[w]) < k:
                    ok[v] = False
                    changed = True
    return ok


def find_disjoint_arborescences(inst: Instance, k: int, sources=None, banned: int = 0,
                                depth_cap: int | None = None,
                                node_cap: int = 2_000_000) -> SolutionForest | None:
    """Vertex-disjoint arborescences of out-degree exactly k from every source.

    Open vertices are expanded in ascending id order and children are tried
    as ascending combinations, so the first witness found is deterministic.
    ``banned`` is a bitmask of vertices that may not be used.
    """
    srcs = sorted(inst.sources if sources is None else sources)
    if not srcs:
        return SolutionForest({}, {})
    if k == 0:
        return SolutionForest.from_records([((s,), None) for s in srcs])
    viable = _viable(inst, k, banned)
    adj = [[w for w in inst.adjacency[v] if viable[w]] for v in range(inst.n)]
    sinks = inst.sinks
    for s in srcs:
        if len(adj[s]) < k:
            return None
    used0 = banned
    for s in inst.sources:
        used0 |= 1 << s
    failed: set = set()
    calls = 0

    def solve(used: int, pending: tuple) -> list | None:
        nonlocal calls
        if not pending:
            return []
        key = (used, pending)
        if key in failed:
            return None
        calls += 1
        if calls > node_cap:
            raise BudgetExceeded(f"brute force exceeded {node_cap} search nodes")
        (u, du), rest = pending[0], pending[1:]
        cand = [w for w in adj[u] if not (used >> w) & 1]
        if len(cand) >= k:
            for combo in itertools.combinations(cand, k):
                nu = used
                new = []
                ok = True
                for w in combo:
                    nu |= 1 << w
                    if w not in sinks:
                        if depth_cap is not None and du + 1 >= depth_cap:
                            ok = False
                            break
                        new.append((w, du + 1 if depth_cap is not None else 0))
                if not ok:
                    continue
                sub = solve(nu, tuple(sorted(rest + tuple(new))))
                if sub is not None:
                    return [(u, combo)] + sub
        failed.add(key)
        return None

    plan = solve(used0, tuple((s, 0) for s in srcs))
    if plan is None:
        return None
    picks = dict(plan)
    b = ForestBuilder()
    for s in srcs:
        frontier = [b.add_root(s)]
        while frontier:
            nxt = []
            for node in frontier:
                for w in picks.get(b.path(node)[-1], ()):
                    nxt.append(b.add_child(node, w))
            frontier = nxt
    return b.build()


def brute_force_opt(inst: Instance, depth_cap: int | None = None,
                    node_cap: int = 2_000_000) -> tuple[int, SolutionForest]:
    """Largest k admitting disjoint degree-k arborescences, with a witness."""
    srcs = sorted(inst.sources)
    if not srcs:
        return 0, SolutionForest({}, {})
    upper = min(inst.out_degree(s) for s in srcs)
    for k in range(upper, 0, -1):
        w = find_disjoint_arborescences(inst, k, depth_cap=depth_cap, node_cap=node_cap)
        if w is not None:
            return k, w
    return 0, SolutionForest.from_records([((s,), None) for s in srcs])


class ChildDistribution(Protocol):
    def root_path(self) -> Path: ...

    def child_distribution(self, path: Path) -> tuple[list[Path], np.ndarray]: ...

    def is_closed(self, path: Path) -> bool: ...


def _sampled_rounding(x: ChildDistribution, per_node: int, rng: np.random.Generator) -> SolutionForest:
    b = ForestBuilder()
    frontier = [b.add_root(x.root_path()[0])]
    while frontier:
        nxt = []
        for node in frontier:
            path = b.path(node)
            if x.is_closed(path) or per_node <= 0:
                continue
            kids, w = x.child_distribution(path)
            total = float(np.sum(w))
            if total <= 0:
                continue
            picks = rng.choice(len(kids), size=per_node, p=np.asarray(w, float) / total)
            for c in picks:
                nxt.append(b.add_child(node, kids[c][-1]))
        frontier = nxt
    return b.build()


def naive_randomized_rounding(x: ChildDistribution, k: int, rng: np.random.Generator) -> SolutionForest:
    """Each selected open path draws k children i.i.d. proportional to x."""
    return _sampled_rounding(x, k, rng)


def halved_randomized_rounding(x: ChildDistribution, k: int, rng: np.random.Generator) -> SolutionForest:
    """As the naive rounding, but with k // 2 draws per open path."""
    return _sampled_rounding(x, k // 2, rng)


def sink_congestion_stats(sol: SolutionForest, sinks=None) -> dict:
    """Multiplicity of selected sinks over closed paths.

    Without ``sinks`` every childless node counts as closed.
    """
    ends = Counter(
        p[-1] for i, p in sol.paths.items()
        if (p[-1] in sinks if sinks is not None else not sol.children[i]) and len(p) > 1
    )
    if not ends:
        return {"mean": 0.0, "max": 0, "selected": 0, "histogram": {}}
    mult = list(ends.values())
    hist = Counter(mult)
    return {
        "mean": float(np.mean(mult)),
        "max": int(max(mult)),
        "selected": len(mult),
        "histogram": {str(c): hist[c] for c in sorted(hist)},
    }
