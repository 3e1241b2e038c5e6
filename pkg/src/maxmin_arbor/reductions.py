"""Depth bounding, layering, and congestion removal."""

from __future__ import annotations

import math
from collections import defaultdict

import networkx as nx

from .core import ForestBuilder, Instance, LayeredInstance, SolutionForest


class InfeasibleReduction(RuntimeError):
    pass


def prune_to_bounded_depth(sol: SolutionForest, k: int,
                           trace: list[int] | None = None) -> SolutionForest:
    """Keep, below each retained node, the k/2 children with fewest descendants.

    Leaves of the input (nodes without children) are treated as closed.
    Ties break by child vertex id. If ``trace`` is given it receives, per
    depth, the total descendant count of the retained nodes at that depth.
    """
    if k < 2 or k % 2:
        raise ValueError("k must be a positive even integer")
    ch = sol.children
    for i in sol:
        if ch[i] and len(ch[i]) < k:
            raise ValueError(f"node {i} has {len(ch[i])} < {k} children")
    size: dict[int, int] = {}
    for level in reversed(sol.by_depth()):
        for i in level:
            size[i] = sum(1 + size[c] for c in ch[i])

    keep = set(sol.roots)
    frontier = list(sol.roots)
    while frontier:
        if trace is not None:
            trace.append(sum(size[i] for i in frontier))
        nxt = []
        for i in frontier:
            if not ch[i]:
                continue
            best = sorted(ch[i], key=lambda c: (size[c], sol.end(c), c))[: k // 2]
            nxt.extend(best)
        keep.update(nxt)
        frontier = nxt
    return sol.restrict(keep)


def layer_count(n: int) -> int:
    """Number of copy layers used by :func:`to_layered`."""
    return max(1, math.ceil(math.log2(max(n, 2))))


def to_layered(inst: Instance) -> tuple[LayeredInstance, dict[int, tuple[int, int]]]:
    """Unroll ``inst`` into L_0 = sources plus ceil(log2 n) copies of V.

    Returns the layered instance and ``copy_map``: layered id -> (vertex, layer).
    """
    n = inst.n
    h = layer_count(n)
    srcs = sorted(inst.sources)
    copy_map: dict[int, tuple[int, int]] = {i: (s, 0) for i, s in enumerate(srcs)}
    base = len(srcs)

    def cid(v: int, i: int) -> int:
        return base + (i - 1) * n + v

    for i in range(1, h + 1):
        for v in range(n):
            copy_map[cid(v, i)] = (v, i)
    edges = []
    for idx, s in enumerate(srcs):
        edges.extend((idx, cid(v, 1)) for v in inst.successors(s))
    orig = inst.edge_array.tolist()
    for i in range(1, h):
        edges.extend((cid(u, i), cid(v, i + 1)) for u, v in orig)
    sinks = [cid(t, i) for i in range(1, h + 1) for t in inst.sinks]
    layers = [list(range(base))] + [[cid(v, i) for v in range(n)] for i in range(1, h + 1)]
    li = LayeredInstance(Instance(base + h * n, edges, range(base), sinks), layers)
    return li, copy_map


def from_layered(sol: SolutionForest, copy_map: dict[int, tuple[int, int]]) -> SolutionForest:
    paths = {}
    for i, p in sol.paths.items():
        try:
            paths[i] = tuple(copy_map[v][0] for v in p)
        except KeyError as e:
            raise ValueError(f"node {i} uses unknown layered vertex {e.args[0]}") from None
    return SolutionForest(paths, sol.parents)


def remove_congestion(sol: SolutionForest, k: int, K: int,
                      sinks: frozenset[int] | None = None) -> SolutionForest:
    """Turn a degree-k, congestion-K solution into a congestion-free one.

    Every endpoint u of a non-leaf node must pick floor(k/K) out-neighbours
    among the child endpoints used below copies of u, and every vertex may be
    picked once. That is a b-matching in the bipartite multigraph of
    (endpoint, child endpoint) pairs; it is found as an integral max flow and
    the new forest is grown from the sources along picked pairs. Sources are
    never picked, since their root copy already occupies them.
    """
    if K < 1 or k < 0:
        raise ValueError("need K >= 1 and k >= 0")
    d = k // K
    ch = sol.children
    open_ends: set[int] = set()
    pairs: dict[int, set[int]] = defaultdict(set)
    for i, p in sol.paths.items():
        if ch[i] and (sinks is None or p[-1] not in sinks):
            open_ends.add(p[-1])
            pairs[p[-1]].update(sol.end(c) for c in ch[i])
    sources = {sol.paths[r][0] for r in sol.roots}

    picked: dict[int, list[int]] = {u: [] for u in open_ends}
    if d > 0 and open_ends:
        g = nx.DiGraph()
        for u in sorted(open_ends):
            g.add_edge("S", ("u", u), capacity=d)
            for v in sorted(pairs[u]):
                if v not in sources:
                    g.add_edge(("u", u), ("v", v), capacity=1)
                    g.add_edge(("v", v), "T", capacity=1)
        if "T" not in g:
            raise InfeasibleReduction("no admissible child endpoints")
        value, flow = nx.maximum_flow(g, "S", "T")
        if value != d * len(open_ends):
            raise InfeasibleReduction(
                f"flow {value} < {d * len(open_ends)}: input is not degree-{k} with congestion <= {K}")
        for u in sorted(open_ends):
            picked[u] = sorted(node[1] for node, f in flow[("u", u)].items() if f > 0)

    b = ForestBuilder()
    for s in sorted(sources):
        frontier = [b.add_root(s)]
        while frontier:
            nxt = []
            for node in frontier:
                for v in picked.get(b.path(node)[-1], []):
                    nxt.append(b.add_child(node, v))
            frontier = nxt
    return b.build()
