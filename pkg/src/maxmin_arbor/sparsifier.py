"""Sparsification of a path-LP solution into the weighted multiset P'.

Every open path of P' gets (k/4)*g children drawn i.i.d. from its LP children,
and every path in layer i weighs g^-i. Demand and granularity then hold by
construction; the capacity rows are checked after the draw and the whole
draw is repeated on failure.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .core import ForestBuilder, SolutionForest
from .params import ParamProfile
from .path_lp import FractionalPathSolution

log = logging.getLogger(__name__)


class RetriesExhausted(RuntimeError):
    def __init__(self, attempts: int, violations: list[str]):
        super().__init__(f"capacity still violated after {attempts} attempts: {violations[:3]}")
        self.attempts = attempts
        self.violations = violations


@dataclass
class WeightedMultiset:
    """P' as a forest; ``pnode`` maps each forest node to its path-index node."""

    forest: SolutionForest
    gbase: int
    k: int
    draws: int
    x: FractionalPathSolution
    pnode: dict[int, int]
    attempts: int = 1

    @property
    def sinks(self) -> frozenset[int]:
        return self.x.index.li.sinks

    def layer(self, node: int) -> int:
        return self.forest.depth(node)

    def weight(self, node: int) -> float:
        return float(self.gbase) ** -self.layer(node)

    def is_open(self, node: int) -> bool:
        return self.forest.end(node) not in self.sinks

    def prefix(self, i: int) -> SolutionForest:
        """The partial multiset P^(i) of paths in layers <= i."""
        return self.forest.restrict(n for n in self.forest if self.forest.depth(n) <= i)

    def endpoint_counts(self) -> dict[int, Counter]:
        """node -> Counter of endpoints over its descendants, itself included."""
        out: dict[int, Counter] = {}
        for level in reversed(self.forest.by_depth()):
            for a in level:
                c = Counter({self.forest.end(a): 1})
                for ch in self.forest.children[a]:
                    c.update(out[ch])
                out[a] = c
        return out

    def to_dict(self) -> dict:
        from .io import solution_to_dict
        return solution_to_dict(self.forest, gbase=self.gbase, k=self.k)


def _draw(x: FractionalPathSolution, draws: int, rng: np.random.Generator):
    pi = x.index
    b = ForestBuilder()
    root = b.add_root(pi.end[pi.root])
    pnode = {root: pi.root}
    frontier = [root]
    while frontier:
        nxt = []
        for node in frontier:
            a = pnode[node]
            if not pi.is_open(a):
                continue
            kids, w = x.children_of(a)
            total = float(np.sum(w))
            if total <= 0:
                raise ValueError(f"open path {pi.path(a)} has no LP children")
            picks = rng.choice(len(kids), size=draws, p=np.asarray(w, float) / total)
            for c in picks:
                child = b.add_child(node, pi.end[kids[c]])
                pnode[child] = kids[c]
                nxt.append(child)
        frontier = nxt
    return b.build(), pnode


def sparsify(x: FractionalPathSolution, k: int, profile: ParamProfile, rng: np.random.Generator,
             max_retries: int = 3) -> WeightedMultiset:
    """Draw P' layer by layer; redraw everything while a capacity row fails.

    ``max_retries`` counts redraws after the first attempt.
    """
    g = profile.granularity_base
    draws = (k * g) // 4
    if draws < 1:
        raise ValueError("(k/4)*g must be at least 1")
    last: list[str] = []
    for attempt in range(1, max_retries + 2):
        forest, pnode = _draw(x, draws, rng)
        wm = WeightedMultiset(forest, g, k, draws, x, pnode, attempt)
        last = check_sparse_constraints(wm)
        if not last:
            return wm
        log.debug("sparsify attempt %d: %d violations", attempt, len(last))
    raise RetriesExhausted(max_retries + 1, last)


def check_sparse_constraints(wm: WeightedMultiset, limit: int = 50) -> list[str]:
    """Demand by child count, granularity by layer, capacity by a full sweep.

    Capacity in integers: copies of descendants of p ending at v number at
    most 2 * g^(layer(v) - layer(p)).
    """
    out: list[str] = []
    f = wm.forest
    li = wm.x.index.li
    for a, path in f.paths.items():
        if len(f.children[a]) != (wm.draws if wm.is_open(a) else 0):
            out.append(f"demand violated at p={a} ({len(f.children[a])} children, want "
                       f"{wm.draws if wm.is_open(a) else 0})")
        if li.layer(path[-1]) != len(path) - 1:
            out.append(f"granularity violated at p={a}")
    cnt: dict[tuple[int, int], int] = defaultdict(int)
    for q in f:
        v = f.end(q)
        a = q
        while a is not None:
            cnt[(a, v)] += 1
            a = f.parents[a]
    g = wm.gbase
    for (a, v), c in sorted(cnt.items()):
        if c > 2 * g ** (li.layer(v) - f.depth(a)):
            out.append(f"capacity violated at (p,v)=({a},{v}): {c} copies")
            if len(out) >= limit:
                break
    return out


class _LpCong:
    """cong(q, v) = sum of x over LP descendants of q (itself included) ending at v."""

    def __init__(self, x: FractionalPathSolution):
        self.x = x
        self._cache: dict[int, dict[int, float]] = {}

    def __call__(self, q: int, v: int) -> float:
        if q not in self._cache:
            pi = self.x.index
            # iterative post-order to avoid deep recursion
            stack = [(q, False)]
            while stack:
                a, done = stack.pop()
                if a in self._cache:
                    continue
                if not done:
                    stack.append((a, True))
                    stack.extend((c, False) for c in pi.children[a] if c not in self._cache)
                    continue
                tab: dict[int, float] = defaultdict(float)
                tab[pi.end[a]] += self.x.value(a)
                for c in pi.children[a]:
                    for w, val in self._cache[c].items():
                        tab[w] += val
                self._cache[a] = dict(tab)
        return self._cache[q].get(v, 0.0)


def conditional_congestion(wm: WeightedMultiset, partial: SolutionForest, p: int, v: int,
                           lp_cong: _LpCong | None = None) -> float:
    """cong(p, v | P^(i)) where i is the deepest layer of ``partial``.

    ``partial`` must share node ids with ``wm.forest``. Vertices in layers
    <= i get the settled weight of copies ending there; deeper vertices get
    sum over frontier descendants q of y(q)/x(q) * cong(q, v).
    """
    li = wm.x.index.li
    i = partial.max_depth
    lp_cong = lp_cong or _LpCong(wm.x)
    sub = [p] + partial.descendants(p)
    if li.layer(v) <= i:
        return sum(1 for q in sub if partial.end(q) == v) * float(wm.gbase) ** -li.layer(v)
    total = 0.0
    for q in sub:
        if partial.depth(q) == i:
            a = wm.pnode[q]
            total += wm.weight(q) / wm.x.value(a) * lp_cong(a, v)
    return total


def supermartingale_steps(wm: WeightedMultiset) -> list[dict]:
    """For every node p, vertex v below the frontier and layer step i -> i+1,
    compare cong(p,v|P^(i+1)) with cong(p,v|P^(i))/2 + y(p)."""
    lp_cong = _LpCong(wm.x)
    li = wm.x.index.li
    rows = []
    h = wm.forest.max_depth
    prefixes = [wm.prefix(i) for i in range(h + 1)]
    for i in range(h):
        cur, nxt = prefixes[i], prefixes[i + 1]
        targets = [v for v in range(li.n) if li.layer(v) > i]
        for p in cur:
            if not wm.is_open(p):
                continue
            for v in targets:
                if lp_cong(wm.pnode[p], v) == 0:
                    continue
                before = conditional_congestion(wm, cur, p, v, lp_cong)
                after = conditional_congestion(wm, nxt, p, v, lp_cong)
                rows.append({"step": i, "p": p, "v": v, "before": before, "after": after,
                             "ok": after <= before / 2 + wm.weight(p) + 1e-12})
    return rows
