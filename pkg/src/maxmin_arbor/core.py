"""Graph instances, path-multiset solutions and their verifiers.

A solution is a forest of path nodes. Every node carries the full vertex
sequence of its path and a link to the node holding the path with the last
vertex dropped. Two nodes may carry the same path; they are different
copies. Depth of a node is its number of edges, so a source root has depth 0.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Path = tuple[int, ...]


class Instance:
    """Directed graph with a source set and a terminal sink set.

    Edges are stored as a deduplicated ``(E, 2)`` integer array together with
    a CSR successor table, which keeps very large generated instances cheap.
    """

    def __init__(self, n: int, edges, sources: Iterable[int], sinks: Iterable[int]):
        self.n = int(n)
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(arr):
            arr = np.unique(arr, axis=0)
        self.edge_array = arr
        self.sources = frozenset(int(s) for s in sources)
        self.sinks = frozenset(int(t) for t in sinks)

    @cached_property
    def _csr(self) -> tuple[np.ndarray, np.ndarray]:
        arr = self.edge_array
        ok = (arr >= 0).all(axis=1) & (arr < self.n).all(axis=1) if len(arr) else np.zeros(0, bool)
        arr = arr[ok]
        counts = np.bincount(arr[:, 0], minlength=self.n) if len(arr) else np.zeros(self.n, np.int64)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        # np.unique sorted rows by (u, v), so each successor block is sorted
        return indptr, arr[:, 1].copy()

    def successors(self, v: int) -> list[int]:
        indptr, indices = self._csr
        return indices[indptr[v]:indptr[v + 1]].tolist()

    def out_degree(self, v: int) -> int:
        indptr, _ = self._csr
        return int(indptr[v + 1] - indptr[v])

    @cached_property
    def adjacency(self) -> list[list[int]]:
        return [self.successors(v) for v in range(self.n)]

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.edge_array.tolist()))

    def has_edge(self, u: int, v: int) -> bool:
        if not (0 <= u < self.n):
            return False
        indptr, indices = self._csr
        block = indices[indptr[u]:indptr[u + 1]]
        i = np.searchsorted(block, v)
        return bool(i < len(block) and block[i] == v)

    @property
    def edge_count(self) -> int:
        return len(self.edge_array)

    def __repr__(self) -> str:
        return (f"Instance(n={self.n}, edges={self.edge_count}, "
                f"sources={len(self.sources)}, sinks={len(self.sinks)})")


class LayeredInstance:
    """An instance whose vertices are partitioned into layers L_0..L_h.

    ``layer_of[v]`` is stored at construction and never recomputed.
    """

    def __init__(self, base: Instance, layers: Sequence[Sequence[int]],
                 provenance: dict | None = None):
        self.base = base
        self.provenance = provenance
        self.layers = tuple(tuple(int(v) for v in layer) for layer in layers)
        layer_of = np.full(base.n, -1, dtype=np.int64)
        for i, layer in enumerate(self.layers):
            if layer:
                layer_of[np.asarray(layer, dtype=np.int64)] = i
        self.layer_of = layer_of

    @property
    def h(self) -> int:
        return len(self.layers) - 1

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def sources(self) -> frozenset[int]:
        return self.base.sources

    @property
    def sinks(self) -> frozenset[int]:
        return self.base.sinks

    def layer(self, v: int) -> int:
        return int(self.layer_of[v])

    def single_source(self) -> int:
        if len(self.sources) != 1:
            raise ValueError(f"expected a single source, found {len(self.sources)}")
        return next(iter(self.sources))

    def __repr__(self) -> str:
        return f"LayeredInstance(h={self.h}, base={self.base!r})"


def validate_instance(inst: Instance) -> list[str]:
    """Return every broken instance rule; an empty list means valid."""
    out: list[str] = []
    if inst.n < 1:
        out.append("vertex count must be positive")
    for name, vs in (("source", inst.sources), ("sink", inst.sinks)):
        bad = sorted(v for v in vs if not 0 <= v < inst.n)
        if bad:
            out.append(f"{name} id out of range: {bad[:5]}")
    overlap = inst.sources & inst.sinks
    if overlap:
        out.append(f"sources/sinks overlap: {sorted(overlap)[:5]}")
    arr = inst.edge_array
    if len(arr):
        bad_rows = ~((arr >= 0) & (arr < inst.n)).all(axis=1)
        if bad_rows.any():
            out.append(f"edge endpoint out of range: {arr[bad_rows][0].tolist()}")
        sink_mask = np.zeros(max(inst.n, 1), dtype=bool)
        sink_ids = [t for t in inst.sinks if 0 <= t < inst.n]
        sink_mask[sink_ids] = True
        tails = arr[~bad_rows, 0]
        from_sink = tails[sink_mask[tails]]
        if len(from_sink):
            out.append(f"sink has outgoing edge: {int(from_sink[0])}")
    return out


def validate_layered(li: LayeredInstance) -> list[str]:
    out = validate_instance(li.base)
    seen = [v for layer in li.layers for v in layer]
    if len(seen) != len(set(seen)) or set(seen) != set(range(li.n)):
        out.append("layers do not partition the vertex set")
    if not li.layers or set(li.layers[0]) != set(li.sources):
        out.append("L_0 differs from the source set")
    arr = li.base.edge_array
    if len(arr) and not out:
        lu, lv = li.layer_of[arr[:, 0]], li.layer_of[arr[:, 1]]
        bad = np.nonzero(lv != lu + 1)[0]
        if len(bad):
            out.append(f"edge skips layers: {arr[bad[0]].tolist()}")
    return out


class SolutionForest:
    """Immutable multiset of paths with parent links.

    Node ids are arbitrary integers kept stable under :meth:`restrict`, so a
    pruned forest's node set is literally a subset of its input's.
    """

    def __init__(self, paths: Mapping[int, Path], parents: Mapping[int, int | None]):
        self.paths: dict[int, Path] = dict(paths)
        self.parents: dict[int, int | None] = dict(parents)

    @classmethod
    def from_records(cls, records: Sequence[tuple[Sequence[int], int | None]]) -> "SolutionForest":
        return cls({i: tuple(p) for i, (p, _) in enumerate(records)},
                   {i: par for i, (_, par) in enumerate(records)})

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self) -> Iterator[int]:
        return iter(self.paths)

    def __contains__(self, node: int) -> bool:
        return node in self.paths

    @cached_property
    def children(self) -> dict[int, list[int]]:
        ch: dict[int, list[int]] = {i: [] for i in self.paths}
        for i, par in self.parents.items():
            if par is not None and par in ch:
                ch[par].append(i)
        for lst in ch.values():
            lst.sort(key=lambda c: (self.paths[c][-1], c))
        return ch

    @cached_property
    def roots(self) -> list[int]:
        return sorted((i for i, par in self.parents.items() if par is None),
                      key=lambda i: (self.paths[i][0], i))

    def end(self, node: int) -> int:
        return self.paths[node][-1]

    def depth(self, node: int) -> int:
        return len(self.paths[node]) - 1

    def source_of(self, node: int) -> int:
        return self.paths[node][0]

    @cached_property
    def max_depth(self) -> int:
        return max((len(p) - 1 for p in self.paths.values()), default=-1)

    def by_depth(self) -> list[list[int]]:
        levels: list[list[int]] = [[] for _ in range(self.max_depth + 1)]
        for i, p in self.paths.items():
            levels[len(p) - 1].append(i)
        return levels

    def descendants(self, node: int) -> list[int]:
        """Strict descendants in breadth-first order."""
        out, frontier = [], [node]
        while frontier:
            nxt = [c for f in frontier for c in self.children[f]]
            out.extend(nxt)
            frontier = nxt
        return out

    def descendants_at(self, node: int, dist: int) -> list[int]:
        frontier = [node]
        for _ in range(dist):
            frontier = [c for f in frontier for c in self.children[f]]
        return frontier

    def ancestor(self, node: int, up: int) -> int | None:
        cur: int | None = node
        for _ in range(up):
            if cur is None:
                return None
            cur = self.parents[cur]
        return cur

    def restrict(self, keep: Iterable[int]) -> "SolutionForest":
        """Sub-forest on ``keep``; nodes whose parent is dropped go too."""
        keep = set(keep)
        kept: dict[int, Path] = {}
        parents: dict[int, int | None] = {}
        for level in self.by_depth():
            for i in level:
                par = self.parents[i]
                if i in keep and (par is None or par in kept):
                    kept[i] = self.paths[i]
                    parents[i] = par
        return SolutionForest(kept, parents)

    def without(self, drop: Iterable[int]) -> "SolutionForest":
        drop = set(drop)
        return self.restrict(i for i in self.paths if i not in drop)

    def union(self, other: "SolutionForest") -> "SolutionForest":
        """Disjoint union; ``other`` is relabelled after this forest's ids."""
        off = max(self.paths, default=-1) + 1
        paths = dict(self.paths)
        parents = dict(self.parents)
        for i, p in other.paths.items():
            paths[i + off] = p
            par = other.parents[i]
            parents[i + off] = None if par is None else par + off
        return SolutionForest(paths, parents)

    def relabeled(self) -> "SolutionForest":
        """Same forest with ids 0..N-1 in breadth-first, vertex-sorted order."""
        order = [r for r in self.roots]
        pos = 0
        while pos < len(order):
            order.extend(self.children[order[pos]])
            pos += 1
        new = {old: i for i, old in enumerate(order)}
        return SolutionForest({new[o]: self.paths[o] for o in order},
                              {new[o]: (None if self.parents[o] is None else new[self.parents[o]])
                               for o in order})

    def path_multiset(self) -> Counter:
        return Counter(self.paths.values())

    def min_open_degree(self, sinks: frozenset[int] | set[int]) -> int | None:
        degs = [len(self.children[i]) for i, p in self.paths.items() if p[-1] not in sinks]
        return min(degs, default=None)

    def __repr__(self) -> str:
        return f"SolutionForest(nodes={len(self)}, roots={len(self.roots)}, depth={self.max_depth})"


class ForestBuilder:
    """Incremental construction of a :class:`SolutionForest`."""

    def __init__(self):
        self._paths: dict[int, Path] = {}
        self._parents: dict[int, int | None] = {}

    def add_root(self, source: int) -> int:
        i = len(self._paths)
        self._paths[i] = (source,)
        self._parents[i] = None
        return i

    def add_child(self, parent: int, v: int) -> int:
        i = len(self._paths)
        self._paths[i] = self._paths[parent] + (v,)
        self._parents[i] = parent
        return i

    def path(self, node: int) -> Path:
        return self._paths[node]

    def build(self) -> SolutionForest:
        return SolutionForest(self._paths, self._parents)


@dataclass(frozen=True)
class CongestionReport:
    per_vertex: dict[int, int]
    max_global: int
    local_max: dict[int, int] = field(default_factory=dict)

    @property
    def max_local(self) -> int:
        return max(self.local_max.values(), default=0)


def global_congestion(sol: SolutionForest) -> CongestionReport:
    per_vertex = dict(Counter(p[-1] for p in sol.paths.values()))
    return CongestionReport(per_vertex, max(per_vertex.values(), default=0))


def local_congestion(sol: SolutionForest, ell: int) -> CongestionReport:
    """Max over (p, v) of the number of paths in D(p, <= l') ending at v.

    ``local_max[l']`` is reported for every ``l'`` in ``0..ell``. The virtual
    root counts every path of depth at most ``l'``.
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    # (anchor, v) -> counts indexed by distance from the anchor
    table: dict[tuple[int | None, int], list[int]] = defaultdict(lambda: [0] * (ell + 1))
    for q, path in sol.paths.items():
        v = path[-1]
        d = len(path) - 1
        if d <= ell:
            table[(None, v)][d] += 1
        anc: int | None = q
        for dist in range(ell + 1):
            if anc is None:
                break
            table[(anc, v)][dist] += 1
            anc = sol.parents[anc]
    local_max = {}
    for lp in range(ell + 1):
        local_max[lp] = max((sum(c[:lp + 1]) for c in table.values()), default=0)
    g = global_congestion(sol)
    return CongestionReport(g.per_vertex, g.max_global, local_max)


@dataclass
class ValidationResult:
    ok: bool
    reasons: list[str]
    warnings: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def is_valid_solution(inst: Instance, sol: SolutionForest, k: int, allow_congestion: int = 1,
                      *, strict: bool = False, sources: Iterable[int] | None = None,
                      max_reasons: int = 20) -> ValidationResult:
    """Check the four solution rules: roots, congestion, degree and edges.

    ``sources`` restricts the root check to a subset (partial solutions).
    With ``strict`` every open node needs exactly ``k`` children.
    """
    reasons: list[str] = []
    warnings: list[str] = []
    wanted = inst.sources if sources is None else frozenset(sources)
    root_count = Counter(sol.paths[r][0] for r in sol.roots)
    for s in sorted(wanted):
        if root_count.get(s, 0) != 1:
            reasons.append(f"source {s} has {root_count.get(s, 0)} root nodes")
    for r in sol.roots:
        p = sol.paths[r]
        if len(p) != 1 or p[0] not in wanted:
            reasons.append(f"root node {r} carries {list(p)}, not a source path")

    cong = global_congestion(sol)
    for v, c in sorted(cong.per_vertex.items()):
        if c > allow_congestion:
            reasons.append(f"vertex {v} has congestion {c} > {allow_congestion}")
            if len(reasons) >= max_reasons:
                break

    for i, p in sol.paths.items():
        par = sol.parents[i]
        if par is not None:
            if par not in sol.paths or sol.paths[par] != p[:-1]:
                reasons.append(f"node {i} parent does not carry its prefix")
            elif not inst.has_edge(p[-2], p[-1]):
                reasons.append(f"node {i} uses missing edge ({p[-2]},{p[-1]})")
        if len(set(p)) != len(p):
            warnings.append(f"node {i} repeats a vertex")
        nchild = len(sol.children[i])
        if p[-1] in inst.sinks:
            if nchild:
                reasons.append(f"closed node {i} has {nchild} children")
        elif nchild < k or (strict and nchild != k):
            reasons.append(f"open path {list(p)} with {nchild} children (k={k})")
        if len(reasons) >= max_reasons:
            break
    return ValidationResult(not reasons, reasons, warnings)


def solution_degree(inst: Instance, sol: SolutionForest) -> int:
    """Smallest child count over open nodes (0 if some open node is a dead end)."""
    d = sol.min_open_degree(inst.sinks)
    return 0 if d is None else d
