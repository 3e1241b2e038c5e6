"""Many sources from a single-source solver: ring-based local search.

The current solution maps each covered source to one arborescence. To add a
source s0 the search grows rings: ring i holds addable trees (oracle answers
on the instance with all ring vertices removed) and the solution trees they
overlap (blocking trees). An addable tree whose overlap with the solution is
small in every layer is pruned to a disjoint tree and installed, displacing
the older tree of its source and truncating the later rings.

Degrees are k/(a*alpha) for addable trees, k/(c*alpha) after the collapse
pruning and k/(d*alpha) once installed, with (a, c, d) = (32, 128, 256) by
default and (1, 4, 8) for desk-scale runs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .core import LayeredInstance, SolutionForest, is_valid_solution
from .oracle import find_disjoint_arborescences
from .pruning import PremiseViolated


class StepCapExceeded(RuntimeError):
    def __init__(self, cap: int, potentials: list, reason: str = "step cap reached"):
        super().__init__(f"local search: {reason} after {cap} steps")
        self.cap = cap
        self.potentials = potentials
        self.reason = reason


Oracle = Callable[[LayeredInstance, int, frozenset, int], "SolutionForest | None"]


@dataclass(frozen=True)
class LsConstants:
    addable: int = 32
    collapse: int = 128
    install: int = 256

    def degrees(self, k: int, alpha: float) -> tuple[int, int, int]:
        return tuple(max(1, math.floor(k / (c * alpha)))
                     for c in (self.addable, self.collapse, self.install))


PAPER_CONSTANTS = LsConstants()
DESK_CONSTANTS = LsConstants(1, 4, 8)


def exact_oracle(node_cap: int = 2_000_000) -> Oracle:
    """Exhaustive single-source solver (alpha = 1)."""
    def call(li: LayeredInstance, s: int, banned: frozenset, degree: int):
        mask = 0
        for v in banned:
            mask |= 1 << v
        return find_disjoint_arborescences(li.base, degree, [s], mask, node_cap=node_cap)
    return call


def tree_vertices(tree: SolutionForest) -> set[int]:
    """Non-source vertices of an arborescence."""
    return {tree.end(q) for q in tree if tree.parents[q] is not None}


def trim_tree(tree: SolutionForest, degree: int, sinks) -> SolutionForest:
    """Keep the first ``degree`` children of every open node, top down."""
    keep = []
    stack = list(tree.roots)
    while stack:
        q = stack.pop()
        keep.append(q)
        if tree.end(q) not in sinks:
            kids = tree.children[q]
            if len(kids) < degree:
                raise ValueError(f"node {tree.paths[q]} has {len(kids)} < {degree} children")
            stack.extend(kids[:degree])
    return tree.restrict(keep)


def ls_prune_arborescence(tree: SolutionForest, R: Iterable[int], kp: int, sinks,
                          trace: list | None = None) -> SolutionForest:
    """Bottom-up sweep removing R and every open node left with fewer than kp/4 children.

    Premise: at most (kp/4)^i nodes of R in layer i and the root outside R.
    The trace rows carry the per-layer removal count and the bound
    1.5 * (kp/2)^i that the sweep maintains.
    """
    R = set(R)
    root = tree.roots[0]
    per_layer: dict[int, int] = {}
    for q in R:
        per_layer[tree.depth(q)] = per_layer.get(tree.depth(q), 0) + 1
    if root in R:
        raise PremiseViolated("root path is in R")
    for i, c in per_layer.items():
        if c > (kp / 4) ** i:
            raise PremiseViolated(f"{c} R paths in layer {i} exceed (k'/4)^{i} = {(kp / 4) ** i:.3g}")
    removed: set[int] = set()
    ch = tree.children
    levels = tree.by_depth()
    for i in range(len(levels) - 1, -1, -1):
        cnt = 0
        for q in levels[i]:
            if q in R:
                removed.add(q)
                cnt += 1
            elif tree.end(q) not in sinks:
                left = sum(1 for c in ch[q] if c not in removed)
                if 4 * left < kp:
                    removed.add(q)
                    cnt += 1
        if trace is not None:
            trace.append({"layer": i, "removed": cnt, "R": per_layer.get(i, 0),
                          "bound": 1.5 * (kp / 2) ** i})
    if root in removed:
        raise PremiseViolated("root removed by pruning")
    return tree.without(removed)


@dataclass
class Ring:
    addable: list[tuple[int, SolutionForest]] = field(default_factory=list)
    blocking: list[tuple[int, SolutionForest]] = field(default_factory=list)

    def vertices(self) -> set[int]:
        out: set[int] = set()
        for _, t in self.addable + self.blocking:
            out |= tree_vertices(t)
        return out


@dataclass
class SearchState:
    solution: dict[int, SolutionForest]
    rings: list[Ring] = field(default_factory=list)
    s0: int | None = None
    trace: list[dict] = field(default_factory=list)
    oracle_failures: int = 0

    def potential(self) -> tuple:
        return tuple(len(r.blocking) for r in self.rings) + (math.inf,)

    def record(self, action: str) -> None:
        self.trace.append({"step": len(self.trace), "source": self.s0,
                           "potential": self.potential(), "action": action})

    def potential_steps(self) -> list[list[tuple]]:
        """Potentials per augmentation phase, terminal installs excluded."""
        out: list[list[tuple]] = []
        for row in self.trace:
            if row["action"] == "start":
                out.append([])
            if row["action"] != "install":
                out[-1].append(row["potential"])
        return out

    def used_vertices(self) -> set[int]:
        out: set[int] = set()
        for t in self.solution.values():
            out |= tree_vertices(t)
        return out

    def forest(self) -> SolutionForest:
        out = SolutionForest({}, {})
        for s in sorted(self.solution):
            out = out.union(self.solution[s])
        return out

    def potential_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "source", "ring_sizes", "action"])
        for row in self.trace:
            w.writerow([row["step"], row["source"], " ".join(str(x) for x in row["potential"][:-1]),
                        row["action"]])
        return buf.getvalue()


def check_disjoint(solution: dict[int, SolutionForest]) -> None:
    seen: dict[int, int] = {}
    for s in sorted(solution):
        for v in tree_vertices(solution[s]):
            if v in seen:
                raise AssertionError(f"vertex {v} used by sources {seen[v]} and {s}")
            seen[v] = s


def find_addable(state: SearchState, s: int, li: LayeredInstance, oracle: Oracle, k: int,
                 alpha: float, consts: LsConstants, extra_banned: set[int] = frozenset()
                 ) -> SolutionForest | None:
    """Oracle call for ``s`` on the instance without ring vertices, trimmed
    to the addable degree."""
    banned = set(extra_banned)
    for r in state.rings:
        banned |= r.vertices()
    banned -= li.sources
    tree = oracle(li, s, frozenset(banned), max(1, math.ceil(k / alpha)))
    if tree is None or len(tree) == 0:
        return None
    return trim_tree(tree, consts.degrees(k, alpha)[0], li.sinks)


def _overlap_nodes(tree: SolutionForest, used: set[int]) -> set[int]:
    return {q for q in tree if tree.parents[q] is not None and tree.end(q) in used}


def _collapsible(tree: SolutionForest, used: set[int], kc: int) -> set[int] | None:
    hit = _overlap_nodes(tree, used)
    per: dict[int, int] = {}
    for q in hit:
        per[tree.depth(q)] = per.get(tree.depth(q), 0) + 1
    if all(c <= kc ** j for j, c in per.items()):
        return hit
    return None


def try_collapse(state: SearchState, li: LayeredInstance, k: int, alpha: float,
                 consts: LsConstants) -> int | None:
    """Install one collapsible addable tree, last ring first.

    Returns the collapsed source or None. The older tree of that source is
    removed from the solution and from its ring, and later rings are dropped.
    """
    ka, kc, ki = consts.degrees(k, alpha)
    used = state.used_vertices()
    for ri in range(len(state.rings) - 1, -1, -1):
        ring = state.rings[ri]
        for ai, (s, tree) in enumerate(ring.addable):
            hit = _collapsible(tree, used, kc)
            if hit is None:
                continue
            pruned = ls_prune_arborescence(tree, hit, ka, li.sinks)
            new = trim_tree(pruned, ki, li.sinks)
            del ring.addable[ai]
            old = state.solution.get(s)
            state.solution[s] = new
            if old is not None:
                for rj, r in enumerate(state.rings):
                    idx = [bi for bi, (t, bt) in enumerate(r.blocking) if t == s and bt is old]
                    if idx:
                        del r.blocking[idx[0]]
                        del state.rings[rj + 1:]
                        break
            check_disjoint(state.solution)
            return s
    return None


def _greedy_ring(state: SearchState, li: LayeredInstance, oracle: Oracle, k: int, alpha: float,
                 consts: LsConstants) -> Ring:
    ring = Ring()
    cands = {state.s0} | {t for r in state.rings for t, _ in r.blocking}
    taken: set[int] = set()
    if not state.rings:
        tree = find_addable(state, state.s0, li, oracle, k, alpha, consts)
        if tree is not None:
            ring.addable.append((state.s0, tree))
    else:
        added = True
        while added:
            added = False
            for s in sorted(cands):
                tree = find_addable(state, s, li, oracle, k, alpha, consts, taken)
                if tree is not None:
                    ring.addable.append((s, tree))
                    taken |= tree_vertices(tree)
                    added = True
    if not ring.addable:
        return ring
    addv = set()
    for _, t in ring.addable:
        addv |= tree_vertices(t)
    for t in sorted(state.solution):
        if tree_vertices(state.solution[t]) & addv:
            ring.blocking.append((t, state.solution[t]))
    return ring


def augment_source(state: SearchState, s0: int, li: LayeredInstance, oracle: Oracle, k: int,
                   alpha: float = 1.0, consts: LsConstants = PAPER_CONSTANTS,
                   step_cap: int = 100_000) -> SearchState:
    """Grow rings and collapse until ``s0`` is covered."""
    state.s0 = s0
    state.rings = []
    state.record("start")
    steps = 0
    while s0 not in state.solution:
        if steps >= step_cap:
            raise StepCapExceeded(step_cap, [r["potential"] for r in state.trace])
        steps += 1
        ring = _greedy_ring(state, li, oracle, k, alpha, consts)
        total_b = sum(len(r.blocking) for r in state.rings)
        if len(ring.addable) < total_b:
            state.oracle_failures += 1
        if not ring.addable:
            raise StepCapExceeded(steps, [r["potential"] for r in state.trace],
                                  reason=f"no addable tree for any candidate of source {s0}")
        if len(ring.blocking) < len(ring.addable) and _all_blocked(ring, state, k, alpha, consts):
            raise AssertionError("ring has fewer blocking than addable trees")
        state.rings.append(ring)
        state.record("ring")
        while s0 not in state.solution:
            got = try_collapse(state, li, k, alpha, consts)
            if got is None:
                break
            # installing s0 ends the phase and displaces nothing
            state.record("install" if got == s0 else f"collapse {got}")
    state.rings = []
    return state


def _all_blocked(ring: Ring, state: SearchState, k: int, alpha: float, consts: LsConstants) -> bool:
    used = state.used_vertices()
    kc = consts.degrees(k, alpha)[1]
    return all(_collapsible(t, used, kc) is None for _, t in ring.addable)


def solve_multi_source(li: LayeredInstance, k: int, oracle: Oracle, alpha: float = 1.0,
                       consts: LsConstants = PAPER_CONSTANTS, step_cap: int = 100_000,
                       state_out: list | None = None) -> SolutionForest:
    """Add sources one at a time in ascending id order."""
    state = SearchState({})
    for s in sorted(li.sources):
        augment_source(state, s, li, oracle, k, alpha, consts, step_cap)
    if state_out is not None:
        state_out.append(state)
    out = state.forest()
    deg = consts.degrees(k, alpha)[2]
    res = is_valid_solution(li.base, out, deg, 1)
    if not res.ok:
        raise AssertionError(f"local search output invalid: {res.reasons[:3]}")
    return out
