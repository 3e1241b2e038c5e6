"""Layer-by-layer rounding of P' with constructive-LLL resampling.

Each open frontier path draws ``sample_children`` children uniformly from its
P' children. A draw is accepted once none of three event families holds:

* B1(v, t): the drawn paths whose relative load r = cong(q, v) / y(q) lies in
  the dyadic class (2^-t, 2^-(t-1)] put more than twice their expected load,
  plus ``b1_slack``, on v;
* B2(p): p, in one of the ell + 1 layers above the frontier, has at least
  sample_children / mark_frac_denom marked children, where a path is marked
  when too many of its close P' descendants newly cross the local threshold;
* B3: the source path is marked.

Only frontier draws are random, so every event is resampled by redrawing
the slots of the frontier paths it depends on.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import LayeredInstance, Path, SolutionForest, global_congestion, local_congestion
from .params import ParamProfile
from .path_lp import FractionalPathSolution, max_feasible_k
from .pruning import ResampleCapExceeded, bottom_to_top_prune
from .sparsifier import WeightedMultiset, sparsify

log = logging.getLogger(__name__)


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception | str):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True, order=True)
class BadEvent:
    key: tuple
    kind: str = field(compare=False)
    lhs: float = field(compare=False)
    rhs: float = field(compare=False)
    depends_on: tuple[int, ...] = field(compare=False)

    def describe(self) -> dict:
        return {"kind": self.kind, "key": list(self.key[1:]), "lhs": self.lhs, "rhs": self.rhs,
                "depends_on": len(self.depends_on)}


@lru_cache(maxsize=None)
def load_class(count: int, gpow: int) -> int:
    """t with count / gpow in (2^-t, 2^-(t-1)]."""
    t = 0
    while count * 2 ** t <= gpow:
        t += 1
    return t


class PrimeTables:
    """Endpoint multiplicities of P' descendants and relative loads."""

    def __init__(self, wm: WeightedMultiset):
        self.wm = wm
        self.li: LayeredInstance = wm.x.index.li
        self.ends = wm.endpoint_counts()
        self.g = wm.gbase
        self._rmap: dict[tuple[int, int, int], dict[int, tuple[int, int]]] = {}

    def vlayer(self, v: int) -> int:
        return self.li.layer(v)

    def loads(self, a: int, lo: int, hi: int) -> dict[int, tuple[int, int]]:
        """v -> (count, g^(layer(v) - layer(a))) for descendants ending in layers lo..hi.

        The relative load cong(a, v) / y(a) is count / g^(...)."""
        key = (a, lo, hi)
        if key not in self._rmap:
            da = self.wm.forest.depth(a)
            out = {}
            for v, c in self.ends[a].items():
                lv = self.vlayer(v)
                if lo <= lv <= hi:
                    out[v] = (c, self.g ** (lv - da))
            self._rmap[key] = out
        return self._rmap[key]


@dataclass
class RoundingState:
    """Partial integral solution Q^(i) and its map into P'."""

    layer: int
    paths: dict[int, Path]
    parents: dict[int, int | None]
    qp: dict[int, int]
    by_layer: list[list[int]]
    children: dict[int, list[int]]
    marked: set[int] = field(default_factory=set)
    trace: list[dict] = field(default_factory=list)

    @classmethod
    def initial(cls, wm: WeightedMultiset) -> "RoundingState":
        root = wm.forest.roots[0]
        return cls(0, {0: wm.forest.paths[root]}, {0: None}, {0: root}, [[0]], {0: []})

    def forest(self) -> SolutionForest:
        return SolutionForest(self.paths, self.parents)

    def ancestors(self, q: int, up: int) -> list[int]:
        out = []
        a = self.parents[q]
        while a is not None and len(out) < up:
            out.append(a)
            a = self.parents[a]
        return out

    def add_layer(self, cand: dict[int, list[int]], wm: WeightedMultiset) -> None:
        new = []
        nid = len(self.paths)
        for f in sorted(cand):
            for a in cand[f]:
                self.paths[nid] = self.paths[f] + (wm.forest.end(a),)
                self.parents[nid] = f
                self.qp[nid] = a
                self.children[nid] = []
                self.children[f].append(nid)
                new.append(nid)
                nid += 1
        self.by_layer.append(new)
        self.layer += 1

    def candidate_at(self, i: int) -> dict[int, list[int]]:
        """The accepted draws of step i -> i+1, as P' nodes per frontier path."""
        return {f: [self.qp[c] for c in self.children[f]] for f in self.by_layer[i]
                if self.children[f]}


def _open_frontier(state: RoundingState, wm: WeightedMultiset, i: int) -> list[int]:
    return [f for f in state.by_layer[i] if wm.is_open(state.qp[f])]


def round_layer(state: RoundingState, wm: WeightedMultiset, profile: ParamProfile,
                rng: np.random.Generator, only: list[int] | None = None,
                cand: dict[int, list[int]] | None = None) -> dict[int, list[int]]:
    """Draw ``sample_children`` P' children for every open frontier path.

    With ``only`` and ``cand``, only the listed frontier paths are redrawn.
    """
    i = state.layer
    out = dict(cand) if cand is not None else {}
    targets = only if only is not None else _open_frontier(state, wm, i)
    for f in targets:
        kids = wm.forest.children[state.qp[f]]
        if not kids:
            raise ValueError(f"open frontier path {state.paths[f]} has no P' children")
        picks = rng.integers(0, len(kids), size=profile.sample_children)
        out[f] = [kids[j] for j in picks]
    return out


def _evaluate(state: RoundingState, cand: dict[int, list[int]], tabs: PrimeTables,
              profile: ParamProfile, i: int) -> tuple[list[BadEvent], set[int]]:
    wm = tabs.wm
    h = tabs.li.h
    ell = profile.ell
    sample = profile.sample_children
    T = profile.local_threshold
    events: list[BadEvent] = []
    frontier = [f for f in state.by_layer[i] if f in cand]

    # B1 over vertices in layers i+1..h
    obs: dict[tuple[int, int], float] = defaultdict(float)
    exp: dict[tuple[int, int], float] = defaultdict(float)
    deps: dict[tuple[int, int], set[int]] = defaultdict(set)
    for f in frontier:
        kids = wm.forest.children[state.qp[f]]
        share = sample / len(kids)
        for c in kids:
            for v, (cnt, gp) in tabs.loads(c, i + 1, h).items():
                t = load_class(cnt, gp)
                exp[(v, t)] += share * cnt / gp
                deps[(v, t)].add(f)
        for c in cand[f]:
            for v, (cnt, gp) in tabs.loads(c, i + 1, h).items():
                obs[(v, load_class(cnt, gp))] += cnt / gp
    for key in sorted(obs):
        rhs = 2 * exp[key] + profile.b1_slack
        if obs[key] > rhs + 1e-9:
            events.append(BadEvent((1,) + key, "B1", obs[key], rhs, tuple(sorted(deps[key]))))

    # newly high local congestion below window paths
    below: dict[int, list[int]] = defaultdict(list)
    for f in frontier:
        below[f].append(f)
        for a in state.ancestors(f, ell):
            below[a].append(f)
    lo_w = max(0, i + 1 - ell)
    marked: set[int] = set()
    for d in range(lo_w, i + 1):
        for w in state.by_layer[d]:
            if w not in below:
                continue
            hi = min(d + ell, h)
            before: dict[int, float] = defaultdict(float)
            after: dict[int, float] = defaultdict(float)
            for f in below[w]:
                for v, (cnt, gp) in tabs.loads(state.qp[f], i + 1, hi).items():
                    before[v] += cnt / gp
                for c in cand[f]:
                    for v, (cnt, gp) in tabs.loads(c, i + 1, hi).items():
                        after[v] += cnt / gp
            crossing = Counter()
            for v, val in after.items():
                if val > T and before.get(v, 0.0) <= T:
                    crossing[tabs.vlayer(v) - d] += tabs.ends[state.qp[w]].get(v, 0)
            for lp, n_new in crossing.items():
                if 1 <= lp <= ell and n_new > profile.retain_children ** lp / profile.mark_threshold_denom:
                    marked.add(w)
                    break

    # B2 on paths in layers i-ell-1..i-1, B3 on the source path
    need = sample / profile.mark_frac_denom
    for d in range(max(0, i - ell - 1), i):
        for p in state.by_layer[d]:
            m = sum(1 for c in state.children[p] if c in marked)
            if m and m >= need:
                events.append(BadEvent((2, p), "B2", m, need, tuple(sorted(below.get(p, [])))))
    root = state.by_layer[0][0]
    if root in marked:
        events.append(BadEvent((3,), "B3", 1, 0, tuple(sorted(frontier))))
    events.sort()
    return events, marked


def detect_bad_events(state: RoundingState, cand: dict[int, list[int]], wm: WeightedMultiset,
                      profile: ParamProfile, tables: PrimeTables | None = None,
                      layer: int | None = None) -> list[BadEvent]:
    """All events of the draw ``cand`` from frontier layer ``layer`` (current by default)."""
    tabs = tables or PrimeTables(wm)
    i = state.layer if layer is None else layer
    return _evaluate(state, cand, tabs, profile, i)[0]


def resample_until_clear(state: RoundingState, wm: WeightedMultiset, profile: ParamProfile,
                         rng: np.random.Generator, cap: int | None = None,
                         tables: PrimeTables | None = None, full_redraw: bool = False
                         ) -> tuple[dict[int, list[int]], set[int], dict]:
    """Draw the next layer and redraw the least event's variables until clear."""
    tabs = tables or PrimeTables(wm)
    cap = profile.resample_cap if cap is None else cap
    i = state.layer
    cand = round_layer(state, wm, profile, rng)
    events, marked = _evaluate(state, cand, tabs, profile, i)
    first = len(events)
    kinds = Counter(e.kind for e in events)
    rounds = 0
    while events:
        if rounds >= cap:
            raise ResampleCapExceeded(cap, events[0].describe())
        ev = events[0]
        redo = None if full_redraw else list(ev.depends_on)
        cand = round_layer(state, wm, profile, rng, only=redo, cand=None if full_redraw else cand)
        rounds += 1
        events, marked = _evaluate(state, cand, tabs, profile, i)
        kinds.update(e.kind for e in events)
    info = {"layer": i + 1, "draws": sum(len(v) for v in cand.values()),
            "events_detected": first, "events_seen": dict(sorted(kinds.items())),
            "resamples": rounds}
    return cand, marked, info


def conditional_cong_path(wm: WeightedMultiset, state: RoundingState, p: int | None, v: int,
                          tables: PrimeTables | None = None) -> float:
    """cong_p(v | Q^(i)) for a path p of the partial solution, or cong(v | Q^(i)) for p=None.

    Vertices in settled layers get the integral count of (descendants of p)
    ending there; deeper vertices get the sum over frontier descendants q of
    cong(q, v) / y(q).
    """
    tabs = tables or PrimeTables(wm)
    i = state.layer
    if p is None:
        scope = [q for lay in state.by_layer for q in lay]
        front = state.by_layer[i]
    else:
        scope, stack = [], [p]
        while stack:
            a = stack.pop()
            scope.append(a)
            stack.extend(state.children[a])
        front = [q for q in scope if len(state.paths[q]) - 1 == i]
    lv = tabs.vlayer(v)
    if lv <= i:
        return float(sum(1 for q in scope if state.paths[q][-1] == v))
    total = 0.0
    for q in front:
        cnt, gp = tabs.loads(state.qp[q], lv, lv).get(v, (0, 1))
        total += cnt / gp
    return total


def check_iterlowcong(state: RoundingState, wm: WeightedMultiset, profile: ParamProfile,
                      tables: PrimeTables | None = None) -> list[str]:
    """Recompute cong(v | Q^(i)) per accepted step and compare with the
    growth bound 2 * (sample*g/draws) * cong(v | Q^(i-1)) + classes * b1_slack."""
    tabs = tables or PrimeTables(wm)
    h = tabs.li.h
    factor = profile.sample_children * wm.gbase / wm.draws
    out = []
    prev = {v: conditional_cong_path(wm, _truncated(state, 0), None, v, tabs) for v in range(tabs.li.n)}
    for i in range(state.layer):
        cur_state = _truncated(state, i + 1)
        classes: dict[int, set[int]] = defaultdict(set)
        for f in state.by_layer[i]:
            for c in wm.forest.children[state.qp[f]]:
                for v, (cnt, gp) in tabs.loads(c, i + 1, h).items():
                    classes[v].add(load_class(cnt, gp))
        cur = {}
        for v in range(tabs.li.n):
            cur[v] = conditional_cong_path(wm, cur_state, None, v, tabs)
            if tabs.vlayer(v) <= i:
                continue
            bound = 2 * factor * prev[v] + len(classes[v]) * profile.b1_slack
            if cur[v] > bound + 1e-9:
                out.append(f"step {i}->{i + 1}: cong({v}) = {cur[v]:.4g} > {bound:.4g}")
        prev = cur
    return out


def _truncated(state: RoundingState, i: int) -> RoundingState:
    keep = {q for lay in state.by_layer[:i + 1] for q in lay}
    return RoundingState(
        i, {q: state.paths[q] for q in keep}, {q: state.parents[q] for q in keep},
        {q: state.qp[q] for q in keep}, [list(l) for l in state.by_layer[:i + 1]],
        {q: [c for c in state.children[q] if c in keep] for q in keep})


def congested_paths(sol: SolutionForest, ell: int, threshold: float) -> set[int]:
    """Nodes q at distance 1..ell below some p (or depth <= ell, for the
    virtual root) where more than ``threshold`` descendants of p end at q's
    endpoint."""
    cnt: dict[tuple[int | None, int], int] = defaultdict(int)
    for q, path in sol.paths.items():
        v = path[-1]
        if len(path) - 1 <= ell:
            cnt[(None, v)] += 1
        a = sol.parents[q]
        for _ in range(ell):
            if a is None:
                break
            cnt[(a, v)] += 1
            a = sol.parents[a]
    R = set()
    for q, path in sol.paths.items():
        v = path[-1]
        if len(path) - 1 <= ell and len(path) > 1 and cnt[(None, v)] > threshold:
            R.add(q)
            continue
        a = sol.parents[q]
        for _ in range(ell):
            if a is None:
                break
            if cnt[(a, v)] > threshold:
                R.add(q)
                break
            a = sol.parents[a]
    return R


def delete_marked_and_extract_R(state: RoundingState, wm: WeightedMultiset,
                                profile: ParamProfile) -> tuple[SolutionForest, set[int]]:
    root = state.by_layer[0][0]
    if root in state.marked:
        raise StageFailure("delete-marked", "source path was marked")
    q2 = state.forest().without(state.marked)
    return q2, congested_paths(q2, profile.ell, profile.local_threshold)


def verify_rounded(sol: SolutionForest, li: LayeredInstance, profile: ParamProfile) -> list[str]:
    """Source retained, open degree >= retain/(2 ell), local and global bounds."""
    out = []
    if len(sol.roots) != 1 or sol.paths[sol.roots[0]] != (li.single_source(),):
        return ["source path not retained"]
    need = -(-profile.retain_children // (2 * profile.ell))
    deg = sol.min_open_degree(li.sinks)
    if deg is not None and deg < need:
        out.append(f"open degree {deg} < {need}")
    lc = local_congestion(sol, profile.ell)
    if lc.max_local > profile.L_local:
        out.append(f"local congestion {lc.max_local} > {profile.L_local}")
    if lc.max_global > profile.K_global:
        out.append(f"global congestion {lc.max_global} > {profile.K_global}")
    return out


def round_single_source(li: LayeredInstance, k: int, profile: ParamProfile, rng: np.random.Generator,
                        *, x: FractionalPathSolution | None = None, max_retries: int = 3,
                        cap: int | None = None, report: dict | None = None,
                        trace_path: str | None = None) -> SolutionForest:
    """LP -> sparsify -> per-layer LLL rounding -> delete marked -> prune R."""
    if len(li.sources) != 1:
        raise StageFailure("input", "single-source instance required")
    if x is None:
        try:
            k_star, x = max_feasible_k(li)
        except Exception as e:  # noqa: BLE001 - stage attribution
            raise StageFailure("lp", e) from e
        if k_star < k:
            raise StageFailure("lp", f"path LP infeasible at k={k} (max {k_star})")
    try:
        wm = sparsify(x, k, profile, rng, max_retries=max_retries)
    except Exception as e:  # noqa: BLE001
        raise StageFailure("sparsify", e) from e
    tabs = PrimeTables(wm)
    state = RoundingState.initial(wm)
    try:
        while state.layer < li.h and _open_frontier(state, wm, state.layer):
            cand, marked, info = resample_until_clear(state, wm, profile, rng, cap, tabs)
            state.marked |= marked
            state.add_layer(cand, wm)
            info["accepted_congestion_max"] = global_congestion(state.forest()).max_global
            state.trace.append(info)
    except ResampleCapExceeded as e:
        raise StageFailure(f"round-layer-{state.layer + 1}", e) from e
    q2, R = delete_marked_and_extract_R(state, wm, profile)
    try:
        out = bottom_to_top_prune(q2, R, profile.ell, profile.retain_children) if R else q2
    except Exception as e:  # noqa: BLE001
        raise StageFailure("bottom-to-top", e) from e
    problems = verify_rounded(out, li, profile)
    if problems:
        raise StageFailure("verify", "; ".join(problems[:3]))
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            for rec in state.trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if report is not None:
        lc = local_congestion(out, profile.ell)
        report.update({"state": state, "multiset": wm, "tables": tabs, "marked": len(state.marked),
                       "R": len(R), "sparsify_attempts": wm.attempts, "trace": state.trace,
                       "max_global": lc.max_global, "max_local": lc.max_local})
    return out
