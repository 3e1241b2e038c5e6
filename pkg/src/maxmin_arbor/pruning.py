"""Bottom-to-top pruning and the local-to-global congestion reduction.

Depth is counted in edges: a source root sits at depth 0, and group G_j
(1 <= j <= ell) holds the non-root nodes whose depth is congruent to j
modulo ell.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import SolutionForest, global_congestion
from .params import ParamProfile

log = logging.getLogger(__name__)


class PremiseViolated(ValueError):
    pass


class ResampleCapExceeded(RuntimeError):
    def __init__(self, cap: int, event):
        super().__init__(f"resampling did not clear after {cap} rounds; stuck on {event}")
        self.cap = cap
        self.event = event


# ---------------------------------------------------------------- bottom-to-top


@dataclass
class BttPremise:
    ok: bool
    bound: float
    worst_node: int | None
    worst_count: int
    per_source: dict[int, bool]


def _minimal_R(sol: SolutionForest, R) -> set[int]:
    """Drop members of R that already have an ancestor in R."""
    R = set(R) & set(sol.paths)
    out = set()
    for r in R:
        a = sol.parents[r]
        while a is not None and a not in R:
            a = sol.parents[a]
        if a is None:
            out.add(r)
    return out


def _r_counts_by_distance(sol: SolutionForest, R: set[int], ell: int) -> dict[int, list[int]]:
    """node -> [#R members at distance 1..ell below it]."""
    cnt: dict[int, list[int]] = defaultdict(lambda: [0] * (ell + 1))
    for r in R:
        a = sol.parents[r]
        for dist in range(1, ell + 1):
            if a is None:
                break
            cnt[a][dist] += 1
            a = sol.parents[a]
    return cnt


def per_node_premise(counts: list[int] | None, ell: int, k: int) -> bool:
    """At most k^l'/(8 ell) members of R at every distance l' <= ell."""
    if counts is None:
        return True
    return all(counts[lp] * 8 * ell <= k ** lp for lp in range(1, ell + 1))


def check_btt_premise(sol: SolutionForest, R, ell: int, k: int) -> BttPremise:
    if ell < 2:
        raise ValueError("ell must be at least 2")
    R = _minimal_R(sol, R)
    bound = k ** ell / (8 * ell) ** 2
    cnt = _r_counts_by_distance(sol, R, ell)
    worst, worst_c = None, 0
    for p in sorted(cnt):
        c = cnt[p][ell]
        if p not in R and c > worst_c:
            worst, worst_c = p, c
    per_source = {}
    for r in sol.roots:
        per_source[sol.paths[r][0]] = r not in R and per_node_premise(cnt.get(r), ell, k)
    ok = worst_c <= bound
    return BttPremise(ok, bound, worst if not ok else None, worst_c, per_source)


def _btt_sweep(sol: SolutionForest, R: set[int], keep_num: int, keep_den: int) -> set[int]:
    """Longest-first sweep; a node with children dies when fewer than
    keep_num/keep_den of ... remain. Returns the swept-out set (no cascade)."""
    removed: set[int] = set()
    ch = sol.children
    for level in reversed(sol.by_depth()):
        for i in level:
            if i in R:
                removed.add(i)
            elif ch[i]:
                left = sum(1 for c in ch[i] if c not in removed)
                if left * keep_den < keep_num:
                    removed.add(i)
    return removed


def bottom_to_top_prune(sol: SolutionForest, R, ell: int, k: int, *, check: bool = True,
                        trace: list | None = None) -> SolutionForest:
    """Remove R, then every node left with fewer than k/(2 ell) children.

    With ``trace`` the removal counts of :func:`btt_removal_trace` are appended.
    """
    if check:
        prem = check_btt_premise(sol, R, ell, k)
        if not prem.ok:
            raise PremiseViolated(
                f"node {prem.worst_node} has {prem.worst_count} R-descendants at distance {ell} "
                f"(bound {prem.bound:.3g})")
    Rm = _minimal_R(sol, R)
    removed = _btt_sweep(sol, Rm, k, 2 * ell)
    if trace is not None:
        trace.extend(btt_removal_trace(sol, Rm, removed, ell, k))
    return sol.without(removed)


def btt_removal_trace(sol: SolutionForest, R: set[int], removed: set[int], ell: int, k: int) -> list[dict]:
    """Per-node removal counts for nodes at depth divisible by ell that are
    outside R and satisfy the per-node premise, with the inductive bound."""
    cnt = _r_counts_by_distance(sol, R, ell)
    rem_cnt = _r_counts_by_distance(sol, removed, ell)
    rows = []
    for p, path in sol.paths.items():
        if (len(path) - 1) % ell or p in R or not per_node_premise(cnt.get(p), ell, k):
            continue
        got = rem_cnt.get(p, [0] * (ell + 1))
        for lp in range(1, ell + 1):
            bound = (1 + 2 / ell) ** (ell - lp + 1) * k ** lp / 8
            rows.append({"node": p, "distance": lp, "removed": got[lp], "bound": bound})
    return rows


# ------------------------------------------------------------- adversarial demo


def adversarial_deletion_experiment(k: int, h: int, alpha: float, beta: float, seeds=(0,),
                                    mode: str = "adversarial") -> dict:
    """Delete a beta fraction of the sinks of a complete k-ary tree and prune.

    A node survives while it keeps at least k/alpha children. The adversary
    spends its budget killing the first ``m`` children of every targeted
    node, where m = k - ceil(k/alpha) + 1 is the cheapest kill, in
    lexicographic order. ``mode="random"`` deletes uniformly instead.
    Returns per-depth removed fractions averaged over seeds, next to the
    amplification estimate min(1, beta / (1 - 1/alpha)^(h - depth)).
    """
    leaves = k ** h
    budget = int(round(beta * leaves))
    m = k - math.ceil(k / alpha) + 1
    per_depth = np.zeros(h + 1)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        dead = np.zeros(leaves, dtype=bool)
        if mode == "adversarial":
            # the tree is symmetric, so the seed only relabels children per level
            perms = [rng.permutation(k) for _ in range(h)]
            take = min(budget, m ** h)
            t = np.arange(take, dtype=np.int64)
            idx = np.zeros(take, dtype=np.int64)
            for lvl in range(h):
                digit = (t // m ** (h - 1 - lvl)) % m
                idx = idx * k + perms[lvl][digit]
            dead[idx] = True
            extra = budget - take
            if extra > 0:
                free = np.nonzero(~dead)[0]
                dead[rng.choice(free, size=extra, replace=False)] = True
        elif mode == "random":
            dead[rng.choice(leaves, size=budget, replace=False)] = True
        else:
            raise ValueError(mode)
        per_depth[h] += dead.mean()
        level = dead
        for depth in range(h - 1, -1, -1):
            kids_dead = level.reshape(-1, k).sum(axis=1)
            level = (k - kids_dead) * alpha < k
            per_depth[depth] += level.mean()
    per_depth /= len(seeds)
    predicted = [min(1.0, beta / (1 - 1 / alpha) ** (h - d)) for d in range(h + 1)]
    return {
        "k": k, "h": h, "alpha": alpha, "beta": beta, "mode": mode,
        "removed_fraction": per_depth.tolist(),
        "predicted": predicted,
        "root_loss": float(per_depth[1]) if h >= 1 else 0.0,
        "root_removed": bool(per_depth[0] > 0.5),
    }


# ------------------------------------------------------------------- groups


def group_of_depth(depth: int, ell: int) -> int:
    return (depth - 1) % ell + 1


@dataclass
class GroupPartition:
    ell: int
    groups: dict[int, set[int]]
    k_of_group: dict[int, int]
    k_root: int

    def k_product(self, depth: int, dist: int) -> int:
        """Number of distance-``dist`` descendants below a node at ``depth``
        when every level carries its group's child count."""
        out = 1
        for d in range(depth, depth + dist):
            out *= self.k_root if d == 0 else self.k_of_group[group_of_depth(d, self.ell)]
        return out


def partition_groups(sol: SolutionForest, ell: int) -> GroupPartition:
    if ell < 1:
        raise ValueError("ell must be positive")
    groups: dict[int, set[int]] = {j: set() for j in range(1, ell + 1)}
    kmin: dict[int, int] = {}
    k_root = None
    for i, p in sol.paths.items():
        d = len(p) - 1
        nch = len(sol.children[i])
        if d == 0:
            if nch:
                k_root = nch if k_root is None else min(k_root, nch)
            continue
        j = group_of_depth(d, ell)
        groups[j].add(i)
        if nch:
            kmin[j] = nch if j not in kmin else min(kmin[j], nch)
    return GroupPartition(ell, groups, {j: kmin.get(j, 0) for j in groups}, k_root or 0)


def group_congestion(sol: SolutionForest, ell: int) -> dict[int, int]:
    """cong_G(p): same-group paths ending at p's endpoint, for non-root p."""
    cnt: Counter = Counter()
    for p in sol.paths.values():
        if len(p) > 1:
            cnt[(group_of_depth(len(p) - 1, ell), p[-1])] += 1
    return {i: cnt[(group_of_depth(len(p) - 1, ell), p[-1])]
            for i, p in sol.paths.items() if len(p) > 1}


def _ratio_table(sol: SolutionForest, part: GroupPartition) -> dict[tuple[int, int], float]:
    """(p, l') -> cong_G(D(p, l')) / k(p, l') for every node and l' <= ell."""
    cg = group_congestion(sol, part.ell)
    out = {}
    for p in sol.paths:
        d = sol.depth(p)
        frontier = [p]
        for lp in range(1, part.ell + 1):
            frontier = [c for f in frontier for c in sol.children[f]]
            if not frontier:
                break
            kp = part.k_product(d, lp)
            if kp > 0:
                out[(p, lp)] = sum(cg[q] for q in frontier) / kp
    return out


@dataclass
class SampleReport:
    group: int
    pairs: int
    removed: int
    resamples: int
    events_first_draw: int
    ratio_checks: int
    ratio_violations: int
    worst_ratio_margin: float


@dataclass(order=True, frozen=True)
class GroupEvent:
    p: int
    dist: int
    t: int
    kept_sum: float = field(compare=False)
    limit: float = field(compare=False)
    depends_on: tuple[int, ...] = field(compare=False)


def sample_down_group(sol: SolutionForest, part: GroupPartition, j: int, profile: ParamProfile,
                      rng: np.random.Generator, stats: list | None = None,
                      cap: int | None = None, K: float | None = None) -> SolutionForest:
    """Remove one child of every same-parent pair inside G_j, resampling pairs
    until no group-congestion event B(p, l', t) holds.

    ``K`` is the global congestion bound of the input (profile value by
    default); the events assume 2^ell >= K.
    """
    ell = part.ell
    c, L = profile.c_const, profile.L_local
    K = profile.K_global if K is None else K
    cap = profile.resample_cap if cap is None else cap
    members = sorted(i for i in part.groups[j] if i in sol.paths)

    by_parent: dict[int, list[int]] = defaultdict(list)
    for i in members:
        by_parent[sol.parents[i]].append(i)
    pairs: list[tuple[int, int]] = []
    pair_of: dict[int, int] = {}
    for par in sorted(by_parent):
        kids = sorted(by_parent[par], key=lambda q: (sol.end(q), q))
        if len(kids) % 2:
            kids = kids[1:]  # lowest vertex id stays unpaired and is kept
        for a in range(0, len(kids), 2):
            pair_of[kids[a]] = pair_of[kids[a + 1]] = len(pairs)
            pairs.append((kids[a], kids[a + 1]))

    # endpoint multisets of D(q, l') for every member
    ends: dict[int, list[Counter]] = {}
    for q in members:
        row, frontier = [Counter()], [q]
        for lp in range(1, ell):
            frontier = [x for f in frontier for x in sol.children[f]]
            row.append(Counter(sol.end(x) for x in frontier))
        ends[q] = row

    # classes[(p, l', t)] = [(q, term)]
    classes: dict[tuple[int, int, int], list[tuple[int, int]]] = defaultdict(list)
    for lp in range(1, ell):
        inv: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for q in members:
            for v, cq in ends[q][lp].items():
                inv[v].append((q, cq))
        for p in members:
            terms: Counter = Counter()
            for v, cp in ends[p][lp].items():
                for q, cq in inv[v]:
                    terms[q] += cp * cq
            if not terms:
                continue
            scale = L * part.k_product(sol.depth(p), lp)
            for q, term in terms.items():
                t = max(0, math.floor(math.log2(scale / term))) if scale > 0 else 0
                classes[(p, lp, t)].append((q, term))

    def limits(p, lp, t, entries):
        base = 24 * c * ell ** 3 * L * part.k_product(sol.depth(p), lp)
        if t > 2 * ell:
            base /= K
        return base + 0.5 * (1 + 1 / ell) * sum(term for _, term in entries)

    limit_of = {key: limits(*key, entries) for key, entries in classes.items()}

    def detect(drop: np.ndarray) -> list[GroupEvent]:
        gone = set()
        for idx, (a, b) in enumerate(pairs):
            gone.add(b if drop[idx] else a)
        out = []
        for key in sorted(classes):
            p = key[0]
            if p in gone:
                continue
            kept = sum(term for q, term in classes[key] if q not in gone)
            if kept > limit_of[key]:
                deps = {pair_of[q] for q, _ in classes[key] if q in pair_of}
                if p in pair_of:
                    deps.add(pair_of[p])
                out.append(GroupEvent(*key, kept, limit_of[key], tuple(sorted(deps))))
        return out

    drop = rng.integers(0, 2, size=len(pairs)).astype(bool)
    events = detect(drop)
    first = len(events)
    rounds = 0
    while events:
        if rounds >= cap:
            raise ResampleCapExceeded(cap, events[0])
        ev = events[0]
        deps = list(ev.depends_on)
        drop[deps] = rng.integers(0, 2, size=len(deps)).astype(bool)
        rounds += 1
        events = detect(drop)

    removed = [b if drop[i] else a for i, (a, b) in enumerate(pairs)]
    out = sol.without(removed)
    if stats is not None:
        before = _ratio_table(sol, part)
        new_part = partition_groups(out, ell)
        after = _ratio_table(out, new_part)
        checks = viol = 0
        worst = math.inf
        for (p, lp), r_after in after.items():
            r_before = before.get((p, lp), 0.0)
            in_group = p in part.groups[j]
            if in_group and lp < ell:
                lim = c * ell ** 4 * L + 0.5 * (1 + 1 / ell) * r_before
            else:
                lim = c * ell ** 4 * L + (1 + 1 / ell) * r_before
            checks += 1
            worst = min(worst, lim - r_after)
            if r_after > lim + 1e-9:
                viol += 1
        stats.append(SampleReport(j, len(pairs), len(removed), rounds, first, checks, viol,
                                  worst if checks else 0.0))
    return out


def local_to_global_constants(profile: ParamProfile) -> tuple[float, float]:
    """Returns (A, threshold 16 A ell^2)."""
    ell, c, L, K = profile.ell, profile.c_const, profile.L_local, profile.K_global
    A = 3 * c * ell ** 4 * L + (1 + 1 / math.e) ** 2 * K / 2 ** ell
    return A, 16 * A * ell ** 2


def local_to_global(sol: SolutionForest, k: int, profile: ParamProfile, rng: np.random.Generator,
                    stats: dict | None = None) -> SolutionForest:
    """Halve every group twice, then prune paths of high group congestion.

    The events use the measured global congestion of ``sol`` as K, which
    never exceeds the profile bound when the precondition holds.
    """
    ell = profile.ell
    K_in = max(1, global_congestion(sol).max_global)
    samples: list[SampleReport] = []
    cur = sol
    for _ in range(2):
        for j in range(ell, 0, -1):
            part = partition_groups(cur, ell)
            cur = sample_down_group(cur, part, j, profile, rng, stats=samples, K=K_in)
    A, thresh = local_to_global_constants(profile)
    cg = group_congestion(cur, ell)
    R = {p for p, v in cg.items() if v > thresh}
    k_now = min((len(ch) for ch in cur.children.values() if ch), default=0)
    out = bottom_to_top_prune(cur, R, ell, k_now) if R else cur
    if stats is not None:
        stats.update({"A": A, "threshold": thresh, "K_input": K_in, "R": len(R), "k_after_sampling": k_now,
                      "samples": samples})
    return out
