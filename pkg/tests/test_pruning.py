from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import btt_fixture, congested_solution
from conftest import kary_forest
from maxmin_arbor.core import global_congestion, is_valid_solution, solution_degree
from maxmin_arbor.params import make_profile
from maxmin_arbor.pruning import (PremiseViolated, ResampleCapExceeded, adversarial_deletion_experiment,
                                  bottom_to_top_prune, check_btt_premise, group_congestion, group_of_depth,
                                  local_to_global, partition_groups, sample_down_group)


def deletion_oracle(k, h, alpha, beta):
    """Explicit-tuple version: kill the lexicographically first leaves whose
    every digit is below m, then prune level by level."""
    budget = int(round(beta * k ** h))
    m = k - math.ceil(k / alpha) + 1
    dead = set(itertools.islice(itertools.product(range(m), repeat=h), budget))
    out = [0.0] * (h + 1)
    out[h] = len(dead) / k ** h
    for d in range(h - 1, -1, -1):
        c = Counter(t[:-1] for t in dead)
        dead = {p for p, n in c.items() if (k - n) * alpha < k}
        out[d] = len(dead) / k ** d
    return out


# frozen from deletion_oracle(16, 6, 3, 0.05)
FROZEN_16_6 = [0.0, 0.3125, 0.2227, 0.1538, 0.1058, 0.0727, 0.05]


def test_adversarial_deletion_frozen():
    got = adversarial_deletion_experiment(16, 6, 3, 0.05, seeds=(0, 1))["removed_fraction"]
    assert got == pytest.approx(FROZEN_16_6, abs=5e-5)


@pytest.mark.parametrize("k,h,alpha,beta", [(8, 4, 2, 0.1), (6, 3, 3, 0.2), (4, 5, 2, 0.05), (5, 3, 1.5, 0.06)])
def test_adversarial_deletion_matches_oracle(k, h, alpha, beta):
    got = adversarial_deletion_experiment(k, h, alpha, beta, seeds=(4,))["removed_fraction"]
    assert got == pytest.approx(deletion_oracle(k, h, alpha, beta), abs=1e-12)


def test_adversarial_amplifies_over_random():
    adv = adversarial_deletion_experiment(16, 6, 3, 0.05, seeds=range(2))
    rnd = adversarial_deletion_experiment(16, 6, 3, 0.05, seeds=range(2), mode="random")
    assert adv["removed_fraction"][1] > 0.3 > rnd["removed_fraction"][1]
    # loss grows towards the root, never beyond the estimate
    f = adv["removed_fraction"]
    assert all(f[d] >= f[d + 1] for d in range(1, 6))
    assert adv["predicted"][6] == pytest.approx(0.05)


def test_btt_premise_detects_overload():
    inst, sol = kary_forest(16, 2)
    gk = [q for q in sol if sol.depth(q) == 2]
    assert check_btt_premise(sol, gk[:1], 2, 16).ok
    assert not check_btt_premise(sol, gk[:2], 2, 16).ok
    with pytest.raises(PremiseViolated):
        bottom_to_top_prune(sol, gk[:2], 2, 16)


def test_btt_minimal_R_ignores_descendants_of_R():
    inst, sol = kary_forest(16, 3)
    child = sol.children[sol.roots[0]][0]
    below = sol.descendants(child)
    # R-descendants of an R member are redundant and do not count against the premise
    assert check_btt_premise(sol, [child] + below, 2, 16).ok
    out = bottom_to_top_prune(sol, [child] + below, 2, 16)
    assert child not in out and not (set(below) & set(out.paths))


@pytest.mark.parametrize("seed", range(5))
def test_btt_boundary_fixture(seed):
    rng = np.random.default_rng(seed)
    inst, sol, R = btt_fixture(16, 3, 2, rng)
    prem = check_btt_premise(sol, R, 2, 16)
    assert prem.ok and prem.worst_count == 1
    trace = []
    out = bottom_to_top_prune(sol, R, 2, 16, trace=trace)
    assert {out.source_of(r) for r in out.roots} == {s for s, ok in prem.per_source.items() if ok}
    assert is_valid_solution(inst, out, math.ceil(16 / 4), 1).ok
    assert trace and all(r["removed"] <= r["bound"] for r in trace)
    assert not (set(out.paths) & R)


@given(st.integers(0, 2 ** 32), st.floats(0.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_btt_property(seed, density):
    inst, sol, R = btt_fixture(16, 2, 1, np.random.default_rng(seed), density)
    out = bottom_to_top_prune(sol, R, 2, 16)
    assert set(out.paths) <= set(sol.paths)
    assert is_valid_solution(inst, out, 4, 1).ok


def test_groups_partition_depths():
    inst, sol = kary_forest(3, 5)
    part = partition_groups(sol, 2)
    assert set().union(*part.groups.values()) == {q for q in sol if sol.depth(q) > 0}
    for j, g in part.groups.items():
        assert all(group_of_depth(sol.depth(q), 2) == j for q in g)
        assert part.k_of_group[j] == 3
    assert part.k_product(0, 2) == 9


def test_group_congestion_counts_same_group_only():
    inst, sol = congested_solution(2, 2, 2, np.random.default_rng(0))
    cg = group_congestion(sol, 2)
    # depth 1 and 2 are different groups, so each counts only its own layer
    assert max(cg.values()) <= 2
    assert all(v >= 1 for v in cg.values())


@pytest.mark.parametrize("seed", range(3))
def test_sample_down_group_halves_pairs(seed):
    inst, sol = congested_solution(8, 4, 3, np.random.default_rng(seed))
    prof = make_profile("desk-small", inst.n, 8)
    part = partition_groups(sol, 2)
    stats = []
    out = sample_down_group(sol, part, 1, prof, np.random.default_rng(seed), stats)
    rep = stats[0]
    assert rep.removed == rep.pairs == len(part.groups[1]) // 2
    assert rep.ratio_violations == 0
    assert all(len(out.children[q]) == 4 for q in out.roots)


def test_sample_down_group_forced_events_resample():
    # with no additive slack the limits are 3/4 of the pre-sampling class totals
    inst, sol = congested_solution(8, 4, 3, np.random.default_rng(1))
    prof = make_profile("desk-small", inst.n, 8, {"c_const": 0.0, "L_local": 1})
    stats = []
    for s in range(10):
        sample_down_group(sol, partition_groups(sol, 2), 2, prof, np.random.default_rng(s), stats)
    assert sum(r.events_first_draw for r in stats) > 0
    assert sum(r.resamples for r in stats) > 0
    assert all(r.ratio_violations == 0 for r in stats)
    with pytest.raises(ResampleCapExceeded):
        bad = make_profile("desk-small", inst.n, 8, {"c_const": 0.0, "L_local": 1, "resample_cap": 1})
        for s in range(50):
            sample_down_group(sol, partition_groups(sol, 2), 2, bad, np.random.default_rng(s))


@pytest.mark.parametrize("k,K", [(8, 4), (6, 2)])
def test_local_to_global_on_congested(k, K):
    inst, sol = congested_solution(k, K, 4, np.random.default_rng(k))
    prof = make_profile("desk-small", inst.n, k)
    stats = {}
    out = local_to_global(sol, k, prof, np.random.default_rng(0), stats)
    assert global_congestion(out).max_global <= stats["threshold"]
    assert solution_degree(inst, out) >= k / (8 * prof.ell)
    assert all(r.ratio_violations == 0 for r in stats["samples"])
    assert set(out.paths) <= set(sol.paths)


def test_local_to_global_on_rounder(planted_lp_k8):
    from maxmin_arbor.lll_rounder import round_single_source
    li, k, x = planted_lp_k8
    prof = make_profile("desk-small", li.n, k)
    for seed in range(3):
        r = round_single_source(li, k, prof, np.random.default_rng(seed), x=x)
        stats = {}
        out = local_to_global(r, prof.retain_children, prof, np.random.default_rng(seed), stats)
        assert solution_degree(li.base, out) >= prof.retain_children / (8 * prof.ell)
        assert global_congestion(out).max_global <= 16 * stats["A"] * prof.ell ** 3
