from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxmin_arbor.core import Instance, SolutionForest, global_congestion, is_valid_solution
from maxmin_arbor.reductions import (InfeasibleReduction, from_layered, layer_count, prune_to_bounded_depth,
                                     remove_congestion, to_layered)

from builders import congested_solution, random_degree_k_tree
from conftest import kary_forest


@given(st.integers(2, 6), st.sampled_from([1, 2, 3]), st.integers(1, 2), st.integers(0, 2 ** 32))
@settings(max_examples=40, deadline=None)
def test_remove_congestion_property(k, K, h, seed):
    inst, sol = congested_solution(k, K, h, np.random.default_rng(seed))
    assert global_congestion(sol).max_global <= K
    out = remove_congestion(sol, k, K, inst.sinks)
    assert is_valid_solution(inst, out, k // K, 1).ok


def test_remove_congestion_identity_on_free_solution():
    inst, sol = kary_forest(3, 2)
    out = remove_congestion(sol, 3, 1, inst.sinks)
    assert out.path_multiset() == sol.path_multiset()


def test_remove_congestion_detects_bad_input():
    # two copies of vertex 1 each using only sink 2: congestion 2 at the sink
    inst = Instance(4, [(0, 1), (1, 2), (1, 3)], [0], [2, 3])
    sol = SolutionForest.from_records([((0,), None), ((0, 1), 0), ((0, 1, 2), 1), ((0, 1, 2), 1)])
    with pytest.raises(InfeasibleReduction):
        remove_congestion(sol, 4, 2, inst.sinks)


@given(st.sampled_from([2, 4, 6]), st.integers(0, 2 ** 32))
@settings(max_examples=40, deadline=None)
def test_bounded_depth_property(k, seed):
    inst, sol = random_degree_k_tree(k, np.random.default_rng(seed))
    out = prune_to_bounded_depth(sol, k)
    assert set(out.paths) <= set(sol.paths)
    assert is_valid_solution(inst, out, k // 2).ok
    assert all(len(out.children[i]) in (0, k // 2) for i in out)
    assert out.max_depth <= math.log2(inst.n)


def test_bounded_depth_trace_halves():
    inst, sol = random_degree_k_tree(4, np.random.default_rng(3))
    trace = []
    prune_to_bounded_depth(sol, 4, trace)
    for a, b in zip(trace, trace[1:]):
        assert b <= a / 2


def test_bounded_depth_rejects_odd_k():
    _, sol = kary_forest(3, 1)
    with pytest.raises(ValueError):
        prune_to_bounded_depth(sol, 3)


def test_to_layered_roundtrip():
    # a 4-cycle with a source and a sink
    inst = Instance(5, [(0, 1), (1, 2), (2, 3), (3, 1), (2, 4)], [0], [4])
    li, cmap = to_layered(inst)
    assert li.h == layer_count(inst.n) == 3
    assert len(li.layers[0]) == 1 and all(len(l) == inst.n for l in li.layers[1:])
    # the path 0 -> 1 -> 2 -> 4 is a layered path
    ids = {v: k for k, v in cmap.items()}
    p = (ids[(0, 0)], ids[(1, 1)], ids[(2, 2)], ids[(4, 3)])
    for a, b in zip(p, p[1:]):
        assert li.base.has_edge(a, b)
    sol = SolutionForest.from_records([(p[:i + 1], None if i == 0 else i - 1) for i in range(4)])
    assert from_layered(sol, cmap).paths[3] == (0, 1, 2, 4)
