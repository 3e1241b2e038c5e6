from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from maxmin_arbor import sparsifier
from maxmin_arbor.generators import gen_random_layered
from maxmin_arbor.params import make_profile
from maxmin_arbor.path_lp import max_feasible_k
from maxmin_arbor.sparsifier import (RetriesExhausted, _LpCong, check_sparse_constraints, conditional_congestion,
                                     sparsify, supermartingale_steps)


@pytest.mark.parametrize("g", [2, 4])
def test_constraints_hold_on_accepted_output(planted_lp, g):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k, {"granularity_base": g})
    for s in range(10):
        wm = sparsify(x, k, prof, np.random.default_rng(s))
        assert check_sparse_constraints(wm) == []
        assert wm.draws == k * g // 4
        for q in wm.forest:
            assert len(wm.forest.children[q]) == (wm.draws if wm.is_open(q) else 0)
            assert wm.weight(q) == g ** -wm.layer(q)
            assert li.layer(wm.forest.end(q)) == wm.layer(q)


def test_children_follow_lp_proportions(planted_lp):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k, {"granularity_base": 4})
    pi = x.index
    kids, w = x.children_of(pi.root)
    w = np.asarray(w, float)
    counts = Counter()
    for s in range(300):
        wm = sparsify(x, k, prof, np.random.default_rng(s))
        counts.update(wm.pnode[c] for c in wm.forest.children[wm.forest.roots[0]])
    obs = np.array([counts[c] for c in kids], float)
    exp = w / w.sum() * obs.sum()
    keep = exp > 0
    assert obs[~keep].sum() == 0
    assert stats.chisquare(obs[keep], exp[keep]).pvalue > 1e-4


def test_deterministic(planted_lp):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k)
    a = sparsify(x, k, prof, np.random.default_rng(5))
    b = sparsify(x, k, prof, np.random.default_rng(5))
    assert a.forest.paths == b.forest.paths


def test_retries_then_success(planted_lp, monkeypatch):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k)
    real = sparsifier.check_sparse_constraints
    calls = {"n": 0}

    def flaky(wm, limit=50):
        calls["n"] += 1
        return ["capacity violated (forced)"] if calls["n"] <= 2 else real(wm, limit)

    monkeypatch.setattr(sparsifier, "check_sparse_constraints", flaky)
    wm = sparsify(x, k, prof, np.random.default_rng(0))
    assert wm.attempts == 3


def test_retries_exhausted(planted_lp, monkeypatch):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k)
    monkeypatch.setattr(sparsifier, "check_sparse_constraints", lambda wm, limit=50: ["forced"])
    with pytest.raises(RetriesExhausted) as e:
        sparsify(x, k, prof, np.random.default_rng(0), max_retries=3)
    assert e.value.attempts == 4


def test_capacity_checker_flags_overload(planted_lp_k8):
    li, k, x = planted_lp_k8
    prof = make_profile("desk-small", li.n, k, {"granularity_base": 4})
    wm = sparsify(x, k, prof, np.random.default_rng(0))
    assert check_sparse_constraints(wm) == []
    # send every layer-2 copy to one vertex: 64 copies against a bound of 2 * 4^2
    f = wm.forest
    paths = dict(f.paths)
    v = f.end(next(q for q in f if f.depth(q) == 2))
    for q in f:
        if f.depth(q) == 2:
            paths[q] = paths[q][:2] + (v,)
    bad = sparsifier.WeightedMultiset(type(f)(paths, f.parents), wm.gbase, wm.k, wm.draws, x, wm.pnode)
    assert any("capacity" in m for m in check_sparse_constraints(bad))


def test_root_conditional_congestion_is_lp_congestion(planted_lp):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k)
    wm = sparsify(x, k, prof, np.random.default_rng(1))
    lc = _LpCong(x)
    root = wm.forest.roots[0]
    part = wm.prefix(0)
    for v in li.layers[2]:
        assert conditional_congestion(wm, part, root, v, lc) == pytest.approx(lc(x.index.root, v))
        # LP capacity: at most one unit of flow through any vertex
        assert lc(x.index.root, v) <= 1 + 1e-9


@pytest.mark.parametrize("g", [2, 4])
def test_supermartingale_steps(planted_lp, g):
    li, k, x = planted_lp
    prof = make_profile("desk-small", li.n, k, {"granularity_base": g})
    for s in range(3):
        rows = supermartingale_steps(sparsify(x, k, prof, np.random.default_rng(s)))
        assert rows and all(r["ok"] for r in rows)


@given(st.integers(0, 2 ** 32), st.sampled_from([2, 4]))
@settings(max_examples=25, deadline=None)
def test_sparsify_property(seed, g):
    li = gen_random_layered(3, [1, 4, 4, 4], 0.7, np.random.default_rng(seed))
    k, x = max_feasible_k(li)
    if k < 2:
        return
    prof = make_profile("desk-small", li.n, k, {"granularity_base": g})
    wm = sparsify(x, k, prof, np.random.default_rng(seed))
    assert check_sparse_constraints(wm) == []
