from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import linprog

from maxmin_arbor.core import Instance, LayeredInstance
from maxmin_arbor.generators import HardInstanceLP, gen_hard_instance, gen_planted, gen_random_layered
from maxmin_arbor.oracle import brute_force_opt
from maxmin_arbor.path_lp import (build_path_lp, enumerate_paths, indicator_vector, max_feasible_k,
                                  solve_lp_feasibility)
from maxmin_arbor.simplex import phase1


def _scipy_feasible(a_eq, b_eq, a_ub, b_ub) -> bool:
    n = a_eq.shape[1]
    res = linprog(np.zeros(n), A_ub=a_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=a_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                  bounds=[(0, None)] * n, method="highs")
    return res.status == 0


@given(st.integers(1, 5), st.integers(0, 4), st.integers(0, 4), st.integers(0, 2 ** 32),
       st.sampled_from(["dantzig", "bland"]))
@settings(max_examples=80, deadline=None)
def test_phase1_agrees_with_highs(n, m_eq, m_ub, seed, pricing):
    assume(m_eq + m_ub > 0)
    rng = np.random.default_rng(seed)
    a_eq = rng.integers(-3, 4, (m_eq, n)).astype(float)
    b_eq = rng.integers(-3, 4, m_eq).astype(float)
    a_ub = rng.integers(-3, 4, (m_ub, n)).astype(float)
    b_ub = rng.integers(-3, 4, m_ub).astype(float)
    res = phase1(a_eq, b_eq, a_ub, b_ub, pricing=pricing)
    assert res.feasible == _scipy_feasible(a_eq, b_eq, a_ub, b_ub)
    if res.feasible:
        assert np.all(res.x >= -1e-9)
        assert np.allclose(a_eq @ res.x, b_eq, atol=1e-7)
        assert np.all(a_ub @ res.x <= b_ub + 1e-7)
    else:
        assert res.certificate


def test_phase1_trivial_cases():
    assert phase1(np.array([[1.0, 1.0]]), np.array([1.0]), np.zeros((0, 2)), np.zeros(0)).feasible
    assert not phase1(np.array([[1.0]]), np.array([-1.0]), np.zeros((0, 1)), np.zeros(0)).feasible


def _star(m: int) -> LayeredInstance:
    inst = Instance(m + 1, [(0, i) for i in range(1, m + 1)], [0], range(1, m + 1))
    return LayeredInstance(inst, [[0], list(range(1, m + 1))])


def test_star_lp_threshold():
    li = _star(5)
    k, x = max_feasible_k(li)
    assert k == 5
    pi = enumerate_paths(li)
    assert not solve_lp_feasibility(build_path_lp(pi, 6), pi, 6).feasible
    assert x.value(pi.root) == pytest.approx(1.0)


def test_backends_agree_on_planted():
    li, _ = gen_planted(3, 2, 1, 0.2, np.random.default_rng(5))
    pi = enumerate_paths(li)
    assert len(pi) <= 200
    verdicts = []
    for k in (3, 4):
        lp = build_path_lp(pi, k)
        a = solve_lp_feasibility(lp, pi, k, backend="simplex").feasible
        b = solve_lp_feasibility(lp, pi, k, backend="highs").feasible
        assert a == b
        verdicts.append(a)
    assert verdicts[0]


def test_witness_is_lp_feasible_on_random_instances():
    for seed in range(15):
        li = gen_random_layered(2, [1, 3, 4], 0.7, np.random.default_rng(seed))
        k_opt, w = brute_force_opt(li.base)
        k_star, _ = max_feasible_k(li)
        assert k_star >= k_opt
        if k_opt:
            pi = enumerate_paths(li)
            res = build_path_lp(pi, k_opt).residuals(indicator_vector(pi, w))
            assert res.max() <= 1e-9


def test_lp_dump_format():
    li = _star(2)
    pi = enumerate_paths(li)
    text = build_path_lp(pi, 2).dump()
    assert text.splitlines()[0] == "E 1*x0 1"
    assert all(line[0] in "EL" for line in text.splitlines())


def test_hard_instance_lp_values_feasible():
    # h = 2: x(leaf) = k/B and x(leaf, v) = k x(leaf)/deg(leaf); capacity
    # holds iff k <= min leaf degree and sum over leaves at v of k^2/(B deg) <= 1
    B, q, h = 16, 4, 2
    li = gen_hard_instance(h, B, q, 64, np.random.default_rng(0))
    deg = {u: li.base.out_degree(u) for u in li.layers[1]}
    load = {}
    for u in li.layers[1]:
        for v in li.base.successors(u):
            load[v] = load.get(v, 0.0) + 1.0 / (B * deg[u])
    k_hat = 0
    while k_hat + 1 <= min(deg.values()) and (k_hat + 1) ** 2 * max(load.values()) <= 1:
        k_hat += 1
    assert k_hat >= 1
    pi = enumerate_paths(li)
    x = HardInstanceLP(li, k_hat)
    vec = np.array([x.value(pi.path(i)) for i in range(len(pi))])
    assert build_path_lp(pi, k_hat).residuals(vec).max() <= 1e-9
    assert max_feasible_k(li)[0] >= k_hat
