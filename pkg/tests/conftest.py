from __future__ import annotations

import numpy as np
import pytest

from maxmin_arbor.core import ForestBuilder, Instance, LayeredInstance, SolutionForest
from maxmin_arbor.generators import gen_planted
from maxmin_arbor.path_lp import max_feasible_k


def kary_forest(k: int, h: int, roots: int = 1) -> tuple[Instance, SolutionForest]:
    """Complete k-ary trees of depth h on fresh vertices, one per root."""
    b = ForestBuilder()
    edges, sinks = [], []
    nxt = roots
    for r in range(roots):
        frontier = [b.add_root(r)]
        for d in range(h):
            new = []
            for node in frontier:
                u = b.path(node)[-1]
                for _ in range(k):
                    edges.append((u, nxt))
                    new.append(b.add_child(node, nxt))
                    if d == h - 1:
                        sinks.append(nxt)
                    nxt += 1
            frontier = new
    return Instance(nxt, edges, range(roots), sinks), b.build()


@pytest.fixture(scope="session")
def planted_lp():
    """Planted k=4, h=3 single-source instance with noise, and its LP solution."""
    li, k = gen_planted(4, 3, 1, 0.2, np.random.default_rng(1))
    k_star, x = max_feasible_k(li)
    return li, k_star, x


@pytest.fixture(scope="session")
def planted_lp_k8():
    li, k = gen_planted(8, 2, 1, 0.3, np.random.default_rng(2))
    k_star, x = max_feasible_k(li)
    return li, k_star, x


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
