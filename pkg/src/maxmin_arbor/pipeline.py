"""End-to-end single-source run: layer -> LP -> sparsify -> round -> globalise -> uncongest."""

from __future__ import annotations

import numpy as np

from .core import Instance, LayeredInstance, global_congestion, is_valid_solution, solution_degree
from .io import solution_to_dict
from .lll_rounder import StageFailure, round_single_source
from .params import make_profile
from .path_lp import max_feasible_k
from .pruning import local_to_global
from .reductions import from_layered, remove_congestion, to_layered


def run_pipeline(inst: Instance | LayeredInstance, seed: int, profile_name: str = "desk-small",
                 k: int | None = None, overrides: dict | None = None) -> dict:
    """Returns a JSON-ready artifact with the final solution and its (degree, congestion)."""
    if isinstance(inst, LayeredInstance):
        li, copy_map = inst, None
    else:
        li, copy_map = to_layered(inst)
    base = inst.base if isinstance(inst, LayeredInstance) else inst
    if len(li.sources) != 1:
        raise StageFailure("input", "pipeline handles single-source instances; use localsearch")
    rng = np.random.default_rng(seed)
    try:
        k_star, x = max_feasible_k(li)
    except Exception as e:  # noqa: BLE001 - stage attribution
        raise StageFailure("lp", e) from e
    k_use = k_star if k is None else k
    if k_use < 1 or k_use > k_star:
        raise StageFailure("lp", f"requested k={k_use} but the path LP is feasible up to {k_star}")
    profile = make_profile(profile_name, li.n, k_use, overrides).validate()
    report: dict = {}
    rounded = round_single_source(li, k_use, profile, rng, x=x, report=report)
    l2g_stats: dict = {}
    try:
        glob = local_to_global(rounded, profile.retain_children, profile, rng, l2g_stats)
    except Exception as e:  # noqa: BLE001
        raise StageFailure("local-to-global", e) from e
    deg = solution_degree(li.base, glob)
    K = max(1, global_congestion(glob).max_global)
    try:
        clean = remove_congestion(glob, deg, K, li.sinks)
    except Exception as e:  # noqa: BLE001
        raise StageFailure("remove-congestion", e) from e
    final = from_layered(clean, copy_map) if copy_map is not None else clean
    final_deg = deg // K
    res = is_valid_solution(base, final, final_deg, 1)
    if not res.ok:
        raise StageFailure("verify", "; ".join(res.reasons[:3]))
    cong = global_congestion(final).max_global
    return {
        "degree": final_deg,
        "congestion": cong,
        "k_lp": k_star,
        "k": k_use,
        "profile": profile.to_dict(),
        "seed": seed,
        "stages": {
            "sparsify_attempts": report["sparsify_attempts"],
            "rounding": report["trace"],
            "rounded_nodes": len(rounded),
            "rounded_local_congestion": report["max_local"],
            "local_to_global": {kk: v for kk, v in l2g_stats.items() if kk != "samples"},
            "global_nodes": len(glob),
            "global_degree": deg,
            "global_congestion": K,
        },
        "solution": solution_to_dict(final),
    }
