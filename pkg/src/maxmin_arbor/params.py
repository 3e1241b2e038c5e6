"""Tunable constants of the rounding pipeline.

``paper_default`` evaluates the asymptotic formulas verbatim for a given
``(n, k)``; at desk sizes those constants dwarf every observable quantity.
``desk_small`` shrinks them so that the machinery actually does something on
instances with a few hundred vertices.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ParamProfile:
    name: str
    ell: int
    L_local: int
    K_global: int
    granularity_base: int
    sample_children: int
    retain_children: int
    b1_slack: float
    mark_frac_denom: int
    mark_threshold_denom: float
    c_const: float = 1.0
    resample_cap: int = 10_000

    def problems(self) -> list[str]:
        out = []
        for f in ("ell", "L_local", "K_global", "granularity_base", "sample_children",
                  "retain_children", "mark_frac_denom", "resample_cap"):
            if getattr(self, f) < 1:
                out.append(f"{f} must be positive")
        if self.b1_slack < 0 or self.mark_threshold_denom <= 0 or self.c_const < 0:
            out.append("b1_slack, mark_threshold_denom and c_const must be nonnegative")
        if self.ell < 2:
            out.append("ell must be at least 2")
        if self.retain_children > self.sample_children:
            out.append("retain_children exceeds sample_children")
        # A round that triggers no B2 event marks fewer than
        # sample/mark_frac_denom children of each node, and a node is examined
        # in ell + 1 consecutive rounds.
        per_round = math.ceil(self.sample_children / self.mark_frac_denom) - 1
        if self.sample_children - (self.ell + 1) * per_round < self.retain_children:
            out.append("retain_children not guaranteed after deleting marked children")
        return out

    def validate(self) -> "ParamProfile":
        probs = self.problems()
        if probs:
            raise ProfileError(f"profile {self.name!r}: " + "; ".join(probs))
        return self

    @property
    def local_threshold(self) -> int:
        """Local-congestion level above which a path counts as congested."""
        return self.L_local

    def with_overrides(self, **kw) -> "ParamProfile":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _log2(n: int) -> float:
    return math.log2(max(n, 4))


def paper_default(n: int, k: int) -> ParamProfile:
    lg = _log2(n)
    ell = max(2, math.ceil(10 * math.log2(lg)))
    sample = max(1, k // 16)
    return ParamProfile(
        name="paper-default",
        ell=ell,
        L_local=2 ** 10 * ell ** 2,
        K_global=math.ceil(2 ** 11 * lg ** 3),
        granularity_base=math.ceil(4 * lg ** 2),
        sample_children=sample,
        retain_children=max(1, min(sample, k // 32)),
        b1_slack=2 ** 10 * lg,
        mark_frac_denom=ell ** 3,
        mark_threshold_denom=lg ** 10,
    )


def desk_small(n: int, k: int, g: int = 4) -> ParamProfile:
    """Desk-scale profile with ell = 2.

    Children per rounding step are ``k // 2`` (at least 2), and any marked
    child trips the B2 event, so every surviving node keeps all of them.
    The global bound follows the per-layer growth recursion of the rounding
    (expected class total grows by ``4 * sample / k`` per layer, doubled by
    the event threshold, plus one slack per dyadic class) over log2(n)
    layers.
    """
    lg = _log2(n)
    ell = 2
    sample = max(2, k // 2)
    slack = 16 * lg
    depth = math.ceil(lg)
    classes = depth * max(1, math.ceil(math.log2(g))) + 2
    growth = 2 * 4 * sample / max(k, 1)
    bound = 2.0
    for _ in range(depth):
        bound = growth * bound + classes * slack
    return ParamProfile(
        name="desk-small",
        ell=ell,
        L_local=16 * ell ** 2,
        K_global=math.ceil(bound),
        granularity_base=g,
        sample_children=sample,
        retain_children=sample,
        b1_slack=slack,
        mark_frac_denom=sample,
        mark_threshold_denom=4.0,
    )


PRESETS = {"paper-default": paper_default, "desk-small": desk_small}


def make_profile(name: str, n: int, k: int, overrides: dict | None = None) -> ParamProfile:
    if name not in PRESETS:
        raise ProfileError(f"unknown profile {name!r}; choose from {sorted(PRESETS)}")
    prof = PRESETS[name](n, k)
    if overrides:
        unknown = set(overrides) - {f.name for f in dataclasses.fields(ParamProfile)}
        if unknown:
            raise ProfileError(f"unknown profile fields: {sorted(unknown)}")
        prof = prof.with_overrides(**overrides)
    return prof
