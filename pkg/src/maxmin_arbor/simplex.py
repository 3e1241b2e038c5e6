"""Dense-tableau phase-1 simplex: Dantzig pricing with a Bland fallback.

Only feasibility is needed by the path LP, so there is no phase 2. The
tableau is small at the sizes this package targets; numpy row operations keep
each pivot cheap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class CyclingGuardExceeded(RuntimeError):
    """Pivot count blew past the guard; Bland's rule should make this impossible."""


@dataclass
class Phase1Result:
    feasible: bool
    x: np.ndarray
    objective: float
    pivots: int
    certificate: list[int]


def phase1(a_eq: np.ndarray, b_eq: np.ndarray, a_ub: np.ndarray, b_ub: np.ndarray,
           tol: float = 1e-9, max_pivots: int | None = None,
           pricing: str = "dantzig") -> Phase1Result:
    """Find x >= 0 with ``a_eq x = b_eq`` and ``a_ub x <= b_ub``.

    Rows are normalised to a nonnegative right-hand side; ``<=`` rows with a
    nonnegative rhs start with their slack basic, all other rows get an
    artificial. The certificate lists rows with a nonzero phase-1 dual when
    the system is infeasible.

    ``pricing="bland"`` uses Bland's rule throughout. The default prices by
    the most negative reduced cost and falls back to Bland's rule after a run
    of degenerate pivots, until the objective moves again; that keeps the
    termination guarantee while cutting pivot counts on larger systems.
    """
    if pricing not in ("dantzig", "bland"):
        raise ValueError(pricing)
    a_eq = np.atleast_2d(np.asarray(a_eq, float))
    a_ub = np.atleast_2d(np.asarray(a_ub, float))
    b_eq = np.asarray(b_eq, float).ravel()
    b_ub = np.asarray(b_ub, float).ravel()
    nvar = max(a_eq.shape[1] if a_eq.size else 0, a_ub.shape[1] if a_ub.size else 0)
    a_eq = a_eq.reshape(len(b_eq), nvar)
    a_ub = a_ub.reshape(len(b_ub), nvar)
    m_eq, m_ub = len(b_eq), len(b_ub)
    m = m_eq + m_ub

    # column layout: x | slack-or-surplus for ub rows | artificials
    flip_eq = b_eq < 0
    flip_ub = b_ub < 0
    needs_art = np.concatenate([np.ones(m_eq, bool), flip_ub])
    n_art = int(needs_art.sum())
    ncol = nvar + m_ub + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m_eq, :nvar] = np.where(flip_eq[:, None], -a_eq, a_eq)
    T[:m_eq, -1] = np.abs(b_eq)
    T[m_eq:m, :nvar] = np.where(flip_ub[:, None], -a_ub, a_ub)
    T[m_eq:m, -1] = np.abs(b_ub)
    for r in range(m_ub):
        T[m_eq + r, nvar + r] = -1.0 if flip_ub[r] else 1.0
    basis = np.empty(m, dtype=np.int64)
    art_col = {}
    c = nvar + m_ub
    for r in range(m):
        if needs_art[r]:
            T[r, c] = 1.0
            basis[r] = c
            art_col[r] = c
            c += 1
        else:
            basis[r] = nvar + (r - m_eq)
    cost = np.zeros(ncol)
    cost[nvar + m_ub:] = 1.0
    art_rows = np.array(sorted(art_col), dtype=np.int64)
    T[m, :] = 0.0
    T[m, :ncol] = cost
    if len(art_rows):
        T[m, :] -= T[art_rows].sum(axis=0)

    guard = max_pivots if max_pivots is not None else 50 * (m + ncol) + 1000
    eps = 1e-9
    pivots = 0
    stall = 0
    stall_limit = 50
    last_obj = T[m, -1]
    while True:
        z = T[m, :ncol]
        cand = np.nonzero(z < -eps)[0]
        if not len(cand):
            break
        if pricing == "bland" or stall >= stall_limit:
            j = int(cand[0])
        else:
            j = int(cand[np.argmin(z[cand])])
        col = T[:m, j]
        pos = np.nonzero(col > eps)[0]
        if not len(pos):
            # cannot happen for a phase-1 problem bounded below by zero
            raise CyclingGuardExceeded("unbounded phase-1 direction")
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-10 * max(1.0, abs(best))]
        r = int(ties[np.argmin(basis[ties])])
        T[r, :] /= T[r, j]
        colj = T[:, j].copy()
        colj[r] = 0.0
        T -= np.outer(colj, T[r, :])
        basis[r] = j
        pivots += 1
        if T[m, -1] > last_obj + 1e-12:
            last_obj = T[m, -1]
            stall = 0
        else:
            stall += 1
        if pivots > guard:
            raise CyclingGuardExceeded(f"more than {guard} pivots")

    x_all = np.zeros(ncol)
    x_all[basis] = T[:m, -1]
    x = np.clip(x_all[:nvar], 0.0, None)
    objective = float(-T[m, -1])
    feasible = objective <= tol
    certificate: list[int] = []
    if not feasible:
        z = T[m, :ncol]
        for r in range(m):
            if r in art_col:
                y = cost[art_col[r]] - z[art_col[r]]
            else:
                y = -z[nvar + (r - m_eq)]
            if abs(y) > 1e-9:
                certificate.append(r)
    log.debug("phase1: %d rows, %d cols, %d pivots, obj %.3g", m, ncol, pivots, objective)
    return Phase1Result(feasible, x, objective, pivots, certificate)
