"""Path enumeration, the path LP, and the search for its largest feasible k."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import LayeredInstance, Path, SolutionForest
from .simplex import phase1

log = logging.getLogger(__name__)


class PathBudgetExceeded(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"path index would exceed {cap} nodes")
        self.cap = cap


class PathIndex:
    """Prefix tree of every path from the single source of a layered instance."""

    def __init__(self, li: LayeredInstance, end: list[int], parent: list[int],
                 children: list[list[int]]):
        self.li = li
        self.end = end
        self.parent = parent
        self.children = children
        self.layer = [0] * len(end)
        for i in range(1, len(end)):
            self.layer[i] = self.layer[parent[i]] + 1
        self._lookup: dict[Path, int] | None = None

    def __len__(self) -> int:
        return len(self.end)

    @property
    def root(self) -> int:
        return 0

    def is_open(self, node: int) -> bool:
        return self.end[node] not in self.li.sinks

    def path(self, node: int) -> Path:
        out = []
        while node != -1:
            out.append(self.end[node])
            node = self.parent[node]
        return tuple(reversed(out))

    def lookup(self, path: Path) -> int | None:
        if self._lookup is None:
            self._lookup = {self.path(i): i for i in range(len(self))}
        return self._lookup.get(tuple(path))

    def descendant_groups(self) -> dict[tuple[int, int], list[int]]:
        """(p, v) -> strict descendants of p ending at v, in node order."""
        groups: dict[tuple[int, int], list[int]] = defaultdict(list)
        for q in range(1, len(self)):
            v = self.end[q]
            a = self.parent[q]
            while a != -1:
                groups[(a, v)].append(q)
                a = self.parent[a]
        return groups


def enumerate_paths(li: LayeredInstance, cap: int = 200_000) -> PathIndex:
    s = li.single_source()
    end, parent, children = [s], [-1], [[]]
    frontier = [0]
    while frontier:
        nxt = []
        for node in frontier:
            v = end[node]
            if v in li.sinks:
                continue
            for w in li.base.successors(v):
                if len(end) >= cap:
                    raise PathBudgetExceeded(cap)
                end.append(w)
                parent.append(node)
                children.append([])
                children[node].append(len(end) - 1)
                nxt.append(len(end) - 1)
        frontier = nxt
    return PathIndex(li, end, parent, children)


@dataclass
class LpProblem:
    """Sparse feasibility system; every row is (kind, {var: coeff}, rhs, name)."""

    n_vars: int
    rows: list[tuple[str, dict[int, float], float, str]] = field(default_factory=list)

    def add(self, kind: str, coeffs: dict[int, float], rhs: float, name: str) -> None:
        if kind not in ("E", "L"):
            raise ValueError(kind)
        self.rows.append((kind, coeffs, float(rhs), name))

    def count(self, prefix: str) -> int:
        return sum(1 for r in self.rows if r[3].startswith(prefix))

    def dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[int], list[int]]:
        eq = [i for i, r in enumerate(self.rows) if r[0] == "E"]
        ub = [i for i, r in enumerate(self.rows) if r[0] == "L"]

        def mat(idx):
            a = np.zeros((len(idx), self.n_vars))
            b = np.zeros(len(idx))
            for r, i in enumerate(idx):
                for j, c in self.rows[i][1].items():
                    a[r, j] += c
                b[r] = self.rows[i][2]
            return a, b

        a_eq, b_eq = mat(eq)
        a_ub, b_ub = mat(ub)
        return a_eq, b_eq, a_ub, b_ub, eq, ub

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Violation amount of every row (0 when satisfied)."""
        out = np.zeros(len(self.rows))
        for i, (kind, coeffs, rhs, _) in enumerate(self.rows):
            lhs = sum(c * x[j] for j, c in coeffs.items())
            out[i] = abs(lhs - rhs) if kind == "E" else max(0.0, lhs - rhs)
        return out

    def dump(self) -> str:
        lines = []
        for kind, coeffs, rhs, _ in self.rows:
            terms = " ".join(f"{c:g}*x{j}" for j, c in sorted(coeffs.items()))
            lines.append(f"{kind} {terms} {rhs:g}")
        return "\n".join(lines) + "\n"


def build_path_lp(pi: PathIndex, k: int) -> LpProblem:
    """Root row, child-sum demand rows, and lift-and-project capacity rows."""
    if k < 1:
        raise ValueError("k must be at least 1")
    lp = LpProblem(len(pi))
    lp.add("E", {pi.root: 1.0}, 1.0, "root")
    for p in range(len(pi)):
        if pi.is_open(p):
            row = {q: 1.0 for q in pi.children[p]}
            row[p] = row.get(p, 0.0) - k
            lp.add("E", row, 0.0, f"demand:{p}")
    for (p, v), qs in sorted(pi.descendant_groups().items()):
        row = {q: 1.0 for q in qs}
        row[p] = row.get(p, 0.0) - 1.0
        lp.add("L", row, 0.0, f"cap:{p}:{v}")
    return lp


class FractionalPathSolution:
    """LP values x(p) over the nodes of a :class:`PathIndex`."""

    def __init__(self, index: PathIndex, values: np.ndarray, k: int):
        self.index = index
        self.values = np.asarray(values, float)
        self.k = k

    def value(self, node: int) -> float:
        return float(self.values[node])

    def children_of(self, node: int) -> tuple[list[int], np.ndarray]:
        ch = self.index.children[node]
        return ch, self.values[ch]

    # protocol shared with analytic solutions used by the baselines
    def root_path(self) -> Path:
        return (self.index.end[0],)

    def child_distribution(self, path: Path) -> tuple[list[Path], np.ndarray]:
        node = self.index.lookup(path)
        ch = self.index.children[node]
        return [path + (self.index.end[c],) for c in ch], self.values[ch]

    def is_closed(self, path: Path) -> bool:
        return path[-1] in self.index.li.sinks


@dataclass
class LpResult:
    feasible: bool
    solution: FractionalPathSolution | None
    certificate: list[str]
    pivots: int
    max_residual: float


class NumericalFailure(RuntimeError):
    pass


SIMPLEX_MAX_VARS = 200


def _solve_highs(lp: LpProblem, tol: float) -> tuple[bool, np.ndarray | None, int]:
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix

    def sparse(kind):
        rows = [r for r in lp.rows if r[0] == kind]
        data, ri, ci = [], [], []
        for i, (_, coeffs, _, _) in enumerate(rows):
            for j, c in coeffs.items():
                data.append(c)
                ri.append(i)
                ci.append(j)
        a = csr_matrix((data, (ri, ci)), shape=(len(rows), lp.n_vars)) if rows else None
        b = np.array([r[2] for r in rows]) if rows else None
        return a, b

    a_eq, b_eq = sparse("E")
    a_ub, b_ub = sparse("L")
    res = linprog(np.zeros(lp.n_vars), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": max(tol, 1e-10)})
    if res.status == 2:
        return False, None, int(getattr(res, "nit", 0))
    if res.status != 0:
        raise NumericalFailure(f"HiGHS returned status {res.status}: {res.message}")
    return True, np.clip(res.x, 0.0, None), int(getattr(res, "nit", 0))


def solve_lp_feasibility(lp: LpProblem, pi: PathIndex, k: int, tol: float = 1e-9,
                         recheck: float = 1e-6, backend: str = "auto") -> LpResult:
    """Phase-1 simplex on small systems, HiGHS on larger ones.

    Only the simplex backend produces an infeasibility certificate.
    """
    if backend == "auto":
        backend = "simplex" if lp.n_vars <= SIMPLEX_MAX_VARS else "highs"
    if backend == "simplex":
        a_eq, b_eq, a_ub, b_ub, eq, ub = lp.dense()
        res = phase1(a_eq, b_eq, a_ub, b_ub, tol=tol)
        order = eq + ub
        cert = [lp.rows[order[r]][3] for r in res.certificate]
        feasible, x, pivots = res.feasible, res.x, res.pivots
    elif backend == "highs":
        feasible, x, pivots = _solve_highs(lp, tol)
        cert = []
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if not feasible:
        return LpResult(False, None, cert, pivots, float("nan"))
    worst = float(lp.residuals(x).max(initial=0.0))
    if worst > recheck:
        raise NumericalFailure(f"LP witness residual {worst:.3g} exceeds {recheck}")
    return LpResult(True, FractionalPathSolution(pi, x, k), [], pivots, worst)


def trivial_solution(pi: PathIndex) -> FractionalPathSolution:
    x = np.zeros(len(pi))
    x[pi.root] = 1.0
    return FractionalPathSolution(pi, x, 0)


def max_feasible_k(li: LayeredInstance, cap: int = 200_000, tol: float = 1e-9,
                   index: PathIndex | None = None,
                   backend: str = "auto") -> tuple[int, FractionalPathSolution]:
    """Binary search for the largest k at which the path LP is feasible."""
    pi = index if index is not None else enumerate_paths(li, cap)
    lo, hi = 0, len(pi.children[pi.root])
    best = trivial_solution(pi)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        r = solve_lp_feasibility(build_path_lp(pi, mid), pi, mid, tol, backend=backend)
        log.debug("k=%d feasible=%s pivots=%d", mid, r.feasible, r.pivots)
        if r.feasible:
            lo, best = mid, r.solution
        else:
            hi = mid - 1
    return lo, best


def indicator_vector(pi: PathIndex, sol: SolutionForest) -> np.ndarray:
    """0/1 (or multiplicity) vector of a single-source integral solution."""
    x = np.zeros(len(pi))
    for p in sol.paths.values():
        node = pi.lookup(p)
        if node is None:
            raise ValueError(f"path {p} is not in the index")
        x[node] += 1.0
    return x
