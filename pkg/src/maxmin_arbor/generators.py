"""Instance factories: random layered, planted, the gap instance, max-k-cover."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import Instance, LayeredInstance, Path


def _prov(name: str, seed_info, **params) -> dict:
    return {"generator": name, "params": params, "seed": seed_info}


def _seed_of(rng: np.random.Generator):
    # the generator's seed sequence entropy, when it was seeded from an int
    seq = getattr(rng.bit_generator, "seed_seq", None)
    return getattr(seq, "entropy", None)


def gen_random_layered(h: int, widths: Sequence[int], edge_prob: float,
                       rng: np.random.Generator) -> LayeredInstance:
    """Independent edges between consecutive layers; the last layer is all sinks."""
    if len(widths) != h + 1 or min(widths) < 1:
        raise ValueError("widths must list h + 1 positive layer sizes")
    offs = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    layers = [list(range(offs[i], offs[i + 1])) for i in range(h + 1)]
    edges = []
    for i in range(h):
        mask = rng.random((widths[i], widths[i + 1])) < edge_prob
        us, vs = np.nonzero(mask)
        edges.extend(zip((us + offs[i]).tolist(), (vs + offs[i + 1]).tolist()))
    inst = Instance(int(offs[-1]), edges, layers[0], layers[-1])
    return LayeredInstance(inst, layers, _prov("random", _seed_of(rng), h=h, widths=list(widths),
                                               edge_prob=edge_prob))


def gen_planted(k: int, h: int, sources: int, noise_prob: float,
                rng: np.random.Generator) -> tuple[LayeredInstance, int]:
    """Disjoint complete k-ary arborescences of depth h plus random cross edges.

    Vertex ids inside each layer are shuffled, so the planted trees are not
    recoverable from id order.
    """
    if k < 1 or h < 1 or sources < 1:
        raise ValueError("k, h and sources must be positive")
    sizes = [sources * k ** i for i in range(h + 1)]
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    perm = [offs[i] + rng.permutation(sizes[i]) for i in range(h + 1)]
    edges = set()
    for i in range(h):
        for slot in range(sizes[i + 1]):
            edges.add((int(perm[i][slot // k]), int(perm[i + 1][slot])))
        if noise_prob > 0:
            mask = rng.random((sizes[i], sizes[i + 1])) < noise_prob
            us, vs = np.nonzero(mask)
            edges.update(zip((us + offs[i]).tolist(), (vs + offs[i + 1]).tolist()))
    layers = [list(range(offs[i], offs[i + 1])) for i in range(h + 1)]
    inst = Instance(int(offs[-1]), sorted(edges), layers[0], layers[-1])
    prov = _prov("planted", _seed_of(rng), k=k, h=h, sources=sources, noise_prob=noise_prob)
    return LayeredInstance(inst, layers, prov), k


def gen_hard_instance(h: int, B: int, q: int, m: int, rng: np.random.Generator,
                      chunk: int = 16_384) -> LayeredInstance:
    """Complete B-ary tree on layers 0..h-1 plus m sinks in layer h.

    Each sink walks the tree top-down, keeping every child of a kept vertex
    independently with probability 1/q, and is joined to every kept leaf.
    """
    if h < 1 or B < 1 or q < 1 or m < 1:
        raise ValueError("h, B, q, m must be positive")
    sizes = [B ** j for j in range(h)]
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n_tree = int(offs[-1])
    tree_edges = []
    for j in range(h - 1):
        parent = np.repeat(np.arange(sizes[j]), B) + offs[j]
        child = np.arange(sizes[j + 1]) + offs[j + 1]
        tree_edges.append(np.stack([parent, child], axis=1))

    # (sink, index within layer) pairs of kept vertices
    sink_ids = np.arange(m, dtype=np.int64)
    kept_idx = np.zeros(m, dtype=np.int64)
    p = 1.0 / q
    for j in range(h - 1):
        new_s, new_i = [], []
        for a in range(0, len(sink_ids), chunk):
            s_blk, i_blk = sink_ids[a:a + chunk], kept_idx[a:a + chunk]
            mask = rng.random((len(s_blk), B), dtype=np.float32) < p
            rows, cols = np.nonzero(mask)
            new_s.append(s_blk[rows])
            new_i.append(i_blk[rows] * B + cols)
        sink_ids = np.concatenate(new_s) if new_s else sink_ids[:0]
        kept_idx = np.concatenate(new_i) if new_i else kept_idx[:0]
    leaf_edges = np.stack([kept_idx + offs[h - 1], sink_ids + n_tree], axis=1)
    edges = np.concatenate(tree_edges + [leaf_edges]) if tree_edges else leaf_edges
    layers = [list(range(int(offs[j]), int(offs[j + 1]))) for j in range(h)]
    layers.append(list(range(n_tree, n_tree + m)))
    inst = Instance(n_tree + m, edges, [0], layers[-1])
    return LayeredInstance(inst, layers, _prov("hard", _seed_of(rng), h=h, B=B, q=q, m=m))


def hard_instance_leaf_degrees(li: LayeredInstance) -> np.ndarray:
    """Number of leaves each sink is joined to."""
    first = li.layers[-1][0]
    heads = li.base.edge_array[:, 1]
    return np.bincount(heads[heads >= first] - first, minlength=len(li.layers[-1]))


class HardInstanceLP:
    """Explicit fractional solution of the gap instance.

    Tree paths in layer i get (k/B)^i; a leaf with c sink neighbours gives
    each of them k/c of its own value, so every demand row holds with
    equality. Conditioned on a path, children are therefore uniform.
    """

    def __init__(self, li: LayeredInstance, k: float):
        self.li = li
        self.k = k
        self.B = li.base.out_degree(0) if li.h > 1 else None

    def root_path(self) -> Path:
        return (0,)

    def is_closed(self, path: Path) -> bool:
        return path[-1] in self.li.sinks

    def child_distribution(self, path: Path):
        kids = self.li.base.successors(path[-1])
        return [path + (w,) for w in kids], np.full(len(kids), 1.0)

    def value(self, path: Path) -> float:
        h = self.li.h
        depth = len(path) - 1
        if depth < h:
            return (self.k / self.B) ** depth if self.B else 1.0
        leaf_val = self.value(path[:-1])
        return self.k * leaf_val / self.li.base.out_degree(path[-2])


def paper_hard_params(n: int) -> dict:
    """Parameter stand-ins at the asymptotic formulas (astronomical by design)."""
    lg = math.ceil(math.log2(n))
    q = lg ** 10
    return {"B": q * q, "q": q, "h": max(1, math.floor(math.log(n) / math.log(q)))}


def gen_maxkcover_instance(m: int, sets: Sequence[Sequence[int]], k: int) -> LayeredInstance:
    """Two-layer instance of the max-k-cover reduction.

    Each set S_i gets m/k^2 copies v_{i,j}; each element a gets m/k^2 sink
    copies s_{a,j}; v_{i,j} points to s_{a,j} for every a in S_i.
    """
    if k < 1 or m % (k * k):
        raise ValueError("k^2 must divide m")
    for s in sets:
        if len(set(s)) != m // k or any(not 0 <= a < m for a in s):
            raise ValueError("every set needs exactly m/k distinct elements of the universe")
    c = m // (k * k)
    nsets = len(sets)
    vid = lambda i, j: 1 + i * c + j
    sid = lambda a, j: 1 + nsets * c + a * c + j
    edges = [(0, vid(i, j)) for i in range(nsets) for j in range(c)]
    edges += [(vid(i, j), sid(a, j)) for i, s in enumerate(sets) for j in range(c) for a in sorted(set(s))]
    n = 1 + nsets * c + m * c
    layers = [[0], [vid(i, j) for i in range(nsets) for j in range(c)],
              [sid(a, j) for a in range(m) for j in range(c)]]
    inst = Instance(n, edges, [0], layers[2])
    return LayeredInstance(inst, layers, _prov("maxkcover", None, m=m, k=k,
                                               sets=[sorted(set(s)) for s in sets]))


def survival_recursion(d: int, h: int, q: float) -> list[float]:
    """p_h = 1 and p_j = 1 - (1 - p_{j+1}/q)^d; returns [p_0, ..., p_h]."""
    p = [0.0] * (h + 1)
    p[h] = 1.0
    for j in range(h - 1, -1, -1):
        p[j] = 1.0 - (1.0 - p[j + 1] / q) ** d
    return p


def survived_sinks_estimate(d: int, h: int, B: int, q: float, trials: int,
                            rng: np.random.Generator) -> dict:
    """Chance that a sink reaches a leaf of a fixed degree-d subtree of depth h.

    The sink keeps each child of a kept vertex with probability 1/q, so the
    kept vertices per level form a Galton-Watson process with Binomial(d, 1/q)
    offspring.
    """
    if d > B:
        raise ValueError("tree degree cannot exceed the branching B")
    z = np.ones(trials, dtype=np.int64)
    for _ in range(h):
        z = rng.binomial(d * z, 1.0 / q)
    hit = z > 0
    measured = float(hit.mean())
    return {
        "measured": measured,
        "stderr": float(math.sqrt(max(measured * (1 - measured), 1e-12) / trials)),
        "recursion": survival_recursion(d, h, q)[0],
        "trials": trials,
    }
