"""Similarity graphs on repeated measurements.

The k-MST is the union of k successive minimum spanning trees, each built on
the complete graph minus the edges already used.  Edge weights are compared
under the strict total order ``(weight, min node, max node)``, which makes
every layer unique and the construction reproducible when distances tie.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .dataset import PanelDataset

__all__ = [
    "GraphError",
    "SimilarityGraph",
    "pairwise_distances",
    "kmst_edges",
    "kruskal_forest",
    "build_kmst",
    "decompose",
    "similarity_graph",
    "format_edge_list",
]

DEFAULT_K = 9


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Edge list over ``node_count`` nodes with its between/within split.

    ``edges`` is an ``(E, 2)`` int array with ``edges[:, 0] < edges[:, 1]``,
    sorted lexicographically.  ``D[u, v]`` counts edges joining individuals
    ``u`` and ``v``; ``D[u, u]`` counts within-individual edges of ``u``.
    """

    node_count: int
    edges: np.ndarray
    individual_of: np.ndarray
    out_edges: np.ndarray
    in_edges: np.ndarray
    D: np.ndarray

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @cached_property
    def D_row(self) -> np.ndarray:
        """``D_u``: edges from individual ``u`` to all other individuals."""
        return self.D.sum(axis=1) - np.diag(self.D)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_out(self) -> int:
        return len(self.out_edges)

    @property
    def n_in(self) -> int:
        return len(self.in_edges)

    @cached_property
    def out_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct individual pairs ``u < v`` with their edge multiplicities."""
        u, v = np.nonzero(np.triu(self.D, k=1))
        return u, v, self.D[u, v]


def pairwise_distances(ds: PanelDataset, metric: str = "euclidean") -> np.ndarray:
    """Dense ``N x N`` distances between all flattened measurements."""
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    return squareform(pdist(ds.flat(), metric="euclidean"))


def _check_distances(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise GraphError(f"distance matrix must be square, got {dist.shape}")
    if not np.all(np.isfinite(dist)) or np.any(dist < 0):
        raise GraphError("distances must be finite and nonnegative")
    if not np.array_equal(dist, dist.T):
        raise GraphError("distance matrix is not symmetric")
    return dist


def _prim_forest(dist: np.ndarray, avail: np.ndarray) -> list[tuple[int, int]]:
    # Minimum spanning forest of the available edges under (w, lo, hi) order.
    N = len(dist)
    nodes = np.arange(N)
    in_tree = np.zeros(N, dtype=bool)
    best_w = np.full(N, np.inf)
    best_lo = np.full(N, N)
    best_hi = np.full(N, N)
    chosen = []
    for _ in range(N):
        cand = np.where(in_tree, np.inf, best_w)
        wmin = cand.min()
        if np.isinf(wmin):
            u = int(np.flatnonzero(~in_tree)[0])
        else:
            idx = np.flatnonzero(cand == wmin)
            if len(idx) > 1:
                idx = idx[np.lexsort((best_hi[idx], best_lo[idx]))]
            u = int(idx[0])
            chosen.append((int(best_lo[u]), int(best_hi[u])))
        in_tree[u] = True
        row = dist[u]
        lo = np.minimum(u, nodes)
        hi = np.maximum(u, nodes)
        better = avail[u] & ~in_tree & (
            (row < best_w)
            | ((row == best_w) & ((lo < best_lo) | ((lo == best_lo) & (hi < best_hi))))
        )
        best_w[better] = row[better]
        best_lo[better] = lo[better]
        best_hi[better] = hi[better]
    return chosen


def kruskal_forest(dist: np.ndarray, excluded=()) -> list[tuple[int, int]]:
    """Reference Kruskal minimum spanning forest with a disjoint-set forest.

    ``excluded`` holds ``(i, j)`` pairs (``i < j``) that may not be used.
    Quadratic memory and a Python loop over all pairs; meant for checking.
    """
    dist = _check_distances(dist)
    N = len(dist)
    excluded = set(map(tuple, excluded))
    i, j = np.triu_indices(N, k=1)
    order = np.lexsort((j, i, dist[i, j]))
    parent = list(range(N))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for e in order:
        a, b = int(i[e]), int(j[e])
        if (a, b) in excluded:
            continue
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
            tree.append((a, b))
            if len(tree) == N - 1:
                break
    return tree


def kmst_edges(dist: np.ndarray, k: int = DEFAULT_K, method: str = "prim") -> np.ndarray:
    """Edges of the k-MST as a sorted ``(E, 2)`` array.

    When the remaining graph is disconnected (only for tiny ``N``) a layer
    is the minimum spanning forest, so ``E`` may fall short of ``k (N - 1)``.
    """
    dist = _check_distances(dist)
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    N = len(dist)
    if N < 2:
        raise GraphError("need at least two nodes")
    used: list[tuple[int, int]] = []
    if method == "prim":
        avail = ~np.eye(N, dtype=bool)
        for _ in range(k):
            layer = _prim_forest(dist, avail)
            if not layer:
                break
            a, b = np.array(layer).T
            avail[a, b] = avail[b, a] = False
            used.extend(layer)
    elif method == "kruskal":
        for _ in range(k):
            layer = kruskal_forest(dist, used)
            if not layer:
                break
            used.extend(layer)
    else:
        raise ValueError(f"unknown MST method {method!r}")
    edges = np.array(sorted(used), dtype=np.int64).reshape(-1, 2)
    return edges


def decompose(edges, individual_of, n: Optional[int] = None) -> SimilarityGraph:
    """Split an edge list into between- and within-individual edges."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    individual_of = np.asarray(individual_of, dtype=np.int64)
    N = len(individual_of)
    if len(edges) and (edges.min() < 0 or edges.max() >= N):
        raise GraphError("edge endpoint out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        loop = edges[edges[:, 0] == edges[:, 1]][0]
        raise GraphError(f"self-loop at node {int(loop[0])}")
    edges = np.sort(edges, axis=1)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    if len(edges) > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
        raise GraphError("duplicate edges")
    if n is None:
        n = int(individual_of.max()) + 1
    iu = individual_of[edges[:, 0]]
    iv = individual_of[edges[:, 1]]
    within = iu == iv
    D = np.zeros((n, n), dtype=np.int64)
    np.add.at(D, (iu, iv), 1)
    D = D + D.T - np.diag(np.diag(D))
    for arr in (edges, individual_of, D):
        arr.setflags(write=False)
    return SimilarityGraph(
        node_count=N,
        edges=edges,
        individual_of=individual_of,
        out_edges=np.flatnonzero(~within),
        in_edges=np.flatnonzero(within),
        D=D,
    )


def build_kmst(
    dist: np.ndarray,
    k: int = DEFAULT_K,
    individual_of=None,
    method: str = "prim",
) -> SimilarityGraph:
    """k-MST on ``dist``, decomposed by ``individual_of`` (default: one node each)."""
    edges = kmst_edges(dist, k, method=method)
    if individual_of is None:
        individual_of = np.arange(len(dist))
    return decompose(edges, individual_of)


def similarity_graph(ds: PanelDataset, k: int = DEFAULT_K, method: str = "prim") -> SimilarityGraph:
    return build_kmst(pairwise_distances(ds), k, ds.individual_of(), method=method)


def format_edge_list(g: SimilarityGraph) -> str:
    """Debug export: one ``u v in|out`` line per edge."""
    kind = np.full(g.n_edges, "out", dtype=object)
    kind[g.in_edges] = "in"
    return "".join(f"{u} {v} {c}\n" for (u, v), c in zip(g.edges.tolist(), kind))
