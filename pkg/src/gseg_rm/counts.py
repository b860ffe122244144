"""Edge-count profiles over all candidate change-points.

For a split after ``t`` individuals (``t = 1 .. n-1``):

* ``r_out1[t-1]`` counts between-individual edges with both ends among the
  first ``t`` individuals,
* ``r_out2[t-1]`` counts between-individual edges with both ends after them,
* ``r_in1[t-1]`` counts within-individual edges of the first ``t``.

Orderings are given as time positions: ``ordering[u]`` is the 0-based
position of individual ``u``.  The identity is the observed sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SimilarityGraph

__all__ = ["EdgeCountProfile", "edge_count_profile", "edge_count_profiles"]


@dataclass(frozen=True)
class EdgeCountProfile:
    n: int
    r_out1: np.ndarray
    r_out2: np.ndarray
    r_in1: np.ndarray
    n_out: int
    n_in: int

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.n)


def _check_orderings(orderings: np.ndarray, n: int) -> np.ndarray:
    orderings = np.asarray(orderings)
    if orderings.shape[-1] != n:
        raise ValueError(f"ordering must have length n={n}, got {orderings.shape[-1]}")
    if not np.issubdtype(orderings.dtype, np.integer):
        raise ValueError("ordering must contain integer positions")
    if not np.array_equal(np.sort(orderings, axis=-1), np.broadcast_to(np.arange(n), orderings.shape)):
        raise ValueError("ordering is not a permutation of 0..n-1")
    return orderings


def edge_count_profiles(g: SimilarityGraph, orderings, check: bool = True):
    """Profiles for a batch of orderings, shape ``(B, n)``.

    Returns ``(r_out1, r_out2, r_in1)``, each ``(B, n-1)``.  Cost is
    ``O(B * (pairs + n))`` where ``pairs`` is the number of distinct
    individual pairs joined by an edge.
    """
    n = g.n
    orderings = np.atleast_2d(orderings)
    if check:
        orderings = _check_orderings(orderings, n)
    B = orderings.shape[0]
    u, v, mult = g.out_pairs
    offset = (np.arange(B) * n)[:, None]

    pu, pv = orderings[:, u], orderings[:, v]
    first = np.bincount(
        (np.maximum(pu, pv) + offset).ravel(), weights=np.tile(mult, B), minlength=B * n
    ).reshape(B, n)
    # an edge lies after the split t iff min position >= t
    second = np.bincount(
        (np.minimum(pu, pv) + offset).ravel(), weights=np.tile(mult, B), minlength=B * n
    ).reshape(B, n)
    within = np.diag(g.D)
    inside = np.bincount(
        (orderings + offset).ravel(), weights=np.tile(within, B), minlength=B * n
    ).reshape(B, n)

    r_out1 = np.cumsum(first, axis=1)[:, : n - 1]
    r_out2 = np.cumsum(second[:, ::-1], axis=1)[:, ::-1][:, 1:]
    r_in1 = np.cumsum(inside, axis=1)[:, : n - 1]
    as_int = lambda a: np.rint(a).astype(np.int64)
    return as_int(r_out1), as_int(r_out2), as_int(r_in1)


def edge_count_profile(g: SimilarityGraph, ordering=None) -> EdgeCountProfile:
    if ordering is None:
        ordering = np.arange(g.n)
    r1, r2, rin = edge_count_profiles(g, np.asarray(ordering)[None, :])
    return EdgeCountProfile(g.n, r1[0], r2[0], rin[0], g.n_out, g.n_in)
