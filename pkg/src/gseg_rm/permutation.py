"""Permutation null distribution of the scan maxima.

Each replicate shuffles the time order of whole individuals (so the
repeated measurements stay together), recomputes the edge counts on the
fixed graph and records the window maxima of every channel.  Replicate
``r`` draws its permutation from its own stream ``individual_rng(seed, r)``,
so results do not depend on chunking.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .counts import edge_count_profiles
from .dataset import individual_rng
from .graph import SimilarityGraph
from .moments import NullMoments
from .scanstat import standardize

__all__ = ["MIN_PERMUTATIONS", "PermutationResult", "permutation_test", "exhaustive_null", "null_maxima"]

_CHUNK = 256
MIN_PERMUTATIONS = 100
_MAX_EXHAUSTIVE = 8


@dataclass(frozen=True)
class PermutationResult:
    """Observed maxima with their permutation null.

    ``null`` maps each channel (``m``, ``out_w``, ``out_d``, ``in``,
    ``in_tilde``) to an array of ``B`` replicate maxima.  p-values are
    ``(1 + #{null >= observed}) / (B + 1)``.
    """

    B: int
    seed: int
    observed: dict
    null: dict

    def p_value(self, channel: str = "m") -> float:
        obs = self.observed[channel]
        draws = self.null[channel]
        if not np.isfinite(obs):
            return float("nan")
        return float((1 + np.count_nonzero(draws >= obs)) / (self.B + 1))

    def critical_value(self, alpha: float, channel: str = "m") -> float:
        """Upper ``alpha`` quantile of the null maxima (linear interpolation)."""
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        return float(np.nanquantile(self.null[channel], 1 - alpha, method="linear"))


def null_maxima(g: SimilarityGraph, orderings, moments: NullMoments, n0: int, n1: int) -> dict:
    """Window maxima of every channel for a ``(B, n)`` batch of orderings."""
    n = g.n
    ms = moments.second_order(np.arange(1, n))
    r1, r2, rin = edge_count_profiles(g, orderings, check=False)
    z_w, z_d, z_in, z_t, m = standardize(r1, r2, rin, ms, n, moments.within_enabled)
    sl = slice(n0 - 1, n1)

    def wmax(a):
        a = a[:, sl]
        out = np.full(a.shape[0], np.nan)
        ok = ~np.all(np.isnan(a), axis=1)
        out[ok] = np.nanmax(a[ok], axis=1)
        return out

    return {
        "m": wmax(m),
        "out_w": wmax(z_w),
        "out_d": wmax(np.abs(z_d)),
        "in": wmax(np.abs(z_in)),
        "in_tilde": wmax(np.abs(z_t)),
    }


def _check_window(n: int, n0: int, n1: int):
    if not 1 <= n0 <= n1 <= n - 1:
        raise ValueError(f"need 1 <= n0 <= n1 <= n-1, got [{n0}, {n1}] with n={n}")


def permutation_test(
    g: SimilarityGraph,
    n0: int,
    n1: int,
    B: int = 1000,
    seed: int = 0,
    moments: NullMoments | None = None,
    chunk: int = _CHUNK,
) -> PermutationResult:
    """Monte Carlo permutation test with ``B`` replicates."""
    if B < MIN_PERMUTATIONS:
        raise ValueError(f"need at least {MIN_PERMUTATIONS} permutations, got B={B}")
    n = g.n
    _check_window(n, n0, n1)
    moments = moments or NullMoments(g)
    observed = {k: float(v[0]) for k, v in null_maxima(g, np.arange(n)[None], moments, n0, n1).items()}
    parts = []
    for start in range(0, B, chunk):
        stop = min(B, start + chunk)
        perms = np.stack([individual_rng(seed, r).permutation(n) for r in range(start, stop)])
        parts.append(null_maxima(g, perms, moments, n0, n1))
    null = {k: np.concatenate([p[k] for p in parts]) for k in observed}
    return PermutationResult(B=B, seed=seed, observed=observed, null=null)


def exhaustive_null(
    g: SimilarityGraph, n0: int, n1: int, moments: NullMoments | None = None
) -> PermutationResult:
    """Exact permutation null over all ``n!`` orderings (``n <= 8``)."""
    n = g.n
    if n > _MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive enumeration limited to n <= {_MAX_EXHAUSTIVE}, got {n}")
    _check_window(n, n0, n1)
    moments = moments or NullMoments(g)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    observed = {k: float(v[0]) for k, v in null_maxima(g, np.arange(n)[None], moments, n0, n1).items()}
    null = null_maxima(g, perms, moments, n0, n1)
    return PermutationResult(B=math.factorial(n), seed=-1, observed=observed, null=null)
