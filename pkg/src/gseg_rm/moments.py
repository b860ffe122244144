"""Exact permutation-null moments of the edge counts.

Under the permutation null the first ``t`` positions receive a uniformly
random ``t``-subset of the ``n`` individuals.  With ``x_u`` the indicator that
individual ``u`` lands before the split, ``A`` the between-individual part of
``D`` (zero diagonal), ``deg = D_row`` and ``w = diag(D)``::

    R_out,1 = Q = 1/2 sum_{u,v} A_uv x_u x_v
    L       = sum_u deg_u x_u,    R_out,2 = |G_out| - L + Q
    R_in,1  = C = sum_u w_u x_u

so ``R_out,d = L - |G_out|`` and ``R_out,w = Q - b(t) L + b(t) |G_out|`` with
``b(t) = (t-1)/(n-2)``.  Every mixed moment ``E[Q^i L^j C^k]`` is a sum over
index tuples of a weight times ``E[x_S] = (t)_|S| / (n)_|S|`` (falling
factorials), so it equals ``sum_s (t)_s/(n)_s * T_s`` where ``T_s`` sums the
weights over tuples with exactly ``s`` distinct indices.  The ``T_s`` are
graph constants obtained once by Moebius inversion over index-coincidence
patterns; each pattern reduces to a small tensor contraction of ``A``,
``deg`` and ``w`` (edge sums, degree powers, paths, stars, triangles).

First and second moments are also given in closed form (the classical
edge-count formulas) and serve as the primary route for means and variances.
"""

from __future__ import annotations

import itertools
import math
import warnings
from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from .counts import edge_count_profiles
from .graph import SimilarityGraph

__all__ = [
    "UnsupportedSizeError",
    "MomentSet",
    "ThirdMoments",
    "NullMoments",
    "ExactNullMoments",
    "second_order_moments",
    "varrho",
    "third_moments",
    "enumerate_null_moments",
    "MAX_ENUMERATION_N",
]

MAX_ENUMERATION_N = 8
# Largest aggregate that float64 contractions reproduce exactly.
_EXACT_LIMIT = 2.0**53


class UnsupportedSizeError(ValueError):
    pass


# --------------------------------------------------------------------------
# Index-coincidence engine
# --------------------------------------------------------------------------

def _set_partitions(size: int):
    """Restricted growth strings: ``labels[i]`` is the block of position ``i``."""
    labels = [0] * size

    def rec(i, top):
        if i == size:
            yield tuple(labels)
            return
        for b in range(top + 2):
            labels[i] = b
            yield from rec(i + 1, max(top, b))

    if size == 0:
        yield ()
    else:
        yield from rec(0, -1)


@lru_cache(maxsize=None)
def _stirling2(s: int, j: int) -> int:
    if s == j:
        return 1
    if j == 0 or j > s:
        return 0
    return j * _stirling2(s - 1, j) + _stirling2(s - 1, j - 1)


@lru_cache(maxsize=None)
def _block_poly(size: int) -> tuple[int, ...]:
    # sum over refinements of one block of mu(pi, block) z^{#parts}
    return tuple(
        0 if j == 0 else _stirling2(size, j) * (-1) ** (j - 1) * math.factorial(j - 1)
        for j in range(size + 1)
    )


def _contract(arrays, labels) -> float:
    """Full contraction, split into connected components of shared labels."""
    parent = list(range(len(arrays)))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    seen: dict[str, int] = {}
    for f, lab in enumerate(labels):
        for ch in lab:
            if ch in seen:
                ra, rb = find(seen[ch]), find(f)
                if ra != rb:
                    parent[rb] = ra
            else:
                seen[ch] = f
    groups: dict[int, list[int]] = {}
    for f in range(len(arrays)):
        groups.setdefault(find(f), []).append(f)
    total = 1.0
    for members in groups.values():
        expr = ",".join(labels[f] for f in members) + "->"
        total *= float(np.einsum(expr, *(arrays[f] for f in members), optimize=True))
        if total == 0.0:
            return 0.0
    return total


def _distinct_index_sums(factors) -> list[int]:
    """``T[s]``: sum of the product weights over tuples with ``s`` distinct indices.

    ``factors`` is a list of ``(array, arity)`` with arity 1 (vector) or 2
    (symmetric matrix with zero diagonal).
    """
    arity = [a for _, a in factors]
    arrays = [arr for arr, _ in factors]
    slots = []
    for f, a in enumerate(arity):
        slots.append(list(range(sum(arity[:f]), sum(arity[:f]) + a)))
    size = sum(arity)
    T = [0] * (size + 1)
    letters = "abcdefghijklmnop"
    for rgs in _set_partitions(size):
        if any(a == 2 and rgs[s[0]] == rgs[s[1]] for a, s in zip(arity, slots)):
            continue  # zero diagonal
        labels = ["".join(letters[rgs[p]] for p in s) for s in slots]
        value = _contract(arrays, labels)
        if value == 0.0:
            continue
        if abs(value) >= _EXACT_LIMIT:
            warnings.warn("graph aggregate exceeds 2**53; third moments lose exactness", RuntimeWarning)
        poly = [1]
        for block in Counter(rgs).values():
            poly = np.convolve(poly, _block_poly(block)).tolist()
        v = int(round(value))
        for s, coef in enumerate(poly):
            T[s] += coef * v
    return T


def _falling_ratios(t, n: int, kmax: int) -> list:
    """``[(t)_s / (n)_s for s in 0..kmax]``, zero once ``s > n``."""
    t = np.asarray(t)
    out = [np.ones_like(t)]
    cur = np.ones_like(t)
    for s in range(kmax):
        if n - s <= 0:
            cur = np.zeros_like(t)
        else:
            cur = cur * (t - s) / (n - s)
        out.append(cur)
    return out


# --------------------------------------------------------------------------
# Moment containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentSet:
    """Null moments at one or more split points ``t`` (array-valued fields).

    Standard deviations are NaN-free; a zero value marks a degenerate
    statistic at that ``t``.  Skewnesses are NaN where undefined.
    """

    t: np.ndarray
    mu_out1: np.ndarray
    mu_out2: np.ndarray
    mu_out_w: np.ndarray
    mu_out_d: np.ndarray
    mu_in: np.ndarray
    var_out1: np.ndarray
    var_out2: np.ndarray
    var_in: np.ndarray
    cov_out1_out2: np.ndarray
    cov_out1_in: np.ndarray
    cov_out2_in: np.ndarray
    sigma_out_w: np.ndarray
    sigma_out_d: np.ndarray
    sigma_in: np.ndarray
    varrho: float
    gamma_out_w: Optional[np.ndarray] = None
    gamma_out_d: Optional[np.ndarray] = None
    gamma_in: Optional[np.ndarray] = None
    gamma_in_tilde: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ThirdMoments:
    t: np.ndarray
    e_out_w3: np.ndarray
    e_out_d3: np.ndarray
    e_in3: np.ndarray
    e_in2_out_d: np.ndarray
    e_in_out_d2: np.ndarray
    gamma_out_w: np.ndarray
    gamma_out_d: np.ndarray
    gamma_in: np.ndarray
    gamma_in_tilde: np.ndarray


# Affine forms in (Q, L, C) are dicts symbol -> coefficient; "1" is the constant.
class NullMoments:
    """Analytic null moments for one graph; all ``t``-independent work done once.

    Methods accept integer or real ``t`` (scalars or arrays); the formulas are
    rational in ``t`` so non-integer nodes are available for quadrature
    refinement.
    """

    def __init__(self, g: SimilarityGraph):
        n = g.n
        if n < 4:
            raise UnsupportedSizeError(f"null moments need n >= 4 individuals, got {n}")
        self.n = n
        D = np.asarray(g.D, dtype=np.int64)
        within = np.diag(D).copy()
        A = D - np.diag(within)
        deg = A.sum(axis=1)
        self.n_out = int(A.sum() // 2)
        self.n_in = int(within.sum())
        # exact integer aggregates
        self.sum_Duv2 = int((A.astype(object) ** 2).sum())  # over u != v, both orders
        self.sum_Du2 = int((deg.astype(object) ** 2).sum())
        self.sum_Duu2 = int((within.astype(object) ** 2).sum())
        self.sum_Duu_Du = int((within.astype(object) * deg.astype(object)).sum())
        # centred versions (exact rationals)
        self.ss_out = Fraction(n * self.sum_Du2 - 4 * self.n_out**2, n)
        self.ss_in = Fraction(n * self.sum_Duu2 - self.n_in**2, n)
        self.cross = Fraction(n * self.sum_Duu_Du - 2 * self.n_in * self.n_out, n)

        self._A = A.astype(float)
        self._deg = deg.astype(float)
        self._within = within.astype(float)
        self._tables: dict[tuple[int, int, int], list[int]] = {}

    # ---- closed-form first and second moments -----------------------------

    def second_order(self, t) -> MomentSet:
        n = self.n
        t = np.asarray(t, dtype=float)
        G_out, G_in = self.n_out, self.n_in
        ss_out, ss_in, cross = float(self.ss_out), float(self.ss_in), float(self.cross)
        half_sq = self.sum_Duv2 / 2.0
        tail = 2.0 / (n * (n - 1)) * G_out**2

        mu1 = t * (t - 1) / (n * (n - 1)) * G_out
        mu2 = (n - t) * (n - t - 1) / (n * (n - 1)) * G_out
        mu_in = t / n * G_in

        base = t * (t - 1) * (n - t) * (n - t - 1) / (n * (n - 1) * (n - 2) * (n - 3))
        # base * (t-2)/(n-t-1) written without the removable singularity
        base1 = t * (t - 1) * (t - 2) * (n - t) / (n * (n - 1) * (n - 2) * (n - 3))
        base2 = t * (n - t) * (n - t - 1) * (n - t - 2) / (n * (n - 1) * (n - 2) * (n - 3))
        var1 = base * (half_sq - tail) + base1 * ss_out
        var2 = base * (half_sq - tail) + base2 * ss_out
        cov12 = base * (half_sq - ss_out - tail)
        var_in = t * (n - t) / (n * (n - 1)) * ss_in
        cov1_in = t * (t - 1) * (n - t) / (n * (n - 1) * (n - 2)) * cross
        cov2_in = -t * (n - t) * (n - t - 1) / (n * (n - 1) * (n - 2)) * cross

        a = (n - t - 1) / (n - 2)
        b = (t - 1) / (n - 2)
        mu_w = a * mu1 + b * mu2
        mu_d = mu1 - mu2
        var_w = a * a * var1 + b * b * var2 + 2 * a * b * cov12
        var_d = var1 + var2 - 2 * cov12
        return MomentSet(
            t=t,
            mu_out1=mu1,
            mu_out2=mu2,
            mu_out_w=mu_w,
            mu_out_d=mu_d,
            mu_in=mu_in,
            var_out1=var1,
            var_out2=var2,
            var_in=var_in,
            cov_out1_out2=cov12,
            cov_out1_in=cov1_in,
            cov_out2_in=cov2_in,
            sigma_out_w=_safe_sqrt(var_w),
            sigma_out_d=_safe_sqrt(var_d),
            sigma_in=_safe_sqrt(var_in),
            varrho=self.varrho(),
        )

    def varrho(self) -> float:
        """Correlation of ``Z_out,d(t)`` and ``Z_in(t)``; NaN when degenerate."""
        denom = self.ss_out * self.ss_in
        if denom <= 0:
            return float("nan")
        return float(self.cross) / math.sqrt(float(denom))

    @property
    def within_enabled(self) -> bool:
        r = self.varrho()
        return math.isfinite(r) and abs(r) < 1.0

    # ---- exact higher moments ---------------------------------------------

    def _table(self, i: int, j: int, k: int) -> list[int]:
        key = (i, j, k)
        if key not in self._tables:
            factors = [(self._A, 2)] * i + [(self._deg, 1)] * j + [(self._within, 1)] * k
            self._tables[key] = _distinct_index_sums(factors)
        return self._tables[key]

    def raw(self, i: int, j: int, k: int, t) -> np.ndarray:
        """``E[Q^i L^j C^k]`` at ``t``."""
        T = self._table(i, j, k)
        t = np.asarray(t, dtype=np.longdouble)
        ratios = _falling_ratios(t, self.n, len(T) - 1)
        total = np.zeros_like(t)
        for Ts, r in zip(T, ratios):
            if Ts:
                total = total + np.longdouble(Ts) * r
        return total / 2**i

    def expect(self, forms, t) -> np.ndarray:
        """``E[prod of affine forms]`` for up to three forms in ``Q, L, C``."""
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape, dtype=np.longdouble)
        for combo in itertools.product(*(f.items() for f in forms)):
            counts = Counter(sym for sym, _ in combo if sym != "1")
            coef = np.ones(t.shape, dtype=np.longdouble)
            for _, c in combo:
                coef = coef * np.asarray(c, dtype=np.longdouble)
            total = total + coef * self.raw(counts["Q"], counts["L"], counts["C"], t)
        return total.astype(float)

    def forms(self, t, ms: Optional[MomentSet] = None) -> dict[str, dict]:
        """Raw and standardized statistics as affine forms in ``Q, L, C``."""
        n = self.n
        t = np.asarray(t, dtype=float)
        ms = self.second_order(t) if ms is None else ms
        b = (t - 1) / (n - 2)
        G = float(self.n_out)
        out = {
            "out1": {"Q": 1.0},
            "out2": {"Q": 1.0, "L": -1.0, "1": G},
            "in": {"C": 1.0},
            "out_w": {"Q": 1.0, "L": -b, "1": b * G},
            "out_d": {"L": 1.0, "1": -G},
        }
        with np.errstate(divide="ignore", invalid="ignore"):
            sw = np.where(ms.sigma_out_w > 0, ms.sigma_out_w, np.nan)
            sd = np.where(ms.sigma_out_d > 0, ms.sigma_out_d, np.nan)
            si = np.where(ms.sigma_in > 0, ms.sigma_in, np.nan)
            out["z_out_w"] = {"Q": 1 / sw, "L": -b / sw, "1": (b * G - ms.mu_out_w) / sw}
            out["z_out_d"] = {"L": 1 / sd, "1": (-G - ms.mu_out_d) / sd}
            out["z_in"] = {"C": 1 / si, "1": -ms.mu_in / si}
            r = ms.varrho
            if math.isfinite(r) and abs(r) < 1:
                s = math.sqrt(1 - r * r)
                zi, zd = out["z_in"], out["z_out_d"]
                out["z_in_tilde"] = {
                    "C": zi["C"] / s,
                    "L": -r * zd["L"] / s,
                    "1": (zi["1"] - r * zd["1"]) / s,
                }
            else:
                out["z_in_tilde"] = {"1": np.full_like(t, np.nan)}
        return out

    def third(self, t, ms: Optional[MomentSet] = None) -> ThirdMoments:
        t = np.asarray(t, dtype=float)
        ms = self.second_order(t) if ms is None else ms
        f = self.forms(t, ms)
        with np.errstate(invalid="ignore"):
            return ThirdMoments(
                t=t,
                e_out_w3=self.expect([f["out_w"]] * 3, t),
                e_out_d3=self.expect([f["out_d"]] * 3, t),
                e_in3=self.expect([f["in"]] * 3, t),
                e_in2_out_d=self.expect([f["in"], f["in"], f["out_d"]], t),
                e_in_out_d2=self.expect([f["in"], f["out_d"], f["out_d"]], t),
                gamma_out_w=self.expect([f["z_out_w"]] * 3, t),
                gamma_out_d=self.expect([f["z_out_d"]] * 3, t),
                gamma_in=self.expect([f["z_in"]] * 3, t),
                gamma_in_tilde=self.expect([f["z_in_tilde"]] * 3, t),
            )

    def moment_set(self, t=None) -> MomentSet:
        """Means, variances and skewnesses; default ``t = 1 .. n-1``."""
        if t is None:
            t = np.arange(1, self.n)
        ms = self.second_order(t)
        th = self.third(t, ms)
        return replace(
            ms,
            gamma_out_w=th.gamma_out_w,
            gamma_out_d=th.gamma_out_d,
            gamma_in=th.gamma_in,
            gamma_in_tilde=th.gamma_in_tilde,
        )

    def skewness(self, channel: str, t) -> np.ndarray:
        th = self.third(t)
        return {
            "out_w": th.gamma_out_w,
            "out_d": th.gamma_out_d,
            "in": th.gamma_in,
            "in_tilde": th.gamma_in_tilde,
        }[channel]


def _safe_sqrt(var):
    var = np.asarray(var, dtype=float)
    # variances of integer counts are either 0 or bounded well away from it
    return np.sqrt(np.where(var > 1e-9, var, 0.0))


# --------------------------------------------------------------------------
# Functional surface
# --------------------------------------------------------------------------

def _check_t(g: SimilarityGraph, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 1) or np.any(t_arr > g.n - 1):
        raise ValueError(f"t must lie in [1, n-1] = [1, {g.n - 1}]")


def second_order_moments(g: SimilarityGraph, t) -> MomentSet:
    _check_t(g, t)
    return NullMoments(g).second_order(t)


def varrho(g: SimilarityGraph) -> float:
    return NullMoments(g).varrho()


def third_moments(g: SimilarityGraph, t) -> ThirdMoments:
    _check_t(g, t)
    return NullMoments(g).third(t)


# --------------------------------------------------------------------------
# Enumeration oracle
# --------------------------------------------------------------------------

class ExactNullMoments:
    """Moments of ``(R_out,1, R_out,2, R_in,1)`` over all ``n!`` orderings.

    ``r_out1`` etc. hold the counts for every ordering, shape ``(n!, n-1)``.
    Raw moments are exact ``Fraction`` values.
    """

    def __init__(self, g: SimilarityGraph):
        n = g.n
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
        self.n = n
        self.count = len(perms)
        self.r_out1, self.r_out2, self.r_in1 = edge_count_profiles(g, perms, check=False)

    def raw_moment(self, a: int, b: int, c: int) -> list[Fraction]:
        """``E[R_out,1^a R_out,2^b R_in,1^c]`` for ``t = 1 .. n-1``."""
        prod = (
            self.r_out1.astype(object) ** a
            * self.r_out2.astype(object) ** b
            * self.r_in1.astype(object) ** c
        )
        return [Fraction(int(s), self.count) for s in prod.sum(axis=0)]

    def raw_mixed(self, coeff_list, t_index: int) -> Fraction:
        """``E[prod_i X_i]`` for ``X_i = c0 + c1 R_out,1 + c2 R_out,2 + c3 R_in,1``."""
        cols = [c[:, t_index].astype(object) for c in (self.r_out1, self.r_out2, self.r_in1)]
        prod = np.ones(self.count, dtype=object)
        scale = 1
        for c in coeff_list:
            c = [Fraction(x) for x in c]
            den = math.lcm(*(x.denominator for x in c))
            c0, *rest = (int(x * den) for x in c)
            prod = prod * (c0 + sum(ci * col for ci, col in zip(rest, cols)))
            scale *= den
        return Fraction(int(prod.sum()), scale * self.count)

    def central(self, coeffs, order: int, t_index: int) -> Fraction:
        """``E[(X - E X)^order]`` for ``X = c1 R_out,1 + c2 R_out,2 + c3 R_in,1``.

        ``coeffs`` are exact (``Fraction``/int) coefficients.
        """
        return self.central_mixed([coeffs] * order, t_index)

    def central_mixed(self, coeff_list, t_index: int) -> Fraction:
        """``E[prod_i (X_i - E X_i)]`` for linear combinations ``X_i``."""
        cols = [c[:, t_index].astype(object) for c in (self.r_out1, self.r_out2, self.r_in1)]
        N = self.count
        prod = np.ones(N, dtype=object)
        scale = 1
        for c in coeff_list:
            c = [Fraction(x) for x in c]
            den = math.lcm(*(x.denominator for x in c))
            vals = sum(int(x * den) * col for x, col in zip(c, cols))
            # N * (X - mean) in integers
            prod = prod * (vals * N - vals.sum())
            scale *= den * N
        return Fraction(int(prod.sum()), scale * N)


def enumerate_null_moments(g: SimilarityGraph, max_order: int = 3) -> ExactNullMoments:
    """Exhaustive permutation oracle; refuses ``n > 8``."""
    if g.n > MAX_ENUMERATION_N:
        raise UnsupportedSizeError(
            f"enumeration over n! orderings is limited to n <= {MAX_ENUMERATION_N}, got n={g.n}"
        )
    if max_order > 3:
        raise ValueError("moments above order 3 are not supported")
    return ExactNullMoments(g)
