"""Analytic tail probabilities of the scan statistics.

``P(max_{n0<=t<=n1} Z(t) > b)`` is approximated by
``c * b * phi(b) * int K(nx) h(n, x) nu(b sqrt(2 h(n, x) / n)) dx`` over
``[n0/n, n1/n]`` with ``c = 1`` for the one-sided weighted statistic and
``c = 2`` for the absolute-value channels.  ``K = 1`` gives the plain
approximation (``A1``); the skewness-corrected version (``A2``) uses the
exact null skewness at each node.

Quadrature is composite Simpson on nodes aligned with integer ``t``
(``refine`` subdivides each unit step).  Nodes where the skewness correction
is undefined (``1 + 2 gamma b <= 0`` or a degenerate statistic) contribute
zero; their count is reported.  Small thresholds use a monotone envelope
(see ``tail_approx``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erf
from scipy.stats import norm

from .moments import NullMoments

__all__ = [
    "CHANNELS",
    "NumericalError",
    "TailApprox",
    "nu",
    "h_functions",
    "tail_approx",
    "pvalue_a1",
    "pvalue_a2",
    "combined_pvalue",
    "critical_value",
]

CHANNELS = ("out_w", "out_d", "in", "in_tilde")
COMBINED = ("out_w", "out_d", "in_tilde")
_TWO_SIDED = {"out_w": False, "out_d": True, "in": True, "in_tilde": True}


class NumericalError(FloatingPointError):
    pass


def nu(x):
    """Siegmund's overshoot factor ``nu(x)``; equals 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("nu is defined for x >= 0")
    half = x / 2.0
    safe = np.where(x > 0, x, 1.0)
    # (2/x)(Phi(x/2) - 1/2) written via erf to avoid cancellation near 0
    numer = erf(safe / (2.0 * math.sqrt(2.0))) / safe
    denom = half * norm.cdf(half) + norm.pdf(half)
    out = np.where(x > 0, numer / denom, 1.0)
    return out if out.ndim else float(out)


def h_functions(n: int, x):
    """Finite-sample ``(h_out_w, h_out_d, h_in)`` at ``x`` in (0, 1)."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise ValueError("h functions need 0 < x < 1")
    q = x * (1.0 - x)
    denom = 2.0 * q * (n * n * x * x - n * n * x + n - 1)
    if np.any(denom == 0):
        raise ValueError("h_out_w denominator vanishes")
    h_w = (n - 1) * (2 * n * x * x - 2 * n * x + 1) / denom
    h_d = 1.0 / (2.0 * q)
    return h_w, h_d, h_d.copy()


@dataclass(frozen=True)
class TailApprox:
    p_value: float
    raw: float
    channel: str
    correction: str
    nodes: int
    dropped: int = 0
    fell_back: bool = False


def _grid(n: int, n0: int, n1: int, refine: int) -> np.ndarray:
    if not 1 <= n0 < n1 <= n - 1:
        raise ValueError(f"need 1 <= n0 < n1 <= n-1, got n0={n0}, n1={n1}, n={n}")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    return n0 + np.arange((n1 - n0) * refine + 1) / refine


@lru_cache(maxsize=64)
def _skewness_nodes(moments: NullMoments, channel: str, n0: int, n1: int, refine: int):
    g = moments.skewness(channel, _grid(moments.n, n0, n1, refine))
    g.setflags(write=False)
    return g


def _kernel(b: float, n: int, t: np.ndarray, channel: str) -> np.ndarray:
    x = t / n
    h_w, h_d, h_in = h_functions(n, x)
    h = {"out_w": h_w, "out_d": h_d, "in": h_in, "in_tilde": h_in}[channel]
    return h * nu(b * np.sqrt(2.0 * h / n)), x


def _skew_factor(b: float, gamma: np.ndarray):
    valid = np.isfinite(gamma) & (1.0 + 2.0 * gamma * b > 0)
    g = np.where(valid, gamma, 0.0)
    s = np.sqrt(np.where(valid, 1.0 + 2.0 * g * b, 1.0))
    theta = 2.0 * b / (1.0 + s)  # = (-1 + s) / gamma, stable as gamma -> 0
    # 1 + gamma * theta = s, so the denominator sqrt(1 + gamma * theta) is sqrt(s)
    K = np.exp(0.5 * (b - theta) ** 2 + g * theta**3 / 6.0) / np.sqrt(s)
    return np.where(valid, K, 0.0), int((~valid).sum())


def _raw_tail(b, n, n0, n1, channel, correction, moments, refine):
    t = _grid(n, n0, n1, refine)
    y, x = _kernel(b, n, t, channel)
    dropped = 0
    fell_back = False
    if correction == "A2":
        K, dropped = _skew_factor(b, _skewness_nodes(moments, channel, n0, n1, refine))
        if dropped == len(t):
            fell_back = True
        else:
            y = y * K
    if not np.all(np.isfinite(y)):
        bad = t[~np.isfinite(y)]
        raise NumericalError(
            f"non-finite integrand for channel {channel} at b={b}: t={bad[:5].tolist()}"
        )
    factor = 2.0 if _TWO_SIDED[channel] else 1.0
    raw = factor * b * norm.pdf(b) * simpson(y, x=x)
    return float(raw), len(t), dropped, fell_back


@lru_cache(maxsize=256)
def _peak(n, n0, n1, channel, correction, moments, refine) -> float:
    res = minimize_scalar(
        lambda b: -_raw_tail(b, n, n0, n1, channel, correction, moments, refine)[0],
        bounds=(0.05, 4.0),
        method="bounded",
        options={"xatol": 1e-6},
    )
    return float(res.x)


def tail_approx(
    b: float,
    n: int,
    n0: int,
    n1: int,
    channel: str,
    correction: str = "A1",
    moments: NullMoments | None = None,
    refine: int = 1,
) -> TailApprox:
    """Tail probability of one channel's scan maximum above ``b``.

    The approximation is built for large ``b``; its leading ``b * phi(b)``
    factor vanishes as ``b -> 0``.  Below the threshold ``b_peak`` that
    maximizes the raw approximation the reported p-value is held at its
    value at ``b_peak``, so p-values never decrease as the threshold drops.
    """
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}")
    if correction not in ("A1", "A2"):
        raise ValueError(f"unknown correction {correction!r}")
    if not b > 0:
        raise ValueError(f"threshold b must be positive, got {b}")
    _grid(n, n0, n1, refine)
    if correction == "A2":
        if moments is None:
            raise ValueError("A2 needs the graph's null moments")
        if moments.n != n:
            raise ValueError(f"moments are for n={moments.n}, query has n={n}")
    raw, nodes, dropped, fell_back = _raw_tail(b, n, n0, n1, channel, correction, moments, refine)
    envelope = raw
    peak = _peak(n, n0, n1, channel, correction, moments, refine)
    if b < peak:
        envelope = _raw_tail(peak, n, n0, n1, channel, correction, moments, refine)[0]
    return TailApprox(
        p_value=float(min(max(envelope, 0.0), 1.0)),
        raw=raw,
        channel=channel,
        correction=correction,
        nodes=nodes,
        dropped=dropped,
        fell_back=fell_back,
    )


def pvalue_a1(b: float, n: int, n0: int, n1: int, channel: str, refine: int = 1) -> float:
    return tail_approx(b, n, n0, n1, channel, "A1", refine=refine).p_value


def pvalue_a2(
    b: float, n0: int, n1: int, channel: str, moments: NullMoments, refine: int = 1
) -> float:
    return tail_approx(b, moments.n, n0, n1, channel, "A2", moments, refine).p_value


def available_channels(moments: NullMoments | None) -> tuple[str, ...]:
    if moments is None or moments.within_enabled:
        return COMBINED
    return ("out_w", "out_d")


def combined_pvalue(
    b: float,
    n: int,
    n0: int,
    n1: int,
    moments: NullMoments | None = None,
    correction: str = "A2",
    refine: int = 1,
) -> float:
    """Tail probability of ``max_t M(t)`` from independent channel tails.

    Channels disabled by a degenerate within-individual graph are left out.
    """
    survive = 1.0
    for ch in available_channels(moments):
        p = tail_approx(b, n, n0, n1, ch, correction, moments, refine).p_value
        survive *= 1.0 - p
    return 1.0 - survive


def critical_value(
    alpha: float,
    channel: str,
    correction: str = "A1",
    n: int | None = None,
    n0: int | None = None,
    n1: int | None = None,
    moments: NullMoments | None = None,
    bracket: tuple[float, float] = (0.5, 10.0),
) -> float:
    """Threshold ``b`` with tail probability ``alpha``; ``channel='combined'`` allowed."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n is None:
        if moments is None:
            raise ValueError("need n or moments")
        n = moments.n
    if channel == "combined":
        f = lambda b: combined_pvalue(b, n, n0, n1, moments, correction) - alpha
    else:
        f = lambda b: tail_approx(b, n, n0, n1, channel, correction, moments).p_value - alpha
    lo, hi = bracket
    f_lo, f_hi = f(lo), f(hi)
    if f_lo * f_hi > 0:
        raise ValueError(
            f"no sign change on [{lo}, {hi}]: p-alpha = {f_lo:.3g} at {lo}, {f_hi:.3g} at {hi}"
        )
    return brentq(f, lo, hi, xtol=1e-12, rtol=1e-14)
