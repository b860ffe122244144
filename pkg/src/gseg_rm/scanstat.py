"""Standardized scan processes and the max-type statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .counts import EdgeCountProfile
from .moments import MomentSet, NullMoments

__all__ = [
    "ScanProfile",
    "default_window",
    "standardize",
    "standardized_scans",
    "max_statistic",
]


@dataclass(frozen=True)
class ScanProfile:
    """Standardized statistics for ``t = 1 .. n-1`` (NaN where undefined).

    ``m[t] = max(z_out_w, |z_out_d|, |z_in_tilde|)`` over the enabled
    channels.
    """

    n: int
    z_out_w: np.ndarray
    z_out_d: np.ndarray
    z_in: np.ndarray
    z_in_tilde: np.ndarray
    m: np.ndarray
    varrho: float
    within_enabled: bool
    warnings: tuple = ()

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.n)

    def channel(self, name: str) -> np.ndarray:
        """The scanned form of a channel: signed for out_w, absolute otherwise."""
        if name == "out_w":
            return self.z_out_w
        return np.abs({"out_d": self.z_out_d, "in": self.z_in, "in_tilde": self.z_in_tilde}[name])


def default_window(n: int, fraction: float = 0.05) -> tuple[int, int]:
    """``n0 = ceil(fraction * n)`` (at least 1) and ``n1 = n - n0``."""
    if not 0 < fraction < 0.5:
        raise ValueError(f"window fraction must lie in (0, 0.5), got {fraction}")
    n0 = max(1, math.ceil(fraction * n - 1e-9))
    return n0, n - n0


def _nan_div(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def standardize(r_out1, r_out2, r_in1, ms: MomentSet, n: int, within_enabled: bool):
    """Vectorized standardization; inputs are ``(..., n-1)`` count arrays."""
    t = ms.t
    r_out1 = np.asarray(r_out1, dtype=float)
    r_out2 = np.asarray(r_out2, dtype=float)
    r_in1 = np.asarray(r_in1, dtype=float)
    r_w = ((n - t - 1) * r_out1 + (t - 1) * r_out2) / (n - 2)
    z_w = _nan_div(r_w - ms.mu_out_w, ms.sigma_out_w)
    z_d = _nan_div(r_out1 - r_out2 - ms.mu_out_d, ms.sigma_out_d)
    z_in = _nan_div(r_in1 - ms.mu_in, ms.sigma_in)
    if within_enabled:
        rho = ms.varrho
        z_tilde = (z_in - rho * z_d) / math.sqrt(1.0 - rho * rho)
        stack = (z_w, np.abs(z_d), np.abs(z_tilde))
    else:
        z_tilde = np.full_like(z_in, np.nan)
        stack = (z_w, np.abs(z_d))
    m = stack[0]
    for s in stack[1:]:
        m = np.fmax(m, s)
    return z_w, z_d, z_in, z_tilde, m


def standardized_scans(profile: EdgeCountProfile, moments: NullMoments) -> ScanProfile:
    n = profile.n
    ms = moments.second_order(profile.t)
    warn = []
    within = moments.within_enabled
    if not within:
        warn.append(
            "within-individual channel disabled (no within edges or |varrho| = 1); "
            "M(t) uses the between-individual statistics only"
        )
    z_w, z_d, z_in, z_tilde, m = standardize(
        profile.r_out1, profile.r_out2, profile.r_in1, ms, n, within
    )
    return ScanProfile(
        n=n,
        z_out_w=z_w,
        z_out_d=z_d,
        z_in=z_in,
        z_in_tilde=z_tilde,
        m=m,
        varrho=ms.varrho,
        within_enabled=within,
        warnings=tuple(warn),
    )


def window_argmax(values: np.ndarray, n0: int, n1: int) -> tuple[int, float]:
    """Smallest maximizing ``t`` in ``[n0, n1]`` of an array indexed by ``t - 1``."""
    seg = np.asarray(values)[n0 - 1 : n1]
    if seg.size == 0 or np.all(np.isnan(seg)):
        raise ValueError(f"no valid statistic in window [{n0}, {n1}]")
    i = int(np.nanargmax(seg))
    return n0 + i, float(seg[i])


def max_statistic(scan: ScanProfile, n0: int, n1: int) -> tuple[int, float]:
    """``(tau_hat, M*)``; ties resolve to the smallest ``t``."""
    if not 1 <= n0 <= n1 <= scan.n - 1:
        raise ValueError(f"need 1 <= n0 <= n1 <= n-1, got [{n0}, {n1}] with n={scan.n}")
    return window_argmax(scan.m, n0, n1)
