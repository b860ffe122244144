"""Single change-point test on a panel: graph, scan, max statistic, p-values."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .counts import edge_count_profile
from .dataset import PanelDataset
from .graph import DEFAULT_K, SimilarityGraph, similarity_graph
from .moments import NullMoments
from .permutation import permutation_test
from .pvalue import available_channels, tail_approx
from .scanstat import ScanProfile, default_window, max_statistic, standardized_scans, window_argmax

__all__ = ["ChannelResult", "ScanResult", "detect", "detect_graph"]


@dataclass(frozen=True)
class ChannelResult:
    """One constituent statistic.

    ``at_tau`` is its (signed) value at the change-point estimate; ``max``
    and ``argmax`` describe its own window maximum (absolute value for the
    two-sided channels) and ``p_value`` is the tail probability of that
    maximum.
    """

    name: str
    at_tau: float
    max: float
    argmax: int
    p_value: float
    dropped_nodes: int = 0


@dataclass(frozen=True)
class ScanResult:
    n: int
    n0: int
    n1: int
    tau_hat: int
    m_star: float
    p_value: float
    alpha: float
    correction: str
    channels: dict
    n_out: int
    n_in: int
    varrho: float
    within_enabled: bool
    permutation_p: Optional[float] = None
    permutations: int = 0
    warnings: tuple = ()
    scan: Optional[ScanProfile] = field(default=None, repr=False, compare=False)

    @property
    def reject(self) -> bool:
        p = self.p_value if self.permutation_p is None else self.permutation_p
        return bool(p < self.alpha)

    @property
    def degenerate(self) -> bool:
        return bool(self.warnings)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("scan", "channels", "warnings")}
        d["channels"] = {k: asdict(c) for k, c in self.channels.items()}
        d["warnings"] = list(self.warnings)
        d["decision"] = "reject" if self.reject else "fail to reject"
        return _json_safe(d)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _channel_p(b, n, n0, n1, name, correction, moments, warn):
    if not np.isfinite(b):
        return float("nan"), 0
    if b <= 0:
        return 1.0, 0
    approx = tail_approx(b, n, n0, n1, name, correction, moments)
    if approx.fell_back:
        warn.append(f"{name}: every quadrature node invalid for the skewness correction; used A1")
        approx = tail_approx(b, n, n0, n1, name, "A1")
    return approx.p_value, approx.dropped


def detect_graph(
    g: SimilarityGraph,
    n0: Optional[int] = None,
    n1: Optional[int] = None,
    alpha: float = 0.05,
    correction: str = "A2",
    permutations: int = 0,
    seed: int = 0,
    window: float = 0.05,
) -> ScanResult:
    """Run the test on a prebuilt graph; ``n0``/``n1`` default to ``default_window``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = g.n
    d0, d1 = default_window(n, window)
    n0 = d0 if n0 is None else n0
    n1 = d1 if n1 is None else n1
    moments = NullMoments(g)
    scan = standardized_scans(edge_count_profile(g), moments)
    tau, m_star = max_statistic(scan, n0, n1)
    warn = list(scan.warnings)

    channels = {}
    survive = 1.0
    combined = available_channels(moments)
    signed = {"out_w": scan.z_out_w, "out_d": scan.z_out_d, "in": scan.z_in, "in_tilde": scan.z_in_tilde}
    for name, values in signed.items():
        if name in ("in", "in_tilde") and not moments.within_enabled:
            continue
        arg, top = window_argmax(scan.channel(name), n0, n1)
        p, dropped = _channel_p(top, n, n0, n1, name, correction, moments, warn)
        channels[name] = ChannelResult(name, float(values[tau - 1]), top, arg, p, dropped)
    # p_M is the tail of max_t M(t) at the observed maximum, not at each channel's own max
    for name in combined:
        p, _ = _channel_p(m_star, n, n0, n1, name, correction, moments, warn)
        survive *= 1.0 - p
    p_m = 1.0 - survive

    perm_p = None
    if permutations:
        perm = permutation_test(g, n0, n1, B=permutations, seed=seed, moments=moments)
        perm_p = perm.p_value("m")

    return ScanResult(
        n=n,
        n0=n0,
        n1=n1,
        tau_hat=tau,
        m_star=m_star,
        p_value=p_m,
        alpha=alpha,
        correction=correction,
        channels=channels,
        n_out=g.n_out,
        n_in=g.n_in,
        varrho=moments.varrho(),
        within_enabled=moments.within_enabled,
        permutation_p=perm_p,
        permutations=permutations,
        warnings=tuple(dict.fromkeys(warn)),
        scan=scan,
    )


def detect(
    ds: PanelDataset,
    k: int = DEFAULT_K,
    n0: Optional[int] = None,
    n1: Optional[int] = None,
    alpha: float = 0.05,
    correction: str = "A2",
    permutations: int = 0,
    seed: int = 0,
    window: float = 0.05,
) -> ScanResult:
    """Build the k-MST on ``ds`` and run :func:`detect_graph`."""
    g = similarity_graph(ds, k)
    return detect_graph(g, n0, n1, alpha, correction, permutations, seed, window)
