"""Multiple change-points by recursive binary segmentation.

Each segment gets its own k-MST and a fresh single change-point test.  A
significant split at ``tau_hat`` (relative to the segment) yields children
``[start, start + tau_hat)`` and ``[start + tau_hat, stop)``.

The scan window inside a segment of length ``L`` is
``n0 = max(ceil(window * L), min_seg)``, ``n1 = L - n0``, so every reported
change-point leaves pieces of at least ``min_seg`` individuals.  Segments
of ``2 * min_seg`` individuals or fewer are not tested (their window would
hold at most one candidate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .dataset import PanelDataset
from .detect import detect
from .graph import DEFAULT_K

__all__ = ["ChangePoint", "SegmentNode", "SegmentationResult", "binary_segmentation", "default_min_seg"]


@dataclass(frozen=True)
class ChangePoint:
    """``position`` individuals precede the change (global, 0-based split)."""

    position: int
    p_value: float
    channel_p_values: dict
    depth: int


@dataclass(frozen=True)
class SegmentNode:
    start: int
    stop: int
    depth: int
    status: str  # "split", "not significant", "too short"
    p_value: Optional[float] = None
    tau_hat: Optional[int] = None
    alpha: Optional[float] = None


@dataclass(frozen=True)
class SegmentationResult:
    n: int
    alpha: float
    min_seg: int
    bonferroni: bool
    change_points: list = field(default_factory=list)
    tree: list = field(default_factory=list)

    @property
    def positions(self) -> list[int]:
        return [c.position for c in self.change_points]

    def segments(self) -> list[tuple[int, int]]:
        cuts = [0, *self.positions, self.n]
        return list(zip(cuts[:-1], cuts[1:]))


def default_min_seg(n: int, window: float = 0.05) -> int:
    return max(4, math.ceil(window * n - 1e-9))


def binary_segmentation(
    ds: PanelDataset,
    alpha: float = 0.05,
    min_seg: Optional[int] = None,
    k: int = DEFAULT_K,
    window: float = 0.05,
    correction: str = "A2",
    bonferroni: bool = False,
) -> SegmentationResult:
    """Recursive binary segmentation with the single change-point test.

    With ``bonferroni=True`` a segment at recursion depth ``j`` is tested at
    ``alpha / 2**j``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = ds.n
    min_seg = default_min_seg(n, window) if min_seg is None else int(min_seg)
    if min_seg < 4:
        raise ValueError(f"min_seg must be >= 4 (moment formulas need 4 individuals), got {min_seg}")

    points: list[ChangePoint] = []
    tree: list[SegmentNode] = []
    stack = [(0, n, 0)]
    while stack:
        start, stop, depth = stack.pop()
        length = stop - start
        level_alpha = alpha / 2**depth if bonferroni else alpha
        if length <= 2 * min_seg:
            tree.append(SegmentNode(start, stop, depth, "too short"))
            continue
        n0 = max(math.ceil(window * length - 1e-9), min_seg)
        res = detect(ds.segment(start, stop), k=k, n0=n0, n1=length - n0, alpha=level_alpha, correction=correction)
        if res.p_value < level_alpha:
            pos = start + res.tau_hat
            tree.append(SegmentNode(start, stop, depth, "split", res.p_value, res.tau_hat, level_alpha))
            points.append(
                ChangePoint(pos, res.p_value, {c: r.p_value for c, r in res.channels.items()}, depth)
            )
            # right child pushed first so the left one is processed first
            stack.append((pos, stop, depth + 1))
            stack.append((start, pos, depth + 1))
        else:
            tree.append(SegmentNode(start, stop, depth, "not significant", res.p_value, res.tau_hat, level_alpha))
    points.sort(key=lambda c: c.position)
    tree.sort(key=lambda s: (s.start, s.depth))
    return SegmentationResult(n, alpha, min_seg, bonferroni, points, tree)
