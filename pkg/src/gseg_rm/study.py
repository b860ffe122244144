"""Simulation settings and the power study harness.

Replicate seeds are derived from ``(seed, family, setting, d, replicate)``
through :class:`numpy.random.SeedSequence`, so any subset of replicates can
be recomputed in isolation.  With a checkpoint file, every finished
replicate is appended as one CSV row; rerunning with the same file skips
the replicates already recorded.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .dataset import FAMILIES, GeneratorConfig, generate
from .detect import detect
from .graph import DEFAULT_K

__all__ = ["SETTINGS", "setting_config", "replicate_seed", "ReplicateRecord", "PowerRow", "power_study"]

_NULL = dict(rho=(0.2, 0.2), beta=(0.0, 0.0), epsilon=(1.0, 1.0), nu_lo=(1.0, 1.0), nu_hi=(1.2, 1.2))

# family -> setting number -> generator parameters (pre-change, post-change)
SETTINGS = {
    "gaussian": {
        1: _NULL,
        2: {**_NULL, "rho": (0.1, 0.3)},
        3: {**_NULL, "beta": (0.0, 0.3)},
        4: {**_NULL, "epsilon": (1.0, 1.1), "nu_lo": (1.0, 1.1), "nu_hi": (1.1, 1.2)},
    },
    "lognormal": {
        1: _NULL,
        2: {**_NULL, "rho": (0.1, 0.6)},
        3: {**_NULL, "beta": (0.0, 0.4)},
        4: {**_NULL, "epsilon": (1.0, 1.2), "nu_lo": (1.0, 1.2), "nu_hi": (1.1, 1.3)},
    },
    "gaussian_mixture": {
        1: _NULL,
        2: {**_NULL, "rho": (0.1, 0.4)},
        3: {**_NULL, "beta": (0.0, 0.45)},
        4: {**_NULL, "epsilon": (1.0, 1.1), "nu_lo": (1.0, 1.2), "nu_hi": (1.1, 1.3)},
    },
}

SETTING_NAMES = {1: "null", 2: "within", 3: "location", 4: "scale"}


def setting_config(family: str, setting: int, tau: Optional[int], seed: int) -> GeneratorConfig:
    if family not in SETTINGS:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    if setting not in SETTINGS[family]:
        raise ValueError(f"setting must be 1..4, got {setting}")
    return GeneratorConfig(family=family, tau=tau, seed=seed, **SETTINGS[family][setting])


def replicate_seed(seed: int, family: str, setting: int, d: int, replicate: int) -> int:
    key = [seed, FAMILIES.index(family), setting, d, replicate]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class ReplicateRecord:
    family: str
    setting: int
    d: int
    replicate: int
    seed: int
    tau_hat: int
    m_star: float
    p_value: float
    reject: bool
    localized: bool

    FIELDS = ("family", "setting", "d", "replicate", "seed", "tau_hat", "m_star", "p_value", "reject", "localized")

    def to_row(self) -> list[str]:
        return [
            self.family, str(self.setting), str(self.d), str(self.replicate), str(self.seed),
            str(self.tau_hat), repr(float(self.m_star)), repr(float(self.p_value)),
            str(int(self.reject)), str(int(self.localized)),
        ]

    @classmethod
    def from_row(cls, row: dict) -> "ReplicateRecord":
        return cls(
            family=row["family"], setting=int(row["setting"]), d=int(row["d"]),
            replicate=int(row["replicate"]), seed=int(row["seed"]), tau_hat=int(row["tau_hat"]),
            m_star=float(row["m_star"]), p_value=float(row["p_value"]),
            reject=row["reject"] == "1", localized=row["localized"] == "1",
        )


@dataclass(frozen=True)
class PowerRow:
    family: str
    setting: int
    d: int
    replicates: int
    rejections: int
    localized: int


def _load_checkpoint(path: Path) -> dict:
    done = {}
    if not path.exists() or path.stat().st_size == 0:
        return done
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ReplicateRecord.FIELDS:
            raise ValueError(f"checkpoint {path} has unexpected header {reader.fieldnames}")
        for row in reader:
            try:
                rec = ReplicateRecord.from_row(row)
            except (KeyError, ValueError, TypeError):
                continue  # a torn final line from an interrupted run
            done[(rec.family, rec.setting, rec.d, rec.replicate, rec.seed)] = rec
    return done


def run_replicate(family, setting, d, replicate, seed, n, ell, tau, alpha, k, correction, radius):
    rs = replicate_seed(seed, family, setting, d, replicate)
    ds = generate(setting_config(family, setting, tau, rs), n, ell, d)
    res = detect(ds, k=k, alpha=alpha, correction=correction)
    loc = res.reject and abs(res.tau_hat - tau) <= radius
    return ReplicateRecord(family, setting, d, replicate, rs, res.tau_hat, res.m_star, res.p_value, res.reject, bool(loc))


def power_study(
    family: str = "gaussian",
    settings: Iterable[int] = (1, 2, 3, 4),
    dims: Iterable[int] = (40,),
    replicates: int = 100,
    n: int = 100,
    ell: int = 5,
    tau: int = 50,
    alpha: float = 0.05,
    k: int = DEFAULT_K,
    correction: str = "A2",
    seed: int = 0,
    radius: int = 10,
    checkpoint: Optional[os.PathLike] = None,
) -> tuple[list[PowerRow], list[ReplicateRecord]]:
    """Rejection and localization counts per (setting, d).

    A rejection counts as localized when ``|tau_hat - tau| <= radius``.
    """
    if replicates < 0:
        raise ValueError("replicates must be >= 0")
    done = {}
    writer = fh = None
    if checkpoint is not None:
        path = Path(checkpoint)
        done = _load_checkpoint(path)
        fresh = not path.exists() or path.stat().st_size == 0
        torn = not fresh and not path.read_bytes().endswith(b"\n")
        fh = open(path, "a", newline="")
        if torn:
            fh.write("\n")
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(ReplicateRecord.FIELDS)
            fh.flush()
    rows, records = [], []
    try:
        for d in dims:
            for s in settings:
                recs = []
                for r in range(replicates):
                    key = (family, s, d, r, replicate_seed(seed, family, s, d, r))
                    rec = done.get(key)
                    if rec is None:
                        rec = run_replicate(family, s, d, r, seed, n, ell, tau, alpha, k, correction, radius)
                        if writer is not None:
                            writer.writerow(rec.to_row())
                            fh.flush()
                    recs.append(rec)
                rows.append(
                    PowerRow(family, s, d, replicates, sum(x.reject for x in recs), sum(x.localized for x in recs))
                )
                records.extend(recs)
    finally:
        if fh is not None:
            fh.close()
    return rows, records
