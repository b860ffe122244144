"""Panel data model, CSV ingestion and the synthetic repeated-measures generators.

A panel holds ``n`` individuals observed in time order, each carrying ``ell``
repeated ``d``-dimensional measurements.  Measurements are flattened
individual-major, so node ``i`` (0-based) belongs to individual ``i // ell``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "PanelDataset",
    "GeneratorConfig",
    "DatasetError",
    "PanelStructureError",
    "PanelParseError",
    "ConfigError",
    "load_panel_csv",
    "write_panel_csv",
    "generate",
    "generate_with_latent",
    "individual_rng",
]


class DatasetError(ValueError):
    """Base class for ingestion and generator failures."""


class PanelStructureError(DatasetError):
    pass


class PanelParseError(DatasetError):
    pass


class ConfigError(DatasetError):
    pass


@dataclass(frozen=True, eq=False)
class PanelDataset:
    values: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise PanelStructureError(
                f"panel values must have shape (n, ell, d), got {values.shape}"
            )
        n, ell, d = values.shape
        if n < 2 or ell < 1 or d < 1:
            raise PanelStructureError(f"need n >= 2, ell >= 1, d >= 1; got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise PanelStructureError("panel contains non-finite values")
        if self.labels is not None and len(self.labels) != n:
            raise PanelStructureError(f"{len(self.labels)} labels for {n} individuals")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def ell(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def node_count(self) -> int:
        return self.n * self.ell

    def flat(self) -> np.ndarray:
        """Measurements as an ``(n * ell, d)`` array in canonical order."""
        return self.values.reshape(self.node_count, self.d)

    def individual_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.ell)

    def segment(self, start: int, stop: int) -> "PanelDataset":
        """Individuals ``start .. stop-1`` as a new panel."""
        labels = None if self.labels is None else self.labels[start:stop]
        return PanelDataset(self.values[start:stop], labels)

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and self.labels == other.labels
        )

    __hash__ = None


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def load_panel_csv(path, n: int, ell: int) -> PanelDataset:
    """Read a panel from CSV.

    The header is ``individual_id, rep_index, <feature columns...>``.  The
    order in which individuals first appear is their time order; rows of one
    individual are ordered by integer ``rep_index``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PanelStructureError(f"{path}: empty file")
        if len(header) < 3:
            raise PanelStructureError(
                f"{path}: expected individual_id, rep_index and at least one feature column"
            )
        d = len(header) - 2
        rows: dict[str, list[tuple[int, list[float]]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != d + 2:
                raise PanelParseError(
                    f"{path}: line {lineno} has {len(row)} columns, expected {d + 2}"
                )
            ident = row[0].strip()
            try:
                rep = int(row[1])
            except ValueError:
                raise PanelParseError(
                    f"{path}: line {lineno}, column 'rep_index': not an integer: {row[1]!r}"
                ) from None
            feats = []
            for col, cell in enumerate(row[2:], start=2):
                try:
                    value = float(cell)
                except ValueError:
                    raise PanelParseError(
                        f"{path}: line {lineno}, column {header[col]!r}: not a number: {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise PanelParseError(
                        f"{path}: line {lineno}, column {header[col]!r}: non-finite value"
                    )
                feats.append(value)
            rows.setdefault(ident, []).append((rep, feats))

    if not rows:
        raise PanelStructureError(f"{path}: no data rows")
    if len(rows) != n:
        raise PanelStructureError(f"{path}: found {len(rows)} individuals, expected n={n}")
    values = np.empty((n, ell, d))
    for i, (ident, reps) in enumerate(rows.items()):
        if len(reps) != ell:
            raise PanelStructureError(
                f"{path}: individual {ident!r} has {len(reps)} repeated measures, expected ell={ell}"
            )
        reps.sort(key=lambda r: r[0])
        if len({r[0] for r in reps}) != ell:
            raise PanelStructureError(f"{path}: individual {ident!r} has duplicate rep_index")
        values[i] = [r[1] for r in reps]
    return PanelDataset(values, tuple(rows))


def write_panel_csv(ds: PanelDataset, path, feature_names: Optional[Sequence[str]] = None) -> None:
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(ds.d)]
    labels = ds.labels if ds.labels is not None else tuple(str(i) for i in range(ds.n))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["individual_id", "rep_index", *feature_names])
        for i in range(ds.n):
            for j in range(ds.ell):
                writer.writerow([labels[i], j, *(repr(float(v)) for v in ds.values[i, j])])


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

FAMILIES = ("gaussian", "lognormal", "gaussian_mixture")


def _pair(value, name):
    if np.ndim(value) == 0:
        return (value, value)
    if len(value) != 2:
        raise ConfigError(f"{name} must be a scalar or a pair, got {value!r}")
    return tuple(value)


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the two-regime repeated-measures generator.

    Each pair holds the pre-change (``k=1``) and post-change (``k=2``) value.
    ``beta`` entries may be scalars (broadcast to ``d`` coordinates) or
    ``d``-vectors.  ``nu_lo``/``nu_hi`` are the bounds of the uniform draw of
    the per-individual noise scale.  ``tau=None`` means no change.
    """

    family: str = "gaussian"
    rho: tuple = (0.2, 0.2)
    beta: tuple = (0.0, 0.0)
    epsilon: tuple = (1.0, 1.0)
    nu_lo: tuple = (1.0, 1.0)
    nu_hi: tuple = (1.2, 1.2)
    sigma: float = 1.0
    tau: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        for name in ("rho", "beta", "epsilon", "nu_lo", "nu_hi"):
            object.__setattr__(self, name, _pair(getattr(self, name), name))
        for r in self.rho:
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        for lo, hi in zip(self.nu_lo, self.nu_hi):
            if lo > hi:
                raise ConfigError(f"nu_lo {self.nu_lo} exceeds nu_hi {self.nu_hi}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if any(e < 0 for e in self.epsilon):
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")

    def replace(self, **changes) -> "GeneratorConfig":
        return replace(self, **changes)


def individual_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one individual (or replicate), keyed by index."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _within_cholesky(rho: float, ell: int) -> np.ndarray:
    corr = rho * np.ones((ell, ell)) + (1.0 - rho) * np.eye(ell)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise ConfigError(f"within-individual correlation with rho={rho} is not positive definite") from None


class LatentDraw(NamedTuple):
    values: np.ndarray  # (n, ell, d) observations
    theta: np.ndarray  # (n, ell, d) latent means
    omega: np.ndarray  # (n,) noise scales
    regime: np.ndarray  # (n,) 0 before the change, 1 after


def generate_with_latent(config: GeneratorConfig, n: int, ell: int, d: int) -> LatentDraw:
    """Draw a panel and keep the latent means and noise scales.

    Individual ``i`` uses its own stream ``individual_rng(config.seed, i)`` and
    consumes it in this order: ``a`` (d normals), the within-individual
    perturbation (ell*d normals), ``omega`` (one uniform), the observation
    noise (ell*d normals) and, for the mixture family, the ell component
    indicators (ell uniforms).
    """
    if n < 2 or ell < 1 or d < 1:
        raise ConfigError(f"need n >= 2, ell >= 1, d >= 1; got n={n}, ell={ell}, d={d}")
    tau = n if config.tau is None else config.tau
    if config.tau is not None and not 1 <= tau < n:
        raise ConfigError(f"tau must satisfy 1 <= tau < n={n}, got {tau}")
    chol = [_within_cholesky(r, ell) for r in config.rho]
    beta = [np.broadcast_to(np.asarray(b, dtype=float), (d,)) for b in config.beta]

    values = np.empty((n, ell, d))
    theta = np.empty((n, ell, d))
    omega = np.empty(n)
    regime = (np.arange(n) >= tau).astype(int)
    for i in range(n):
        k = regime[i]
        rng = individual_rng(config.seed, i)
        a = beta[k] + config.epsilon[k] * rng.standard_normal(d)
        th = a + config.sigma * (chol[k] @ rng.standard_normal((ell, d)))
        om = rng.uniform(config.nu_lo[k], config.nu_hi[k])
        noise = rng.standard_normal((ell, d))
        if config.family == "gaussian":
            z = th + om * noise
        elif config.family == "lognormal":
            z = np.exp(th + om * noise)
        else:
            first = rng.random(ell) < 0.5
            z = np.where(
                first[:, None], th + om * noise, th + 2.0 + math.sqrt(0.5) * om * noise
            )
        values[i], theta[i], omega[i] = z, th, om
    return LatentDraw(values, theta, omega, regime)


def generate(config: GeneratorConfig, n: int, ell: int, d: int) -> PanelDataset:
    """Draw a panel; deterministic given ``config.seed``."""
    return PanelDataset(generate_with_latent(config, n, ell, d).values)
