"""Synthetic problem instances, feature partitioning and problem constants.

The generator draws the design matrix X, the ground-truth vector theta*, and
the noise vector e as i.i.d. standard normals, in that fixed order, from a
single PCG64 stream seeded explicitly; the response is y = X theta* + e
(noise omitted when requested).  Every draw is reproducible bit-for-bit from
``(n, d, seed, noise)``.

Features are split across agents into consecutive blocks: with m agents the
first ``d mod m`` blocks get ``d // m + 1`` columns and the rest ``d // m``.

Datasets round-trip through a delimited text format: a header row, one row
per observation with the response in the last column, 17 significant digits
per value (enough for exact float64 recovery), plus a JSON sidecar carrying
provenance (seed, shapes, generator name, theta*).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "Dataset",
    "FeaturePartition",
    "ProblemConstants",
    "generate_synthetic",
    "partition_features",
    "operator_norm",
    "estimate_R",
    "save_csv",
    "load_csv",
]

_GENERATOR_NAME = "pcg64-standard-normal"


@dataclass
class Dataset:
    """A regression/classification instance with optional provenance."""

    X: np.ndarray
    y: np.ndarray
    theta_star: np.ndarray | None = None
    seed: int | None = None
    noise: bool = True

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2:
            raise ParameterError(f"X must be 2-D, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ParameterError(
                f"y must have shape ({self.X.shape[0]},), got {self.y.shape}"
            )
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DomainError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def generate_synthetic(n: int, d: int, seed: int, noise: bool = True) -> Dataset:
    """Draw X, theta*, e i.i.d. standard normal and set y = X theta* (+ e)."""
    if n < 1 or d < 1:
        raise ParameterError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal((n, d))
    theta_star = rng.standard_normal(d)
    y = X @ theta_star
    if noise:
        y = y + rng.standard_normal(n)
    return Dataset(X=X, y=y, theta_star=theta_star, seed=seed, noise=noise)


@dataclass(frozen=True)
class FeaturePartition:
    """Consecutive column blocks assigning features to agents."""

    d: int
    m: int
    blocks: tuple  # tuple of (start, stop) pairs, one per agent

    def sizes(self) -> tuple:
        return tuple(stop - start for start, stop in self.blocks)

    def slices(self) -> tuple:
        return tuple(slice(start, stop) for start, stop in self.blocks)


def partition_features(d: int, m: int) -> FeaturePartition:
    """Split d features over m agents into consecutive, nearly equal blocks."""
    if m < 1:
        raise ParameterError(f"need m >= 1 agents, got {m}")
    if d < m:
        raise ParameterError(f"need at least one feature per agent: d={d} < m={m}")
    base, extra = divmod(d, m)
    blocks = []
    start = 0
    for j in range(m):
        stop = start + base + (1 if j < extra else 0)
        blocks.append((start, stop))
        start = stop
    return FeaturePartition(d=d, m=m, blocks=tuple(blocks))


def operator_norm(X, tol: float = 1e-8, max_iter: int = 500) -> float:
    """Largest singular value of X by power iteration on the Gram operator.

    Stops when the estimate's relative change drops below ``tol``; the result
    is inflated by a 1e-6 relative margin so it remains a valid upper bound
    in the step-size formulas.  A zero matrix yields 0.0 with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError(f"operator_norm expects a matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("operator_norm: non-finite input")
    if not X.any():
        warnings.warn("operator_norm: zero matrix, returning 0.0", stacklevel=2)
        return 0.0
    n, d = X.shape
    # iterate on the smaller Gram side
    gram_small = d <= n
    k = d if gram_small else n
    rng = np.random.Generator(np.random.PCG64(0x5EED))
    v = rng.standard_normal(k)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = X.T @ (X @ v) if gram_small else X @ (X.T @ v)
        lam = np.linalg.norm(w)
        if lam == 0.0:  # started in the null space; reseed deterministically
            v = rng.standard_normal(k)
            v /= np.linalg.norm(v)
            continue
        new_est = math.sqrt(lam)
        v = w / lam
        if abs(new_est - est) <= tol * max(1.0, new_est):
            est = new_est
            break
        est = new_est
    return est * (1.0 + 1e-6)


@dataclass(frozen=True)
class ProblemConstants:
    """The constants (R, chi, rho, delta, D) the step-size prescription consumes."""

    R: float
    chi: float
    rho: float
    delta: float
    D: float

    def __post_init__(self):
        for name in ("R", "chi", "rho", "delta", "D"):
            val = getattr(self, name)
            if not (val >= 0.0) or math.isnan(val):
                raise ParameterError(f"problem constant {name} must be non-negative, got {val}")


def estimate_R(dataset: Dataset, loss, reg) -> float:
    """Radius estimate 2 * ||theta_hat|| from a reference solve, floored at 1.0."""
    from .metrics import reference_optimum

    ref = reference_optimum(dataset, loss, reg)
    return max(1.0, 2.0 * float(np.linalg.norm(ref.theta)))


# ---------------------------------------------------------------------------
# delimited round trip
# ---------------------------------------------------------------------------


def save_csv(dataset: Dataset, path) -> None:
    """Write ``<path>`` (header + rows, y last) and a ``<path>.json`` sidecar."""
    path = Path(path)
    header = ",".join([f"x{k + 1}" for k in range(dataset.d)] + ["y"])
    table = np.column_stack([dataset.X, dataset.y])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")
    meta = {
        "n": dataset.n,
        "d": dataset.d,
        "seed": dataset.seed,
        "noise": dataset.noise,
        "generator": _GENERATOR_NAME,
        "draw_order": ["X", "theta_star", "e"],
        "theta_star": None
        if dataset.theta_star is None
        else [float(f"{v:.17g}") for v in dataset.theta_star],
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


def load_csv(path) -> Dataset:
    """Read a dataset written by :func:`save_csv` (sidecar optional)."""
    path = Path(path)
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    X, y = table[:, :-1], table[:, -1]
    theta_star, seed, noise = None, None, True
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if meta.get("theta_star") is not None:
            theta_star = np.asarray(meta["theta_star"], dtype=float)
        seed = meta.get("seed")
        noise = bool(meta.get("noise", True))
    return Dataset(X=X, y=y, theta_star=theta_star, seed=seed, noise=noise)
