"""Measures, costs, couplings and potentials shared by every solver.

All containers are immutable after construction (arrays are frozen with
``writeable = False``) and hold 64-bit floats, so they can be shared freely
across threads.  Operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Histogram",
    "DiscreteMeasure",
    "CostMatrix",
    "TransportPlan",
    "DualPair",
    "Scalings",
    "MarginalReport",
    "build_cost",
    "validate_plan",
    "barycentric_projection",
    "push_forward",
]

PROBABILITY_TOL = 1e-10


def _freeze(x) -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Histogram:
    """Nonnegative weight vector, either a probability vector or raw mass.

    In ``probability`` mode the weights must sum to one within 1e-10; pass
    ``normalize=True`` to rescale file-ish inputs that almost sum to one.
    """

    weights: np.ndarray
    mode: str = "probability"

    def __init__(self, weights, mode: str = "probability", normalize: bool = False):
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.size < 1:
            raise ValueError("histogram needs at least one entry")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("histogram weights must be finite and >= 0")
        if mode not in ("probability", "mass"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "probability":
            s = w.sum()
            if normalize:
                if s <= 0:
                    raise ValueError("cannot normalize a zero-mass histogram")
                w = w / s
            elif abs(s - 1.0) > PROBABILITY_TOL:
                raise ValueError(f"probability weights sum to {s!r}, not 1")
        object.__setattr__(self, "weights", _freeze(w))
        object.__setattr__(self, "mode", mode)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud ``sum_i a_i delta_{x_i}`` in R^d."""

    points: np.ndarray
    weights: Histogram

    def __init__(self, points, weights: Histogram):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError("points must be an (n, d) array with d >= 1")
        if pts.shape[0] != len(weights):
            raise ValueError("points and weights disagree on the number of atoms")
        if np.any(weights.weights == 0):
            raise ValueError(
                "zero-weight atoms are not allowed; use drop_zero_atoms first"
            )
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "weights", weights)

    @classmethod
    def drop_zero_atoms(cls, points, weights: Histogram) -> "DiscreteMeasure":
        """Build a measure, silently discarding atoms of zero weight."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        keep = weights.weights > 0
        return cls(pts[keep], Histogram(weights.weights[keep], mode=weights.mode))

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=np.float64)
        n = pts.shape[0]
        return cls(pts, Histogram(np.full(n, 1.0 / n)))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class CostMatrix:
    """Dense pairwise costs, nonnegative unless explicitly flagged signed.

    Signed entries only occur as inner linearizations of quadratic problems
    (Gromov-style updates); plain OT solvers reject them.
    """

    entries: np.ndarray
    metadata: dict = field(default_factory=dict)
    signed: bool = False

    def __init__(self, entries, metadata: dict | None = None, signed: bool = False):
        e = np.asarray(entries, dtype=np.float64)
        if e.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        if not np.all(np.isfinite(e)):
            raise ValueError("cost entries must be finite")
        if not signed and np.any(e < 0):
            raise ValueError("negative costs require signed=True")
        object.__setattr__(self, "entries", _freeze(e))
        object.__setattr__(self, "metadata", dict(metadata or {}))
        object.__setattr__(self, "signed", bool(signed))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.entries).max())


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling with row marginal a and column marginal b."""

    matrix: np.ndarray
    marginal_tolerance: float = 1e-9

    def __init__(self, matrix, marginal_tolerance: float = 1e-9):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("plan must be 2-D")
        if np.any(m < 0):
            raise ValueError("plan entries must be >= 0")
        object.__setattr__(self, "matrix", _freeze(m))
        object.__setattr__(self, "marginal_tolerance", float(marginal_tolerance))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def cost(self, C: CostMatrix) -> float:
        return float(np.sum(self.matrix * C.entries))


@dataclass(frozen=True)
class DualPair:
    """Kantorovich potentials (f, g); feasible when f_i + g_j <= C_ij."""

    f: np.ndarray
    g: np.ndarray

    def __init__(self, f, g):
        object.__setattr__(self, "f", _freeze(np.ravel(f)))
        object.__setattr__(self, "g", _freeze(np.ravel(g)))

    def objective(self, a: Histogram, b: Histogram) -> float:
        return float(self.f @ a.weights + self.g @ b.weights)

    def is_feasible(self, C: CostMatrix, tol: float = 1e-9) -> bool:
        return bool(np.all(self.f[:, None] + self.g[None, :] <= C.entries + tol))

    def centered(self) -> "DualPair":
        """Shift the shared constant so that the f coordinates sum to zero."""
        c = self.f.mean()
        return DualPair(self.f - c, self.g + c)


@dataclass(frozen=True)
class Scalings:
    """Positive Sinkhorn scalings (u, v); potentials are eps*(log u, log v)."""

    u: np.ndarray
    v: np.ndarray
    epsilon: float

    def __init__(self, u, v, epsilon: float):
        u = np.ravel(u)
        v = np.ravel(v)
        if np.any(u <= 0) or np.any(v <= 0):
            raise ValueError("scalings must be strictly positive")
        if epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "v", _freeze(v))
        object.__setattr__(self, "epsilon", float(epsilon))

    def to_duals(self) -> DualPair:
        return DualPair(self.epsilon * np.log(self.u), self.epsilon * np.log(self.v))


@dataclass(frozen=True)
class MarginalReport:
    """L1 violations of the two marginal constraints of a plan."""

    row_error: float
    col_error: float

    @property
    def total(self) -> float:
        return self.row_error + self.col_error


def build_cost(
    source: DiscreteMeasure, target: DiscreteMeasure, power: float = 2.0
) -> CostMatrix:
    """Pairwise cost ||x_i - y_j||_2^power between two point clouds."""
    if source.dim != target.dim:
        raise ValueError(
            f"ambient dimensions differ: {source.dim} vs {target.dim}"
        )
    if power <= 0:
        raise ValueError("power must be > 0")
    diff = source.points[:, None, :] - target.points[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    return CostMatrix(
        dist**power, metadata={"ground": "euclidean", "power": float(power)}
    )


def validate_plan(P: TransportPlan, a: Histogram, b: Histogram) -> MarginalReport:
    """L1 residuals ||P 1 - a||_1 and ||P^T 1 - b||_1."""
    n, m = P.shape
    if n != len(a) or m != len(b):
        raise ValueError("plan shape is incompatible with the marginals")
    row = np.abs(P.matrix.sum(axis=1) - a.weights).sum()
    col = np.abs(P.matrix.sum(axis=0) - b.weights).sum()
    return MarginalReport(float(row), float(col))


def barycentric_projection(
    P: TransportPlan, a: Histogram, targets: DiscreteMeasure
) -> np.ndarray:
    """Map each source atom to its plan-weighted mean target (1/a_i) sum_j P_ij y_j."""
    if np.any(a.weights <= 0):
        raise ValueError("barycentric projection needs strictly positive weights")
    if P.shape != (len(a), targets.n):
        raise ValueError("plan shape is incompatible with the inputs")
    return (P.matrix @ targets.points) / a.weights[:, None]


def push_forward(
    measure: DiscreteMeasure, mapping: Callable[[np.ndarray], np.ndarray]
) -> DiscreteMeasure:
    """Transport every atom through a point-to-point map, weights untouched.

    Atoms pushed to the same location stay separate; no merging happens.
    """
    moved = np.asarray(
        [np.asarray(mapping(p), dtype=np.float64).ravel() for p in measure.points]
    )
    return DiscreteMeasure(moved, measure.weights)
