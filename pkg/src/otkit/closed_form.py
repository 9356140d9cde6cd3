"""Closed-form optimal transport: measures on the line and Gaussians.

These solutions double as oracles for the generic solvers: 1-D transport
reduces to comparing quantile functions, Gaussian transport to the Bures
metric between covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiscreteMeasure, Histogram, TransportPlan

__all__ = [
    "Quantile1D",
    "Gaussian",
    "w_p_1d",
    "w1_1d_cdf",
    "monge_map_1d",
    "monge_plan_1d",
    "gaussian_w2",
    "gaussian_monge_map",
    "spd_sqrtm",
]


@dataclass(frozen=True)
class Quantile1D:
    """Right-continuous CDF samples of a 1-D measure on its sorted support.

    ``support`` is strictly increasing (ties merged by summing weights) and
    ``cumulative`` rises to the total mass.
    """

    support: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_measure(cls, measure: DiscreteMeasure) -> "Quantile1D":
        if measure.dim != 1:
            raise ValueError("1-D measure expected")
        x = measure.points[:, 0]
        w = measure.weights.weights
        order = np.argsort(x, kind="stable")
        xs, ws = x[order], w[order]
        support, inv = np.unique(xs, return_inverse=True)
        weights = np.bincount(inv, weights=ws, minlength=support.size)
        cum = np.cumsum(weights)
        support = support.copy()
        support.setflags(write=False)
        cum.setflags(write=False)
        return cls(support, cum)

    @property
    def total_mass(self) -> float:
        return float(self.cumulative[-1])

    def quantile(self, r: np.ndarray) -> np.ndarray:
        """Pseudoinverse of the CDF: smallest x with C(x) >= r."""
        idx = np.searchsorted(self.cumulative, np.asarray(r), side="left")
        idx = np.minimum(idx, self.support.size - 1)
        return self.support[idx]


def _merged_levels(qa: Quantile1D, qb: Quantile1D) -> np.ndarray:
    levels = np.union1d(qa.cumulative, qb.cumulative)
    return levels[levels > 0]


def w_p_1d(alpha: DiscreteMeasure, beta: DiscreteMeasure, p: float = 2.0) -> float:
    """W_p between 1-D measures via the exact quantile-function sweep.

    Integrates |q_alpha - q_beta|^p over the merged cumulative breakpoints,
    on which both quantile functions are piecewise constant, so the value is
    exact up to rounding.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    qa = Quantile1D.from_measure(alpha)
    qb = Quantile1D.from_measure(beta)
    if abs(qa.total_mass - qb.total_mass) > 1e-10:
        raise ValueError("total masses differ")
    levels = _merged_levels(qa, qb)
    widths = np.diff(np.concatenate(([0.0], levels)))
    # on (levels[k-1], levels[k]] both quantiles are constant; evaluate there
    xa = qa.quantile(levels)
    xb = qb.quantile(levels)
    integral = float(np.sum(widths * np.abs(xa - xb) ** p))
    return integral ** (1.0 / p)


def w1_1d_cdf(alpha: DiscreteMeasure, beta: DiscreteMeasure) -> float:
    """W_1 as the L1 distance between the two CDFs, swept over the support."""
    qa = Quantile1D.from_measure(alpha)
    qb = Quantile1D.from_measure(beta)
    if abs(qa.total_mass - qb.total_mass) > 1e-10:
        raise ValueError("total masses differ")
    xs = np.union1d(qa.support, qb.support)

    # CDFs are right-continuous steps: on [xs[k], xs[k+1]) they hold the
    # value attained at xs[k]
    def step(q: Quantile1D) -> np.ndarray:
        idx = np.searchsorted(q.support, xs, side="right")
        vals = np.concatenate(([0.0], q.cumulative))
        return vals[idx]

    gaps = np.diff(xs)
    return float(np.sum(gaps * np.abs(step(qa)[:-1] - step(qb)[:-1])))


def monge_map_1d(
    alpha: DiscreteMeasure, beta: DiscreteMeasure
) -> list[list[tuple[int, float]]]:
    """Monotone rearrangement as a mass table.

    Entry ``i`` lists ``(target_index, mass)`` pairs in increasing target
    order; the induced plan is optimal for every convex cost of x - y.
    Indices refer to the sorted supports of the two inputs.
    """
    plan = monge_plan_1d(alpha, beta)
    table: list[list[tuple[int, float]]] = []
    for i in range(plan.shape[0]):
        row = np.nonzero(plan.matrix[i])[0]
        table.append([(int(j), float(plan.matrix[i, j])) for j in row])
    return table


def monge_plan_1d(alpha: DiscreteMeasure, beta: DiscreteMeasure) -> TransportPlan:
    """Optimal monotone coupling between the sorted supports of two 1-D measures."""
    qa = Quantile1D.from_measure(alpha)
    qb = Quantile1D.from_measure(beta)
    if abs(qa.total_mass - qb.total_mass) > 1e-10:
        raise ValueError("total masses differ")
    n, m = qa.support.size, qb.support.size
    P = np.zeros((n, m))
    levels = _merged_levels(qa, qb)
    prev = 0.0
    for lev in levels:
        mass = lev - prev
        if mass > 0:
            i = int(np.searchsorted(qa.cumulative, lev, side="left"))
            j = int(np.searchsorted(qb.cumulative, lev, side="left"))
            P[min(i, n - 1), min(j, m - 1)] += mass
        prev = lev
    return TransportPlan(P)


@dataclass(frozen=True)
class Gaussian:
    """Gaussian N(mean, cov) with a symmetric PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match the mean")
        if np.abs(cov - cov.T).max() > 1e-12 * (1 + np.abs(cov).max()):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-12 * (1 + np.abs(cov).max()):
            raise ValueError("covariance must be positive semidefinite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def spd_sqrtm(S: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, eigenvalues clamped at 0."""
    vals, vecs = np.linalg.eigh(S)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def gaussian_w2(alpha: Gaussian, beta: Gaussian) -> float:
    """Squared 2-Wasserstein distance between Gaussians.

    ||m_a - m_b||^2 plus the squared Bures metric of the covariances.
    """
    root_a = spd_sqrtm(alpha.cov)
    cross = spd_sqrtm(root_a @ beta.cov @ root_a)
    bures_sq = np.trace(alpha.cov) + np.trace(beta.cov) - 2.0 * np.trace(cross)
    return float(np.sum((alpha.mean - beta.mean) ** 2) + max(bures_sq, 0.0))


def gaussian_monge_map(
    alpha: Gaussian, beta: Gaussian
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal affine map x -> A x + shift pushing alpha onto beta.

    A is the symmetric PSD matrix
    cov_a^{-1/2} (cov_a^{1/2} cov_b cov_a^{1/2})^{1/2} cov_a^{-1/2}.
    """
    vals = np.linalg.eigvalsh(alpha.cov)
    if vals.min() <= 1e-12 * (1 + np.abs(alpha.cov).max()):
        raise ValueError("source covariance must be positive definite")
    root_a = spd_sqrtm(alpha.cov)
    inv_root_a = np.linalg.inv(root_a)
    A = inv_root_a @ spd_sqrtm(root_a @ beta.cov @ root_a) @ inv_root_a
    A = 0.5 * (A + A.T)
    shift = beta.mean - A @ alpha.mean
    return A, shift
