"""Semidiscrete transport: a quadrature or sampled source vs. a point target.

The dual energy over the discrete target's weight vector is concave; its
gradient compares prescribed masses with Laguerre-cell masses.  Entropic
smoothing replaces the hard cell indicator by a softmax partition of unity.
The deterministic quadrature path is the oracle for the stochastic solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DiscreteMeasure

__all__ = [
    "QuadratureSource",
    "sq_euclidean",
    "euclidean_power",
    "cbar_transform_semidiscrete",
    "laguerre_assign",
    "semidual_energy_grad",
    "maximize_semidual",
    "sgd_semidual",
    "sga_semidual",
    "uniform_box_sampler",
]


def sq_euclidean(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean costs between two point arrays."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    diff = X[:, None, :] - Y[None, :, :]
    return np.sum(diff**2, axis=-1)


def euclidean_power(p: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Cost factory ||x - y||^p."""

    def cost(X, Y):
        return sq_euclidean(X, Y) ** (p / 2.0)

    return cost


@dataclass(frozen=True)
class QuadratureSource:
    """Continuous source seen through quadrature nodes and/or a sampler.

    ``sampler(seed, index)`` must return the same point for the same pair,
    which keeps stochastic runs reproducible.
    """

    nodes: np.ndarray
    node_weights: np.ndarray
    sampler: Callable[[int, int], np.ndarray] | None = None

    def __init__(self, nodes, node_weights, sampler=None):
        nodes = np.atleast_2d(np.asarray(nodes, dtype=np.float64))
        w = np.asarray(node_weights, dtype=np.float64).ravel()
        if nodes.shape[0] != w.size:
            raise ValueError("node and weight counts differ")
        if np.any(w <= 0):
            raise ValueError("node weights must be positive")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("node weights must sum to 1")
        nodes.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "node_weights", w)
        object.__setattr__(self, "sampler", sampler)


def uniform_box_sampler(low, high) -> Callable[[int, int], np.ndarray]:
    """Seeded sampler of uniform draws in a box; (seed, index) -> point."""
    low = np.atleast_1d(np.asarray(low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(high, dtype=np.float64))

    def sampler(seed: int, index: int) -> np.ndarray:
        rng = np.random.default_rng((int(seed), int(index)))
        return low + (high - low) * rng.random(low.size)

    return sampler


def cbar_transform_semidiscrete(
    g: np.ndarray,
    x: np.ndarray,
    targets: DiscreteMeasure,
    cost: Callable = sq_euclidean,
    epsilon: float = 0.0,
    b: np.ndarray | None = None,
) -> float:
    """Discrete cbar-transform at a point: min_j c(x, y_j) - g_j.

    For epsilon > 0 this is the smoothed version
    -eps log sum_j b_j exp((g_j - c(x, y_j)) / eps).
    """
    g = np.asarray(g, dtype=np.float64)
    c = cost(np.atleast_2d(x), targets.points)[0]
    if epsilon == 0.0:
        return float(np.min(c - g))
    if b is None:
        b = targets.weights.weights
    z = (g - c) / epsilon + np.log(b)
    m = z.max()
    return float(-epsilon * (m + np.log(np.exp(z - m).sum())))


def laguerre_assign(
    g: np.ndarray,
    nodes: np.ndarray,
    targets: DiscreteMeasure,
    cost: Callable = sq_euclidean,
) -> np.ndarray:
    """Cell index per node: argmin_j c(x, y_j) - g_j, lowest index on ties.

    Constant g recovers the plain Voronoi assignment.
    """
    g = np.asarray(g, dtype=np.float64)
    scores = cost(nodes, targets.points) - g[None, :]
    return np.argmin(scores, axis=1)


def semidual_energy_grad(
    g: np.ndarray,
    source: QuadratureSource,
    targets: DiscreteMeasure,
    b: np.ndarray | None = None,
    cost: Callable = sq_euclidean,
    epsilon: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Semidual energy and its gradient over the quadrature nodes.

    E(g) = sum_x w(x) gbar(x) + <g, b> with gradient
    b_j - sum_x chi_j(x) w(x); the chi_j are hard cell indicators at
    epsilon = 0 and a softmax partition of unity otherwise.
    """
    g = np.asarray(g, dtype=np.float64)
    if b is None:
        b = targets.weights.weights
    w = source.node_weights
    c = cost(source.nodes, targets.points)
    if epsilon == 0.0:
        scores = c - g[None, :]
        assign = np.argmin(scores, axis=1)
        value = float(w @ scores[np.arange(len(w)), assign] + g @ b)
        cell_mass = np.bincount(assign, weights=w, minlength=len(g))
        return value, b - cell_mass
    z = (g[None, :] - c) / epsilon + np.log(b)[None, :]
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    value = float(w @ (-epsilon * lse) + g @ b)
    chi = np.exp(z - lse[:, None])  # rows sum to 1
    return value, b - w @ chi


def maximize_semidual(
    source: QuadratureSource,
    targets: DiscreteMeasure,
    b: np.ndarray | None = None,
    cost: Callable = sq_euclidean,
    epsilon: float = 0.0,
    g0: np.ndarray | None = None,
    grad_tol: float = 1e-9,
    max_iter: int = 5000,
) -> tuple[np.ndarray, float, bool]:
    """Deterministic gradient ascent with backtracking on the semidual energy.

    Plain ascent suffices at desk scale; returns (g, energy, converged).
    """
    if b is None:
        b = targets.weights.weights
    g = np.zeros(targets.n) if g0 is None else np.asarray(g0, dtype=np.float64).copy()
    value, grad = semidual_energy_grad(g, source, targets, b, cost, epsilon)
    step = 1.0
    converged = False
    for _ in range(max_iter):
        if np.abs(grad).max() <= grad_tol:
            converged = True
            break
        while step > 1e-14:
            trial = g + step * grad
            v_new, g_new = semidual_energy_grad(
                trial, source, targets, b, cost, epsilon
            )
            if v_new >= value + 1e-4 * step * float(grad @ grad):
                g, value, grad = trial, v_new, g_new
                step *= 1.2
                break
            step *= 0.5
        else:
            break
    return g, value, converged


def _stochastic_gradient(g, x, targets, b, cost, epsilon):
    # per-sample gradient of the semidual expectation: b - chi^eps(x)
    c = cost(np.atleast_2d(x), targets.points)[0]
    if epsilon == 0.0:
        j = int(np.argmin(c - g))
        grad = b.copy()
        grad[j] -= 1.0
        return grad
    z = (g - c) / epsilon + np.log(b)
    m = z.max()
    chi = np.exp(z - m)
    chi /= chi.sum()
    return b - chi


def sgd_semidual(
    sampler: Callable[[int, int], np.ndarray],
    targets: DiscreteMeasure,
    b: np.ndarray | None = None,
    cost: Callable = sq_euclidean,
    epsilon: float = 0.0,
    steps: int = 1000,
    tau0: float = 1.0,
    ell0: float = 100.0,
    seed: int = 0,
) -> np.ndarray:
    """Stochastic ascent on the semidual with the tau0 / (1 + l/l0) schedule.

    The source is only touched through the sampler oracle, so it can be an
    arbitrary black-box distribution.
    """
    if b is None:
        b = targets.weights.weights
    g = np.zeros(targets.n)
    for ell in range(steps):
        x = sampler(seed, ell)
        tau = tau0 / (1.0 + ell / ell0)
        g = g + tau * _stochastic_gradient(g, x, targets, b, cost, epsilon)
    return g


def sga_semidual(
    sampler: Callable[[int, int], np.ndarray],
    targets: DiscreteMeasure,
    b: np.ndarray | None = None,
    cost: Callable = sq_euclidean,
    epsilon: float = 0.0,
    steps: int = 1000,
    tau0: float = 1.0,
    ell0: float = 100.0,
    seed: int = 0,
) -> np.ndarray:
    """Averaged stochastic ascent: slower step decay, running iterate average."""
    if b is None:
        b = targets.weights.weights
    g_inner = np.zeros(targets.n)
    g_avg = np.zeros(targets.n)
    for ell in range(steps):
        x = sampler(seed, ell)
        tau = tau0 / (1.0 + np.sqrt(ell / ell0))
        g_inner = g_inner + tau * _stochastic_gradient(
            g_inner, x, targets, b, cost, epsilon
        )
        g_avg = g_avg + (g_inner - g_avg) / (ell + 1)
    return g_avg
