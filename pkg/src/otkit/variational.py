"""Differentiating entropic transport losses, and JKO gradient-flow steps.

Gradients are taken at converged solutions: the dual potentials for weight
perturbations, the plan-weighted cost derivative for position perturbations.
The JKO step is an implicit Wasserstein-metric minimization solved through
the generalized scaling iterations with a closed-form KL-proximal update of
the driving functional.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import CostMatrix, DiscreteMeasure, DualPair, Histogram
from .entropic import sinkhorn_log
from .exact import network_simplex

__all__ = [
    "FitProblem",
    "grad_wrt_weights",
    "grad_wrt_positions",
    "fit_eulerian",
    "jko_step",
    "linear_potential",
    "congestion_potential",
    "neg_entropy_functional",
]


def grad_wrt_weights(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    epsilon: float,
    tol: float = 1e-11,
) -> DualPair:
    """Gradient of the regularized cost in the histogram weights.

    Equals the optimal dual potentials, returned in the canonical gauge with
    zero-sum f; directional derivatives are meant along mass-preserving
    perturbations, for which the gauge constant is invisible.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0 for differentiability")
    duals, _, report = sinkhorn_log(a, b, C, epsilon, tol=tol)
    if not report.converged:
        raise RuntimeError("Sinkhorn did not converge while computing the gradient")
    return duals.centered()


def _cost_gradient(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    # gradient in the first argument of ||x - y||^p, pointwise over pairs
    diff = x[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    if p == 2.0:
        return 2.0 * diff
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(dist > 0, p * dist ** (p - 2.0), 0.0)
    return scale[..., None] * diff


def grad_wrt_positions(
    x: np.ndarray,
    b_target: Histogram,
    y: np.ndarray,
    a: Histogram | None = None,
    p: float = 2.0,
    epsilon: float = 0.0,
    tol: float = 1e-9,
) -> tuple[np.ndarray, bool]:
    """Gradient of the transport cost in the source positions.

    Row i is sum_j P_ij grad_1 c(x_i, y_j); for the squared Euclidean cost
    this is 2 (a_i x_i - sum_j P_ij y_j), the scaled gap to the barycentric
    projection.  With epsilon = 0 an optimal vertex plan is used and the
    second output flags the result as a subgradient.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if a is None:
        a = Histogram(np.full(x.shape[0], 1.0 / x.shape[0]))
    source = DiscreteMeasure(x, a)
    target = DiscreteMeasure(y, b_target)
    from .core import build_cost

    C = build_cost(source, target, power=p)
    if epsilon > 0:
        _, plan, report = sinkhorn_log(a, b_target, C, epsilon, tol=tol)
        if not report.converged:
            raise RuntimeError("Sinkhorn did not converge")
        P = plan.matrix
        subgradient = False
    else:
        _, plan, _, _ = network_simplex(a, b_target, C)
        P = plan.matrix
        subgradient = True
    grad = np.sum(P[..., None] * _cost_gradient(x, y, p), axis=1)
    return grad, subgradient


@dataclass
class FitProblem:
    """Eulerian fitting setup: theta -> weights on a fixed support."""

    weights_of: Callable[[np.ndarray], np.ndarray]
    jacobian_of: Callable[[np.ndarray], np.ndarray]  # (n, dim(theta))
    target: Histogram
    cost: CostMatrix
    epsilon: float


def fit_eulerian(
    problem: FitProblem,
    theta0: np.ndarray,
    steps: int = 50,
    learning_rate: float = 1.0,
    tol: float = 1e-11,
) -> list[np.ndarray]:
    """Gradient descent on theta -> MK_eps(a(theta), b) with backtracking.

    The gradient is assembled by the chain rule from the dual potentials;
    the returned trajectory starts at theta0 and the loss never increases
    along it.  Raises if the line search stalls completely.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    trajectory = [theta.copy()]

    def loss(th):
        a = Histogram(problem.weights_of(th))
        _, _, report = sinkhorn_log(
            a, problem.target, problem.cost, problem.epsilon, tol=tol
        )
        return report.regularized_cost

    current = loss(theta)
    step = learning_rate
    for _ in range(steps):
        a = Histogram(problem.weights_of(theta))
        duals = grad_wrt_weights(a, problem.target, problem.cost, problem.epsilon, tol)
        grad = problem.jacobian_of(theta).T @ duals.f
        gnorm = float(grad @ grad)
        if gnorm <= 1e-24:
            break
        accepted = False
        while step > 1e-14:
            trial = theta - step * grad
            try:
                trial_loss = loss(trial)
            except ValueError:  # stepped outside the simplex parameterization
                step *= 0.5
                continue
            if trial_loss <= current:
                theta, current = trial, trial_loss
                trajectory.append(theta.copy())
                step *= 1.2
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise RuntimeError("line search failed to find a decreasing step")
    return trajectory


@dataclass(frozen=True)
class _Functional:
    kind: str
    potential: np.ndarray | None = None
    tau_cap: float = np.inf  # congestion ceiling


def linear_potential(V: np.ndarray) -> _Functional:
    """Driving energy <V, a>: pure drift toward small potential values."""
    return _Functional("linear", np.asarray(V, dtype=np.float64))


def congestion_potential(V: np.ndarray, kappa: float) -> _Functional:
    """Drift <V, a> plus the hard ceiling a <= kappa (crowd-motion prox)."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    return _Functional("congestion", np.asarray(V, dtype=np.float64), float(kappa))


def neg_entropy_functional() -> _Functional:
    """Negative entropy sum a (log a - 1); its JKO flow is heat diffusion."""
    return _Functional("neg_entropy")


def jko_step(
    a_prev: Histogram,
    F: _Functional,
    tau: float,
    epsilon: float,
    C: CostMatrix,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> Histogram:
    """One implicit Wasserstein step: argmin_a MK_eps(a, a_prev) + tau F(a).

    Solved by scaling iterations that pin the second marginal to ``a_prev``
    and apply the KL-proximal map of tau F to the first.  Mass is conserved
    exactly by finishing on the pinned side.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau == 0:
        return a_prev
    Ce = C.entries
    n = Ce.shape[0]
    if Ce.shape[1] != len(a_prev):
        raise ValueError("cost shape incompatible with a_prev")
    log_prev = np.log(a_prev.weights)
    f = np.zeros(n)
    g = np.zeros(len(a_prev))

    def logsumexp(z, axis):
        m = z.max(axis=axis, keepdims=True)
        return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)

    for _ in range(max_iter):
        # prox side: row marginal s = K e^{g/eps}, then the KL prox of tau F
        log_s = logsumexp((g[None, :] - Ce) / epsilon, axis=1)
        if F.kind == "linear":
            f_new = -tau * F.potential
        elif F.kind == "congestion":
            log_r = np.minimum(log_s - tau * F.potential / epsilon, np.log(F.tau_cap))
            f_new = epsilon * (log_r - log_s)
        elif F.kind == "neg_entropy":
            f_new = -epsilon * tau / (epsilon + tau) * log_s
        else:
            raise ValueError(f"no KL proximal map for functional {F.kind!r}")
        # pinned side: match a_prev exactly
        g_new = epsilon * log_prev - epsilon * logsumexp(
            (f_new[:, None] - Ce) / epsilon, axis=0
        )
        move = max(np.abs(f_new - f).max(), np.abs(g_new - g).max())
        f, g = f_new, g_new
        if move < tol:
            break
    P = np.exp((f[:, None] + g[None, :] - Ce) / epsilon)
    a_next = P.sum(axis=1)
    return Histogram(a_next, mode="mass" if a_prev.mode == "mass" else "probability",
                     normalize=a_prev.mode == "probability")
