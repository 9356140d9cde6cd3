"""Wasserstein barycenters: entropic fixed-grid, 1-D, Gaussian and sliced.

The entropic solver runs scaling iterations in the log domain with the
geometric-mean step computed as the exponential of the weighted average of
logs.  The 1-D and Gaussian routines are closed-form(ish) and double as
oracles for the grid solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .closed_form import Gaussian, Quantile1D, spd_sqrtm
from .core import CostMatrix, DiscreteMeasure, Histogram, TransportPlan
from .losses import sample_directions, sliced_energy, sliced_w_gradient

__all__ = [
    "BarycenterProblem",
    "BarycenterReport",
    "entropic_barycenter",
    "barycenter_1d",
    "gaussian_barycenter",
    "sliced_barycenter",
]


@dataclass(frozen=True)
class BarycenterProblem:
    """S histograms with their cost matrices, simplex weights and epsilon."""

    inputs: tuple[tuple[Histogram, CostMatrix], ...]
    weights: np.ndarray
    epsilon: float

    def __init__(self, inputs, weights=None, epsilon: float = 1e-2):
        inputs = tuple((h, C) for h, C in inputs)
        if not inputs:
            raise ValueError("need at least one input")
        n = inputs[0][1].shape[0]
        for h, C in inputs:
            if C.shape[0] != n:
                raise ValueError("all cost matrices must share the first dimension")
            if C.shape[1] != len(h):
                raise ValueError("cost matrix does not match its histogram")
        if weights is None:
            weights = np.full(len(inputs), 1.0 / len(inputs))
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if weights.size != len(inputs) or np.any(weights < 0):
            raise ValueError("weights must be nonnegative, one per input")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must sum to 1")
        if epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        weights.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "epsilon", float(epsilon))


@dataclass
class BarycenterReport:
    converged: bool
    cycles: int
    marginal_disagreement: float
    history: list[float] = field(default_factory=list)


def _softmin_rows(S: np.ndarray, epsilon: float) -> np.ndarray:
    m = S.min(axis=1)
    return m - epsilon * np.log(np.exp(-(S - m[:, None]) / epsilon).sum(axis=1))


def _softmin_cols(S: np.ndarray, epsilon: float) -> np.ndarray:
    m = S.min(axis=0)
    return m - epsilon * np.log(np.exp(-(S - m[None, :]) / epsilon).sum(axis=0))


def entropic_barycenter(
    problem: BarycenterProblem,
    tol: float = 1e-8,
    max_cycles: int = 5000,
) -> tuple[Histogram, list[TransportPlan], BarycenterReport]:
    """Entropic barycenter by scaling iterations with a shared row marginal.

    Per cycle each coupling updates its column scaling toward its own input,
    the barycenter is the weighted geometric mean of the kernel images, and
    the row scalings are refreshed against it.  Stops when the S row
    marginals agree within ``tol`` in L1.
    """
    eps = problem.epsilon
    lam = problem.weights
    S_count = len(problem.inputs)
    fs = [np.zeros(C.shape[0]) for _, C in problem.inputs]
    gs = [np.zeros(C.shape[1]) for _, C in problem.inputs]
    log_bs = [np.log(h.weights) for h, _ in problem.inputs]
    Cs = [C.entries for _, C in problem.inputs]

    log_a = np.zeros(Cs[0].shape[0])
    history: list[float] = []
    converged = False
    cycle = 0
    for cycle in range(1, max_cycles + 1):
        minus_h = []  # -eps log(K_s v_s), stabilized through the current duals
        row_marginals = []  # with stale row scalings, these disagree until done
        for s in range(S_count):
            Sm = Cs[s] - fs[s][:, None] - gs[s][None, :]
            gs[s] = _softmin_cols(Sm, eps) + gs[s] + eps * log_bs[s]
            Sm = Cs[s] - fs[s][:, None] - gs[s][None, :]
            row_marginals.append(np.exp(-Sm / eps).sum(axis=1))
            minus_h.append(_softmin_rows(Sm, eps) + fs[s])
        log_a = -sum(lam[s] * minus_h[s] for s in range(S_count)) / eps
        for s in range(S_count):
            fs[s] = eps * log_a + minus_h[s]
        a = np.exp(log_a)
        disagree = max(float(np.abs(r - a).sum()) for r in row_marginals)
        history.append(disagree)
        if disagree < tol:
            converged = True
            break

    a = np.exp(log_a)
    plans = [
        TransportPlan(
            np.exp((fs[s][:, None] + gs[s][None, :] - Cs[s]) / eps),
            marginal_tolerance=max(tol, history[-1] if history else tol),
        )
        for s in range(S_count)
    ]
    report = BarycenterReport(converged, cycle, history[-1] if history else 0.0, history)
    return Histogram(a, normalize=True), plans, report


def _barycentric_point(xs: np.ndarray, lam: np.ndarray, p: float) -> float:
    if p == 2.0:
        return float(lam @ xs)
    if p == 1.0:
        order = np.argsort(xs, kind="stable")
        cum = np.cumsum(lam[order])
        return float(xs[order][np.searchsorted(cum, 0.5, side="left")])
    lo, hi = float(xs.min()), float(xs.max())
    if lo == hi:
        return lo
    res = minimize_scalar(
        lambda x: float(lam @ np.abs(x - xs) ** p), bounds=(lo, hi), method="bounded"
    )
    return float(res.x)


def barycenter_1d(
    inputs: list[DiscreteMeasure],
    lam: np.ndarray | None = None,
    p: float = 2.0,
) -> DiscreteMeasure:
    """Quantile-domain barycenter of 1-D measures.

    The output quantile function is, level by level on the merged breakpoint
    grid, the weighted p-mean of the input quantiles (arithmetic mean for
    p = 2, weighted median for p = 1).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if lam is None:
        lam = np.full(len(inputs), 1.0 / len(inputs))
    lam = np.asarray(lam, dtype=np.float64)
    quantiles = [Quantile1D.from_measure(m) for m in inputs]
    levels = quantiles[0].cumulative
    for q in quantiles[1:]:
        levels = np.union1d(levels, q.cumulative)
    levels = levels[levels > 0]

    positions: list[float] = []
    masses: list[float] = []
    prev = 0.0
    for lev in levels:
        mass = lev - prev
        if mass > 0:
            xs = np.array([float(q.quantile(lev)) for q in quantiles])
            positions.append(_barycentric_point(xs, lam, p))
            masses.append(mass)
        prev = lev
    pos = np.asarray(positions)
    w = np.asarray(masses)
    uniq, inv = np.unique(pos, return_inverse=True)
    w = np.bincount(inv, weights=w, minlength=uniq.size)
    return DiscreteMeasure(uniq[:, None], Histogram(w / w.sum()))


def gaussian_barycenter(
    means: list[np.ndarray],
    covariances: list[np.ndarray],
    lam: np.ndarray | None = None,
    fixed_point_iters: int = 500,
    tol: float = 1e-10,
    use_alternative_map: bool = False,
) -> tuple[Gaussian, float]:
    """Bures barycenter of Gaussians by fixed-point covariance iteration.

    The mean is the weighted average; the covariance iterates
    S <- sum_s lam_s (S^{1/2} S_s S^{1/2})^{1/2} until the fixed-point
    residual drops below ``tol`` (Frobenius).  ``use_alternative_map``
    switches to the conjugated variant S <- S^{-1/2} (sum ...)^2 S^{-1/2}
    for cross-checking.  Raises on hitting the iteration limit.
    """
    if lam is None:
        lam = np.full(len(means), 1.0 / len(means))
    lam = np.asarray(lam, dtype=np.float64)
    means = [np.atleast_1d(np.asarray(m, dtype=np.float64)) for m in means]
    covs = [np.atleast_2d(np.asarray(c, dtype=np.float64)) for c in covariances]
    mean = sum(l * m for l, m in zip(lam, means))

    def psi(S):
        root = spd_sqrtm(S)
        return sum(l * spd_sqrtm(root @ c @ root) for l, c in zip(lam, covs))

    S = sum(l * c for l, c in zip(lam, covs))
    for _ in range(fixed_point_iters):
        target = psi(S)
        residual = float(np.linalg.norm(target - S))
        if residual <= tol:
            return Gaussian(mean, 0.5 * (S + S.T)), residual
        if use_alternative_map:
            root = spd_sqrtm(S)
            inv_root = np.linalg.inv(root)
            S = inv_root @ (target @ target) @ inv_root
        else:
            S = target
    raise RuntimeError(
        f"fixed point not reached in {fixed_point_iters} iterations "
        f"(residual {residual:.3e})"
    )


def sliced_barycenter(
    inputs: list[DiscreteMeasure],
    lam: np.ndarray | None = None,
    steps: int = 200,
    seed: int = 0,
    n_directions: int | None = None,
    initial: np.ndarray | None = None,
) -> DiscreteMeasure:
    """Lagrangian sliced barycenter: descend positions of a uniform cloud.

    Miminizes sum_s lam_s SW_2(x, beta_s)^2 over the cloud x with directions
    frozen from the seed, so the objective is deterministic and backtracking
    guarantees it never increases.  Zero steps returns the initialization.
    """
    if lam is None:
        lam = np.full(len(inputs), 1.0 / len(inputs))
    lam = np.asarray(lam, dtype=np.float64)
    n = inputs[0].n
    d = inputs[0].dim
    for m in inputs:
        if m.n != n or m.dim != d:
            raise ValueError("inputs must share point count and dimension")
        if np.abs(m.weights.weights - 1.0 / n).max() > 1e-12:
            raise ValueError("inputs must carry uniform weights")
    if n_directions is None:
        n_directions = 64 * d
    directions = sample_directions(d, n_directions, seed)

    if initial is None:
        rng = np.random.default_rng(seed)
        all_pts = np.concatenate([m.points for m in inputs])
        lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
        x = lo + (hi - lo) * rng.random((n, d))
    else:
        x = np.array(initial, dtype=np.float64)

    def objective(pts):
        return sum(
            l * sliced_energy(pts, m, directions) for l, m in zip(lam, inputs)
        )

    value = objective(x)
    step = 1.0
    for _ in range(steps):
        grad = sum(
            l * sliced_w_gradient(x, m, directions=directions)
            for l, m in zip(lam, inputs)
        )
        gnorm = float(np.sum(grad**2))
        if gnorm <= 1e-20:
            break
        while step > 1e-12:
            trial = x - step * grad
            v_new = objective(trial)
            if v_new <= value - 1e-4 * step * gnorm:
                x, value = trial, v_new
                step *= 1.2
                break
            step *= 0.5
        else:
            break
    return DiscreteMeasure.uniform(x)
