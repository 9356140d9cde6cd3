"""Sinkhorn solvers: dense scaling, log-domain, rounding, diagnostics.

Includes the Hilbert-metric convergence theory, primal/dual Sinkhorn
divergences, the feasibility rounding step, proximal-point iterations with
decaying regularization, a generalized scheme with pluggable marginal
penalties (unbalanced OT), batched solves against a shared kernel and
separable kernel application for grid costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CostMatrix, DualPair, Histogram, Scalings, TransportPlan

__all__ = [
    "GibbsKernel",
    "MarginalPenalty",
    "SinkhornReport",
    "SinkhornUnderflowError",
    "sinkhorn",
    "sinkhorn_log",
    "round_to_feasible",
    "hilbert_metric",
    "contraction_factor",
    "sinkhorn_divergences",
    "sinkhorn_rounded",
    "generalized_sinkhorn",
    "proximal_point",
    "batched_sinkhorn",
    "apply_separable_kernel",
    "plan_entropy",
    "kl_divergence",
]

DEFAULT_TOL = 1e-9
LOG_DOMAIN_THRESHOLD = 1e-2  # log-domain is the default below this eps/||C||


class SinkhornUnderflowError(FloatingPointError):
    """Dense scaling hit a zero kernel product; switch to sinkhorn_log."""


def plan_entropy(P: np.ndarray) -> float:
    """Discrete entropy H(P) = -sum P (log P - 1), with 0 log 0 = 0."""
    mask = P > 0
    return float(-np.sum(P[mask] * (np.log(P[mask]) - 1.0)))


def kl_divergence(r: np.ndarray, k: np.ndarray) -> float:
    """Unnormalized KL: sum r log(r/k) - r + k (conventions 0 log 0 = 0)."""
    r = np.asarray(r, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if np.any((r > 0) & (k == 0)):
        return float("inf")
    mask = r > 0
    out = float(np.sum(k) - np.sum(r))
    out += float(np.sum(r[mask] * np.log(r[mask] / k[mask])))
    return out


@dataclass(frozen=True)
class GibbsKernel:
    """Kernel exp(-C/eps), stored dense or as separable grid factors."""

    epsilon: float
    dense: np.ndarray | None = None
    factors: tuple[np.ndarray, ...] | None = None

    @classmethod
    def from_cost(cls, C: CostMatrix, epsilon: float) -> "GibbsKernel":
        if epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        return cls(epsilon, dense=np.exp(-C.entries / epsilon))

    @classmethod
    def from_factors(cls, factors, epsilon: float) -> "GibbsKernel":
        return cls(epsilon, factors=tuple(np.asarray(f) for f in factors))

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        K = self.factors[0]
        for f in self.factors[1:]:
            K = np.kron(K, f)
        return K

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.factors is not None and u.ndim > 1:
            return apply_separable_kernel(self.factors, u)
        return self.to_dense() @ u


@dataclass(frozen=True)
class MarginalPenalty:
    """Marginal constraint of the generalized problem: hard or KL-relaxed.

    ``equality(target)`` pins the marginal exactly; ``kl(target, tau)``
    penalizes deviation by tau * KL(. | target), which permits mass change.
    """

    kind: str
    target: np.ndarray
    tau: float = float("inf")

    @classmethod
    def equality(cls, target) -> "MarginalPenalty":
        return cls("equality", np.asarray(target, dtype=np.float64))

    @classmethod
    def kl(cls, target, tau: float) -> "MarginalPenalty":
        if tau <= 0:
            raise ValueError("tau must be > 0")
        return cls("kl", np.asarray(target, dtype=np.float64), float(tau))

    def exponent(self, epsilon: float) -> float:
        """Relaxation exponent of the scaling update, 1 for a hard marginal."""
        if self.kind == "equality":
            return 1.0
        return self.tau / (self.tau + epsilon)


@dataclass
class SinkhornReport:
    """Convergence summary of one entropic solve."""

    converged: bool
    iterations: int
    residual_row: float
    residual_col: float
    primal_divergence: float
    dual_divergence: float
    regularized_cost: float
    residual_history: list[float] = field(default_factory=list)

    @property
    def marginal_residual(self) -> float:
        return self.residual_row + self.residual_col


def _default_max_iter(max_abs_cost: float, epsilon: float) -> int:
    return int(min(1e4 * np.ceil(max(max_abs_cost, epsilon) / epsilon), 1e6))


def _report(P, Ce, f, g, a, b, epsilon, iterations, converged, history):
    # regularized cost in the Shannon convention <C,P> + eps sum P log P,
    # which equals the dual objective at convergence and is bracketed by the
    # two divergences; the (log P - 1) convention shifts it by the constant
    # eps without changing any gradient
    primal = float(np.sum(P * Ce))
    dual = float(f @ a + g @ b)
    reg = primal - epsilon * (plan_entropy(P) - float(P.sum()))
    return SinkhornReport(
        converged=converged,
        iterations=iterations,
        residual_row=float(np.abs(P.sum(axis=1) - a).sum()),
        residual_col=float(np.abs(P.sum(axis=0) - b).sum()),
        primal_divergence=primal,
        dual_divergence=dual,
        regularized_cost=reg,
        residual_history=history,
    )


def sinkhorn(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> tuple[Scalings, TransportPlan, SinkhornReport]:
    """Classic Sinkhorn: alternate diagonal scaling of the Gibbs kernel.

    Stops when the summed L1 marginal violation of diag(u) K diag(v) drops
    below ``tol``.  Raises :class:`SinkhornUnderflowError` when the kernel
    products lose all mass in double precision (small epsilon); callers
    should then switch to :func:`sinkhorn_log`.
    """
    aw, bw = a.weights, b.weights
    if np.any(aw <= 0) or np.any(bw <= 0):
        raise ValueError("marginals must be strictly positive (drop zero atoms)")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    Ce = C.entries
    K = np.exp(-Ce / epsilon)
    if max_iter is None:
        max_iter = _default_max_iter(C.max_abs, epsilon)

    u = np.ones(aw.size)
    v = np.ones(bw.size)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Kv = K @ v
        if np.any(Kv <= 0):
            raise SinkhornUnderflowError(
                "kernel application underflowed; use sinkhorn_log"
            )
        u = aw / Kv
        Ktu = K.T @ u
        if np.any(Ktu <= 0):
            raise SinkhornUnderflowError(
                "kernel application underflowed; use sinkhorn_log"
            )
        v = bw / Ktu
        residual = float(np.abs(u * (K @ v) - aw).sum())  # col residual is 0 here
        history.append(residual)
        if residual < tol:
            converged = True
            break

    P = u[:, None] * K * v[None, :]
    scal = Scalings(u, v, epsilon)
    duals = scal.to_duals()
    report = _report(P, Ce, duals.f, duals.g, aw, bw, epsilon, it, converged, history)
    return scal, TransportPlan(P, marginal_tolerance=max(tol, report.marginal_residual)), report


def _softmin_rows(S: np.ndarray, epsilon: float) -> np.ndarray:
    # row-wise soft minimum, stabilized by subtracting the running minimum
    m = S.min(axis=1)
    return m - epsilon * np.log(np.exp(-(S - m[:, None]) / epsilon).sum(axis=1))


def _softmin_cols(S: np.ndarray, epsilon: float) -> np.ndarray:
    m = S.min(axis=0)
    return m - epsilon * np.log(np.exp(-(S - m[None, :]) / epsilon).sum(axis=0))


def _sinkhorn_log_core(aw, bw, Ce, epsilon, tol, max_iter, f0=None, g0=None,
                       rho_f=1.0, rho_g=1.0):
    # Stabilized dual iterations; rho < 1 implements the KL-relaxed marginals.
    log_a = np.log(aw)
    log_b = np.log(bw)
    f = np.zeros(aw.size) if f0 is None else f0.copy()
    g = np.zeros(bw.size) if g0 is None else g0.copy()
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        S = Ce - f[:, None] - g[None, :]
        f_new = rho_f * (_softmin_rows(S, epsilon) + f + epsilon * log_a)
        S = Ce - f_new[:, None] - g[None, :]
        g_new = rho_g * (_softmin_cols(S, epsilon) + g + epsilon * log_b)
        if rho_f == 1.0 and rho_g == 1.0:
            P = np.exp((f_new[:, None] + g_new[None, :] - Ce) / epsilon)
            residual = float(np.abs(P.sum(axis=1) - aw).sum()
                             + np.abs(P.sum(axis=0) - bw).sum())
        else:
            move = max(np.abs(f_new - f).max(), np.abs(g_new - g).max())
            residual = move
        f, g = f_new, g_new
        history.append(residual)
        if residual < tol:
            converged = True
            break
    return f, g, it, converged, history


def sinkhorn_log(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> tuple[DualPair, TransportPlan, SinkhornReport]:
    """Log-domain Sinkhorn via soft-min c-transforms; stable for tiny epsilon.

    Mathematically identical fixed point to :func:`sinkhorn` through
    (f, g) = eps * (log u, log v); never underflows because the exponent
    C - f (+) g stays bounded along the iterations.
    """
    aw, bw = a.weights, b.weights
    if np.any(aw <= 0) or np.any(bw <= 0):
        raise ValueError("marginals must be strictly positive (drop zero atoms)")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    Ce = C.entries
    if max_iter is None:
        max_iter = _default_max_iter(C.max_abs, epsilon)
    f, g, it, converged, history = _sinkhorn_log_core(
        aw, bw, Ce, epsilon, tol, max_iter
    )
    P = np.exp((f[:, None] + g[None, :] - Ce) / epsilon)
    report = _report(P, Ce, f, g, aw, bw, epsilon, it, converged, history)
    plan = TransportPlan(P, marginal_tolerance=max(tol, report.marginal_residual))
    return DualPair(f, g), plan, report


def round_to_feasible(P, a: Histogram, b: Histogram) -> TransportPlan:
    """Rescale rows/columns then patch the residual to land exactly in U(a, b).

    The L1 distance moved is bounded by the input's total marginal violation,
    so near-converged Sinkhorn iterates stay near-optimal after rounding.
    """
    P = P.matrix if isinstance(P, TransportPlan) else np.asarray(P, dtype=np.float64)
    aw, bw = a.weights, b.weights
    rows = P.sum(axis=1)
    x = np.minimum(np.divide(aw, rows, out=np.ones_like(aw), where=rows > 0), 1.0)
    P1 = x[:, None] * P
    cols = P1.sum(axis=0)
    y = np.minimum(np.divide(bw, cols, out=np.ones_like(bw), where=cols > 0), 1.0)
    P2 = P1 * y[None, :]
    # the scalings guarantee da, db >= 0 up to rounding noise
    da = np.maximum(aw - P2.sum(axis=1), 0.0)
    db = np.maximum(bw - P2.sum(axis=0), 0.0)
    total = da.sum()
    if total > 0:
        P2 = P2 + np.outer(da, db) / total
    return TransportPlan(P2, marginal_tolerance=1e-12)


def hilbert_metric(u: np.ndarray, u_prime: np.ndarray) -> float:
    """Hilbert projective distance max log(u_i u'_j / (u_j u'_i))."""
    u = np.asarray(u, dtype=np.float64)
    u_prime = np.asarray(u_prime, dtype=np.float64)
    if np.any(u <= 0) or np.any(u_prime <= 0):
        raise ValueError("hilbert metric needs strictly positive vectors")
    r = np.log(u) - np.log(u_prime)
    return float(r.max() - r.min())


def contraction_factor(K: np.ndarray) -> float:
    """Birkhoff contraction ratio of a positive kernel in the Hilbert metric.

    lambda(K) = (sqrt(eta) - 1) / (sqrt(eta) + 1) with
    eta = max K_ik K_jl / (K_jk K_il); rank-one kernels give 0.
    """
    K = np.asarray(K, dtype=np.float64)
    if np.any(K <= 0):
        raise ValueError("kernel must be strictly positive")
    L = np.log(K)
    # A[k, l] = max_i (L_ik - L_il); eta = exp max_{k,l} (A[k,l] + A[l,k])
    A = np.max(L[:, :, None] - L[:, None, :], axis=0)
    eta_log = float(np.max(A + A.T))
    root = np.exp(0.5 * eta_log)
    return float((root - 1.0) / (root + 1.0))


@dataclass
class SinkhornDivergences:
    """Primal/dual Sinkhorn divergences bracketing the regularized cost."""

    primal: float
    dual: float
    dual_bound: float  # finite-iteration lower bound on the regularized cost
    plan: TransportPlan
    report: SinkhornReport


def sinkhorn_divergences(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    epsilon: float,
    iterations: int = 1,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> SinkhornDivergences:
    """Primal cost, converged dual objective, and the finite-L dual bound.

    The bound evaluates <f, a> + <g, b> after exactly ``iterations`` full
    updates (ending on the column side, which makes the pair dual feasible),
    and therefore lower-bounds the regularized cost for any L >= 1.
    """
    aw, bw = a.weights, b.weights
    Ce = C.entries
    if max_iter is None:
        max_iter = _default_max_iter(C.max_abs, epsilon)
    fL, gL, _, _, _ = _sinkhorn_log_core(aw, bw, Ce, epsilon, 0.0, iterations)
    dual_bound = float(fL @ aw + gL @ bw)
    duals, plan, report = sinkhorn_log(a, b, C, epsilon, tol=tol, max_iter=max_iter)
    return SinkhornDivergences(
        primal=report.primal_divergence,
        dual=report.dual_divergence,
        dual_bound=dual_bound,
        plan=plan,
        report=report,
    )


def sinkhorn_rounded(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    tau: float,
) -> tuple[float, TransportPlan]:
    """Feasible plan within tau of the unregularized optimum.

    Uses the accuracy schedule eps = tau / (4 log n) with a marginal
    tolerance of tau / (8 ||C||_inf), then rounds to exact feasibility.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    n = max(len(a), len(b), 2)
    epsilon = tau / (4.0 * np.log(n))
    tol = tau / (8.0 * max(C.max_abs, 1e-300))
    _, plan, _ = sinkhorn_log(a, b, C, epsilon, tol=tol)
    rounded = round_to_feasible(plan, a, b)
    return rounded.cost(C), rounded


def generalized_sinkhorn(
    F: MarginalPenalty,
    G: MarginalPenalty,
    C: CostMatrix,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    force_log: bool = False,
) -> tuple[Scalings, TransportPlan, SinkhornReport]:
    """Scaling iterations with KL-proximal marginal updates.

    Equality penalties reproduce the plain Sinkhorn trajectory; KL penalties
    raise the classical update to the power tau/(tau + eps), which is the
    unbalanced-transport scheme.  Dense scalings are used for comfortable
    epsilon and the log-domain form otherwise (or when ``force_log``).
    """
    aw = F.target
    bw = G.target
    if np.any(aw <= 0) or np.any(bw <= 0):
        raise ValueError("penalty targets must be strictly positive")
    Ce = C.entries
    if max_iter is None:
        max_iter = _default_max_iter(C.max_abs, epsilon)
    rho_f = F.exponent(epsilon)
    rho_g = G.exponent(epsilon)
    balanced = F.kind == "equality" and G.kind == "equality"

    use_log = force_log or epsilon < LOG_DOMAIN_THRESHOLD * max(C.max_abs, 1e-300)
    if not use_log:
        K = np.exp(-Ce / epsilon)
        u = np.ones(aw.size)
        v = np.ones(bw.size)
        converged = False
        history: list[float] = []
        it = 0
        try:
            for it in range(1, max_iter + 1):
                Kv = K @ v
                if np.any(Kv <= 0):
                    raise SinkhornUnderflowError
                u = (aw / Kv) ** rho_f
                Ktu = K.T @ u
                if np.any(Ktu <= 0):
                    raise SinkhornUnderflowError
                v_new = (bw / Ktu) ** rho_g
                if balanced:
                    residual = float(np.abs(u * (K @ v_new) - aw).sum())
                else:
                    residual = float(
                        epsilon * np.abs(np.log(v_new) - np.log(v)).max()
                    )
                v = v_new
                history.append(residual)
                if residual < tol:
                    converged = True
                    break
            f = epsilon * np.log(u)
            g = epsilon * np.log(v)
        except SinkhornUnderflowError:
            use_log = True
    if use_log:
        f, g, it, converged, history = _sinkhorn_log_core(
            aw, bw, Ce, epsilon, tol, max_iter, rho_f=rho_f, rho_g=rho_g
        )
    P = np.exp((f[:, None] + g[None, :] - Ce) / epsilon)
    report = _report(P, Ce, f, g, aw, bw, epsilon, it, converged, history)
    scal = Scalings(np.exp(f / epsilon), np.exp(g / epsilon), epsilon)
    return scal, TransportPlan(P, marginal_tolerance=max(tol, report.marginal_residual)), report


def unbalanced_cost(
    P: TransportPlan, C: CostMatrix, F: MarginalPenalty, G: MarginalPenalty
) -> float:
    """Primal unbalanced objective <C, P> + penalties on both marginals."""
    val = P.cost(C)
    r = P.matrix.sum(axis=1)
    c = P.matrix.sum(axis=0)
    for pen, marg in ((F, r), (G, c)):
        if pen.kind == "kl":
            val += pen.tau * kl_divergence(marg, pen.target)
    return val


def proximal_point(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    epsilon: float,
    outer_steps: int,
    tol: float = DEFAULT_TOL,
) -> list[TransportPlan]:
    """KL proximal-point iterations: Sinkhorn with kernel exp(-C/eps) * P.

    Step l effectively solves entropic OT at regularization eps / l, so the
    plan costs decrease toward the linear-program value.  Returns the whole
    plan sequence; the first entry equals a plain Sinkhorn solve.
    """
    aw, bw = a.weights, b.weights
    Ce = C.entries
    log_P = np.zeros_like(Ce)  # P^(0) = all-ones kernel carrier
    plans: list[TransportPlan] = []
    for _ in range(outer_steps):
        C_eff = Ce - epsilon * log_P
        # step l effectively runs at regularization eps / l, so budget the
        # inner loop by the accumulated cost magnitude
        f, g, _, converged, _ = _sinkhorn_log_core(
            aw, bw, C_eff, epsilon, tol,
            _default_max_iter(float(np.abs(C_eff).max()), epsilon),
        )
        if not converged:
            raise RuntimeError("inner Sinkhorn did not converge in proximal_point")
        log_P = (f[:, None] + g[None, :] - C_eff) / epsilon
        plans.append(TransportPlan(np.exp(log_P), marginal_tolerance=tol))
    return plans


@dataclass
class BatchReport:
    """Columnwise convergence flags of a batched solve."""

    converged: np.ndarray
    underflow: np.ndarray
    iterations: int
    residuals: np.ndarray


def batched_sinkhorn(
    A: np.ndarray,
    B: np.ndarray,
    C: CostMatrix,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> tuple[np.ndarray, np.ndarray, BatchReport]:
    """Solve N Sinkhorn problems sharing one kernel as matrix-matrix products.

    Columns of A (n x N) and B (m x N) are histogram pairs.  Individual
    columns that underflow are frozen and flagged instead of poisoning the
    batch.  Output scalings match the serial solver columnwise.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError("A and B must be 2-D with matching column counts")
    K = np.exp(-C.entries / epsilon)
    if max_iter is None:
        max_iter = _default_max_iter(C.max_abs, epsilon)
    N = A.shape[1]
    U = np.ones_like(A)
    V = np.ones_like(B)
    alive = np.ones(N, dtype=bool)
    underflow = np.zeros(N, dtype=bool)
    residuals = np.full(N, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        KV = K @ V
        bad = alive & np.any(KV <= 0, axis=0)
        if bad.any():
            underflow |= bad
            alive &= ~bad
        cols = alive
        if not cols.any():
            break
        U[:, cols] = A[:, cols] / KV[:, cols]
        KtU = K.T @ U
        bad = alive & np.any(KtU <= 0, axis=0)
        if bad.any():
            underflow |= bad
            alive &= ~bad
            cols = alive
        if not cols.any():
            break
        V[:, cols] = B[:, cols] / KtU[:, cols]
        residuals[cols] = np.abs(U[:, cols] * (K @ V[:, cols]) - A[:, cols]).sum(axis=0)
        if np.all(residuals[alive] < tol):
            break
    converged = (residuals < tol) & ~underflow
    return U, V, BatchReport(converged, underflow, it, residuals)


def apply_separable_kernel(factors, u: np.ndarray) -> np.ndarray:
    """Apply a Kronecker-factored kernel to a tensor, one axis at a time.

    Equivalent to reshaping u to a vector and multiplying by the dense
    Kronecker product, at O(n^{1+1/d}) cost instead of O(n^2).
    """
    u = np.asarray(u, dtype=np.float64)
    factors = [np.asarray(f, dtype=np.float64) for f in factors]
    if u.ndim != len(factors):
        raise ValueError("tensor order does not match the factor count")
    for axis, Kk in enumerate(factors):
        if Kk.shape[1] != u.shape[axis]:
            raise ValueError(f"factor {axis} does not fit axis size {u.shape[axis]}")
    out = u
    for axis, Kk in enumerate(factors):
        out = np.moveaxis(np.tensordot(Kk, out, axes=([1], [axis])), 0, axis)
    return out
