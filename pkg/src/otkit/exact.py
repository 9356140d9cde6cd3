"""Exact solvers for the discrete transportation linear program.

The primal path is a forest-based network simplex initialized by the
north-west corner rule; the dual path is a primal-dual ascent built on
Ford-Fulkerson max-flows; assignment problems additionally get the auction
algorithm with epsilon scaling.  All three agree on the optimal value and
their outputs can be certified against each other through complementary
slackness.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import CostMatrix, DualPair, Histogram, TransportPlan

__all__ = [
    "ctransform",
    "cbar_transform",
    "northwest_corner",
    "network_simplex",
    "certify_optimality",
    "dual_ascent",
    "auction",
    "auction_scaled",
    "PivotLimitError",
    "IterationLimitError",
    "CertificateReport",
]

MASS_TOL = 1e-9


class PivotLimitError(RuntimeError):
    """Raised when the simplex exceeds its pivot budget (a cycling bug)."""


class IterationLimitError(RuntimeError):
    """Raised by dual ascent when the iteration budget runs out."""

    def __init__(self, message: str, dual_objective: float):
        super().__init__(message)
        self.dual_objective = dual_objective


def _check_balanced(a: Histogram, b: Histogram) -> None:
    if abs(a.total_mass - b.total_mass) > MASS_TOL:
        raise ValueError(
            f"total masses differ: {a.total_mass} vs {b.total_mass}"
        )


def ctransform(f: np.ndarray, C: CostMatrix) -> np.ndarray:
    """Tightest feasible g given f: (f^C)_j = min_i C_ij - f_i."""
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ValueError("potential must be finite")
    return np.min(C.entries - f[:, None], axis=0)


def cbar_transform(g: np.ndarray, C: CostMatrix) -> np.ndarray:
    """Tightest feasible f given g: (g^Cbar)_i = min_j C_ij - g_j."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("potential must be finite")
    return np.min(C.entries - g[None, :], axis=1)


def northwest_corner(
    a: Histogram,
    b: Histogram,
    sigma: np.ndarray | None = None,
    sigma_prime: np.ndarray | None = None,
) -> TransportPlan:
    """Vertex of the transportation polytope via the north-west corner rule.

    Optional permutations ``sigma``/``sigma_prime`` (0-based) first reorder a
    and b, run the rule, and map the table back to a coupling of the original
    marginals, which reaches other vertices than the canonical one.
    """
    _check_balanced(a, b)
    aw, bw = a.weights, b.weights
    if sigma is not None:
        aw = aw[np.asarray(sigma, dtype=int)]
    if sigma_prime is not None:
        bw = bw[np.asarray(sigma_prime, dtype=int)]

    n, m = aw.size, bw.size
    P = np.zeros((n, m))
    i = j = 0
    r, c = aw[0], bw[0]
    snap = 1e-14 * max(a.total_mass, 1.0)  # kill cancellation residues
    while i < n and j < m:
        t = min(r, c)
        P[i, j] = t
        r -= t
        c -= t
        if r <= snap and i < n:
            i += 1
            if i < n:
                r = aw[i]
        if c <= snap and j < m:
            j += 1
            if j < m:
                c = bw[j]

    if sigma is not None:
        inv = np.argsort(np.asarray(sigma, dtype=int))
        P = P[inv, :]
    if sigma_prime is not None:
        inv = np.argsort(np.asarray(sigma_prime, dtype=int))
        P = P[:, inv]
    return TransportPlan(P)


def support_graph_is_acyclic(P: np.ndarray, tol: float = 0.0) -> bool:
    """Union-find acyclicity check of the bipartite support graph of P."""
    n, m = P.shape
    parent = list(range(n + m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(*np.nonzero(P > tol)):
        ri, rj = find(i), find(n + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def _duals_from_forest(edges, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Tree solve of f_i + g_j = C_ij on every forest edge; the root of each
    # component is its smallest node index (rows 0..n-1, then columns) and
    # gets potential 0.
    n, m = C.shape
    adj: list[list[int]] = [[] for _ in range(n + m)]
    for i, j in edges:
        adj[i].append(n + j)
        adj[n + j].append(i)
    pot = np.full(n + m, np.nan)
    for root in range(n + m):
        if not np.isnan(pot[root]):
            continue
        pot[root] = 0.0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if np.isnan(pot[v]):
                    if u < n:  # u row, v column
                        pot[v] = C[u, v - n] - pot[u]
                    else:
                        pot[v] = C[v, u - n] - pot[u]
                    queue.append(v)
    return pot[:n], pot[n:]


def _forest_path(edges, start: int, goal: int, n: int) -> list[int] | None:
    # BFS path (node list) between two nodes of the bipartite forest.
    adj: dict[int, list[int]] = {}
    for i, j in edges:
        adj.setdefault(i, []).append(n + j)
        adj.setdefault(n + j, []).append(i)
    if start not in adj or goal not in adj:
        return None
    prev = {start: start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            path = [u]
            while path[-1] != start:
                path.append(prev[path[-1]])
            return path[::-1]
        for v in adj.get(u, []):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    return None


@dataclass
class SpanningState:
    """Simplex state: current plan, its spanning forest and tree duals."""

    plan: np.ndarray
    forest: set[tuple[int, int]]
    f: np.ndarray
    g: np.ndarray


def network_simplex(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    max_pivots: int | None = None,
) -> tuple[float, TransportPlan, DualPair, int]:
    """Optimal coupling by the primal network simplex on the bipartite graph.

    Starts from the north-west corner vertex, repeatedly inserts the most
    violating edge (most negative reduced cost, lexicographic tie-break) and
    cancels the created cycle.  Degenerate pivots keep the forest growing
    without moving mass.  Returns ``(value, plan, duals, pivot_count)`` with
    duals complementary to the plan and feasible at exit.
    """
    _check_balanced(a, b)
    Ce = C.entries
    n, m = Ce.shape
    if (n, m) != (len(a), len(b)):
        raise ValueError("cost shape incompatible with the marginals")
    if max_pivots is None:
        max_pivots = 2000 * (n + m) + 10000

    P = northwest_corner(a, b).matrix.copy()
    forest = {(int(i), int(j)) for i, j in zip(*np.nonzero(P))}
    feas_tol = 1e-9 * (1.0 + C.max_abs)

    f, g = _duals_from_forest(forest, Ce)
    pivots = 0
    while True:
        reduced = Ce - f[:, None] - g[None, :]
        viol = np.min(reduced)
        if viol >= -feas_tol:
            break
        if pivots >= max_pivots:
            raise PivotLimitError(
                f"pivot limit {max_pivots} exceeded; anti-cycling rule failed"
            )
        # most negative reduced cost, ties broken lexicographically on (i, j)
        flat = np.flatnonzero(reduced.ravel() <= viol + 0.0)
        enter = int(flat[0])
        ei, ej = divmod(enter, m)

        path = _forest_path(forest, n + ej, ei, n)
        if path is None:
            # joins two trees: degenerate insertion, plan unchanged
            forest.add((ei, ej))
        else:
            # cycle = entering edge + path ej -> ... -> ei; edges traversed
            # row->col gain mass, col->row lose mass
            cycle = [(ei, ej, +1)]
            for u, v in zip(path, path[1:]):
                if u < n:
                    cycle.append((u, v - n, +1))
                else:
                    cycle.append((v, u - n, -1))
            neg = [(i, j) for i, j, s in cycle if s < 0]
            theta = min(P[i, j] for i, j in neg)
            leave = min((i, j) for i, j in neg if P[i, j] <= theta)
            for i, j, s in cycle:
                P[i, j] += s * theta
            P[leave] = 0.0
            forest.discard(leave)
            forest.add((ei, ej))
        f, g = _duals_from_forest(forest, Ce)
        pivots += 1

    value = float(np.sum(P * Ce))
    return value, TransportPlan(P), DualPair(f, g), pivots


@dataclass
class CertificateReport:
    """Outcome of an optimality check, with the violations found."""

    optimal: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.optimal


def certify_optimality(
    P: TransportPlan,
    duals: DualPair,
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    tol: float | None = None,
) -> CertificateReport:
    """Check primal feasibility, dual feasibility and complementary slackness.

    A passing certificate proves joint optimality of the plan and the duals.
    Failures are collected rather than raised.
    """
    if tol is None:
        tol = 1e-9 * (1.0 + C.max_abs)
    violations = []
    row = np.abs(P.matrix.sum(axis=1) - a.weights)
    col = np.abs(P.matrix.sum(axis=0) - b.weights)
    if row.max() > MASS_TOL + tol:
        violations.append(f"row marginal off by {row.max():.3e} at i={row.argmax()}")
    if col.max() > MASS_TOL + tol:
        violations.append(f"col marginal off by {col.max():.3e} at j={col.argmax()}")
    slack = C.entries - duals.f[:, None] - duals.g[None, :]
    if slack.min() < -tol:
        i, j = np.unravel_index(np.argmin(slack), slack.shape)
        violations.append(f"dual infeasible at ({i},{j}): slack {slack.min():.3e}")
    mask = P.matrix > tol
    if mask.any() and np.abs(slack[mask]).max() > tol:
        bad = np.argwhere(mask & (np.abs(slack) > tol))[0]
        violations.append(
            f"slackness violated at ({bad[0]},{bad[1]}): "
            f"|C - f - g| = {np.abs(slack[mask]).max():.3e}"
        )
    return CertificateReport(not violations, violations)


def _max_flow_bipartite(a, b, balanced, tol):
    # Edmonds-Karp on source -> rows -> columns -> sink with capacities
    # (a_i, inf on balanced edges, b_j).  Returns the row-column flow matrix
    # and the set of residual-reachable nodes (the labeling step).
    n, m = balanced.shape
    flow_s = np.zeros(n)
    flow_t = np.zeros(m)
    F = np.zeros((n, m))
    while True:
        prev = {"s": "s"}
        queue = deque(["s"])
        found = False
        while queue and not found:
            u = queue.popleft()
            if u == "s":
                for i in range(n):
                    key = ("r", i)
                    if key not in prev and a[i] - flow_s[i] > tol:
                        prev[key] = u
                        queue.append(key)
            elif u[0] == "r":
                i = u[1]
                for j in range(m):
                    key = ("c", j)
                    if key not in prev and balanced[i, j]:
                        prev[key] = u
                        queue.append(key)
            else:
                j = u[1]
                if b[j] - flow_t[j] > tol:
                    prev["t"] = u
                    found = True
                    break
                for i in range(n):
                    key = ("r", i)
                    if key not in prev and F[i, j] > tol:
                        prev[key] = u
                        queue.append(key)
        if not found:
            reach_rows = {k[1] for k in prev if k not in ("s", "t") and k[0] == "r"}
            reach_cols = {k[1] for k in prev if k not in ("s", "t") and k[0] == "c"}
            return F, reach_rows, reach_cols
        # bottleneck along the augmenting path
        path = ["t"]
        while path[-1] != "s":
            path.append(prev[path[-1]])
        path = path[::-1]
        bottleneck = np.inf
        for u, v in zip(path, path[1:]):
            if u == "s":
                bottleneck = min(bottleneck, a[v[1]] - flow_s[v[1]])
            elif v == "t":
                bottleneck = min(bottleneck, b[u[1]] - flow_t[u[1]])
            elif u[0] == "r" and v[0] == "c":
                pass  # infinite capacity
            else:  # c -> r reverse edge
                bottleneck = min(bottleneck, F[v[1], u[1]])
        for u, v in zip(path, path[1:]):
            if u == "s":
                flow_s[v[1]] += bottleneck
            elif v == "t":
                flow_t[u[1]] += bottleneck
            elif u[0] == "r" and v[0] == "c":
                F[u[1], v[1]] += bottleneck
            else:
                F[v[1], u[1]] -= bottleneck


def dual_ascent(
    a: Histogram,
    b: Histogram,
    C: CostMatrix,
    max_iter: int = 100000,
) -> tuple[float, DualPair, TransportPlan]:
    """Primal-dual ascent: improve feasible potentials along sparse directions.

    Each round computes a Ford-Fulkerson max-flow restricted to balanced
    edges; saturation yields an optimal complementary plan, otherwise the
    labeling sets (S, S') give a strictly improving dual step.
    """
    _check_balanced(a, b)
    Ce = C.entries
    n, m = Ce.shape
    aw, bw = a.weights, b.weights
    tol = 1e-9 * (1.0 + C.max_abs)
    flow_tol = 1e-12 * (1.0 + a.total_mass)

    g = np.zeros(m)
    f = np.min(Ce, axis=1)  # cbar-transform of 0, dual feasible
    for _ in range(max_iter):
        margins = Ce - f[:, None] - g[None, :]
        balanced = margins <= tol
        F, S, Sp = _max_flow_bipartite(aw, bw, balanced, flow_tol)
        if a.total_mass - F.sum() <= max(MASS_TOL, n * m * flow_tol):
            value = float(f @ aw + g @ bw)
            return value, DualPair(f, g), TransportPlan(F * balanced)
        inactive_cols = np.array([j for j in range(m) if j not in Sp], dtype=int)
        rows = np.array(sorted(S), dtype=int)
        if rows.size == 0 or inactive_cols.size == 0:
            raise IterationLimitError(
                "labeling produced no ascent direction (flow already maximal)",
                float(f @ aw + g @ bw),
            )
        eps = np.min(margins[np.ix_(rows, inactive_cols)])
        if eps <= 0:
            raise IterationLimitError(
                "no positive ascent step found (degenerate tolerance)",
                float(f @ aw + g @ bw),
            )
        f[rows] += eps
        for j in Sp:
            g[j] -= eps
    raise IterationLimitError(
        f"iteration limit {max_iter} reached", float(f @ aw + g @ bw)
    )


def auction(
    C: CostMatrix,
    epsilon: float,
    prices: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Bertsekas auction for the assignment problem at fixed epsilon.

    Unassigned bidders grab their best object and cut its price by the
    bid increment (second-best margin plus epsilon), evicting the previous
    owner.  Maintains eps-complementary slackness throughout; the returned
    permutation costs at most ``n * epsilon`` above the optimum.  Prices can
    be warm-started for epsilon scaling.
    """
    Ce = C.entries
    n, m = Ce.shape
    if n != m:
        raise ValueError("auction expects a square cost matrix")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    g = np.zeros(n) if prices is None else np.asarray(prices, dtype=np.float64).copy()
    owner = np.full(n, -1, dtype=int)  # object -> bidder
    xi = np.full(n, -1, dtype=int)  # bidder -> object
    updates = 0
    guard = int(4 * n * (C.max_abs / epsilon + 1)) + 4 * n
    while True:
        unassigned = np.flatnonzero(xi < 0)
        if unassigned.size == 0:
            break
        if updates > guard:  # termination bound n*||C||_inf/eps exceeded
            raise RuntimeError("auction exceeded its termination bound")
        i = int(unassigned[0])
        values = Ce[i] - g
        j1 = int(np.argmin(values))
        if n == 1:
            xi[0] = 0
            owner[0] = 0
            break
        v1 = values[j1]
        rest = np.delete(values, j1)
        v2 = float(np.min(rest))
        g[j1] -= (v2 - v1) + epsilon
        if owner[j1] >= 0:
            xi[owner[j1]] = -1
        owner[j1] = i
        xi[i] = j1
        updates += 1
    cost = float(Ce[np.arange(n), xi].sum())
    return xi, g, cost, updates


def auction_scaled(
    C: CostMatrix,
    epsilon: float,
    scaling: float = 4.0,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Auction with epsilon scaling: restart from eps = ||C||_inf / 2.

    Prices carry over between rounds while the assignment is rebuilt, which
    keeps the total work close to a single cheap run at the final epsilon.
    """
    if C.max_abs == 0:
        n = C.shape[0]
        return np.arange(n), np.zeros(n), 0.0
    eps = max(C.max_abs / 2.0, epsilon)
    prices = None
    while True:
        xi, prices, cost, _ = auction(C, eps, prices=prices)
        if eps <= epsilon:
            return xi, prices, cost
        eps = max(eps / scaling, epsilon)
