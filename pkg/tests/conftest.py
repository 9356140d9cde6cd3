"""Shared oracles and helpers for the test suite.

The brute-force LP oracle enumerates every basic solution of the
transportation polytope (spanning trees of the bipartite graph), so it is
fully independent of the solvers under test.
"""

from __future__ import annotations

from itertools import combinations, permutations

import numpy as np
import pytest

import otkit as ot


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_histogram(rng, n, floor=0.1):
    w = rng.random(n) + floor
    return ot.Histogram(w / w.sum())


def brute_force_transport(a, b, C):
    """Minimal cost over all vertices of U(a, b) by spanning-tree enumeration."""
    aw = a.weights if hasattr(a, "weights") else np.asarray(a)
    bw = b.weights if hasattr(b, "weights") else np.asarray(b)
    Ce = C.entries if hasattr(C, "entries") else np.asarray(C)
    n, m = Ce.shape
    edges = [(i, j) for i in range(n) for j in range(m)]
    best = np.inf
    for combo in combinations(edges, n + m - 1):
        parent = list(range(n + m))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for i, j in combo:
            ri, rj = find(i), find(n + j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if not ok:
            continue
        # unique flow on the tree via leaf elimination
        flow = {}
        deg = {}
        adj = {}
        for i, j in combo:
            adj.setdefault(i, []).append(n + j)
            adj.setdefault(n + j, []).append(i)
            deg[i] = deg.get(i, 0) + 1
            deg[n + j] = deg.get(n + j, 0) + 1
        supply = np.concatenate([aw, -bw])
        work = dict(adj)
        degrees = dict(deg)
        sup = supply.copy()
        leaves = [v for v, d in degrees.items() if d == 1]
        alive = {v: set(ws) for v, ws in work.items()}
        feasible = True
        while leaves:
            v = leaves.pop()
            if degrees.get(v, 0) != 1:
                continue
            u = next(iter(alive[v]))
            amount = sup[v] if v < n else -sup[v]
            edge = (v, u - n) if v < n else (u, v - n)
            if amount < -1e-12:
                feasible = False
                break
            flow[edge] = amount
            sup[u] += sup[v]
            sup[v] = 0.0
            alive[v].discard(u)
            alive[u].discard(v)
            degrees[v] -= 1
            degrees[u] -= 1
            if degrees[u] == 1:
                leaves.append(u)
        if not feasible:
            continue
        cost = sum(Ce[i, j] * f for (i, j), f in flow.items())
        best = min(best, cost)
    return best


def brute_force_assignment(Ce):
    n = Ce.shape[0]
    return min(sum(Ce[i, p[i]] for i in range(n)) for p in permutations(range(n)))


def linear_bin(points, weights, n):
    """Area-weighted deposit of 1-D atoms onto cell centers (i + 1/2) / n."""
    h = np.zeros(n)
    u = np.asarray(points).ravel() * n - 0.5
    i0 = np.clip(np.floor(u).astype(int), 0, n - 1)
    i1 = np.clip(i0 + 1, 0, n - 1)
    frac = np.clip(u - i0, 0.0, 1.0)
    np.add.at(h, i0, weights * (1 - frac))
    np.add.at(h, i1, weights * frac)
    return h


def grid_gaussian(n, mean, std):
    x = (np.arange(n) + 0.5) / n
    h = np.exp(-((x - mean) ** 2) / (2 * std**2))
    return x, h / h.sum()
