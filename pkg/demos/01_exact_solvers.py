"""Exact transportation solvers on a small worked instance.

Builds the classic 3x3 marginals, walks through the north-west corner
initialization, solves the LP with the network simplex, certifies the
result through complementary slackness, and cross-checks dual ascent and
the auction algorithm on an assignment variant.
"""

import numpy as np

import otkit as ot

a = ot.Histogram([0.2, 0.5, 0.3])
b = ot.Histogram([0.5, 0.1, 0.4])
print("marginals a =", a.weights, " b =", b.weights)

# vertex initialization: the north-west corner table
P0 = ot.northwest_corner(a, b)
print("\nNW corner vertex:\n", P0.matrix)
print("permuted variant:\n",
      ot.northwest_corner(a, b, sigma=[2, 0, 1], sigma_prime=[2, 1, 0]).matrix)

# a cost with structure: zero diagonal plus asymmetric off-diagonal entries
C = ot.CostMatrix([[0.0, 2.0, 1.0], [3.0, 0.0, 5.0], [4.0, 2.0, 0.0]])
value, plan, duals, pivots = ot.network_simplex(a, b, C)
print(f"\nnetwork simplex: value {value:.6f} after {pivots} pivots")
print("optimal plan:\n", plan.matrix)
print("duals f =", duals.f, " g =", duals.g)
print("dual objective:", duals.objective(a, b))

cert = ot.certify_optimality(plan, duals, a, b, C)
print("certificate:", "optimal" if cert.optimal else cert.violations)

value_da, duals_da, plan_da = ot.dual_ascent(a, b, C)
print(f"\ndual ascent reaches the same value: {value_da:.6f}")

# assignment problem: uniform marginals, auction with epsilon scaling
rng = np.random.default_rng(1)
n = 6
C_assign = ot.CostMatrix(rng.integers(0, 50, size=(n, n)).astype(float))
sigma, prices, cost = ot.auction_scaled(C_assign, epsilon=1e-8)
uniform = ot.Histogram(np.full(n, 1.0 / n))
value_ns, _, _, _ = ot.network_simplex(uniform, uniform, C_assign)
print(f"\nauction assignment {sigma} costs {cost:.0f}; "
      f"network simplex value * n = {value_ns * n:.0f}")
