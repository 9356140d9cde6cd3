"""Acceptance suite: one test per release criterion, run at stated tolerances.

Each test prints a ``[criterion NN] PASS`` line on success (run with ``-s``
to see them); a failed assertion marks the criterion red.  Criterion 5 is
implemented twice: once literally as printed (expected to fail: the printed
formula contradicts the identity it cites, see notes/decisions.md) and once
in the corrected form that the derivation supports.
"""

import json
import subprocess
import sys
import time
from itertools import permutations

import numpy as np
import pytest

import otkit as ot
from otkit.entropic import MarginalPenalty, plan_entropy, unbalanced_cost
from otkit.losses import MetricMeasureSpace, gw_energy, sample_directions, sliced_energy
from conftest import grid_gaussian, linear_bin


def _report(num, text):
    print(f"\n[criterion {num:02d}] PASS: {text}")


def _rand_hist(rng, n):
    w = rng.random(n) + 0.1
    return ot.Histogram(w / w.sum())


def test_criterion_01_northwest_corner_reproduction():
    a = ot.Histogram([0.2, 0.5, 0.3])
    b = ot.Histogram([0.5, 0.1, 0.4])
    expected = np.array([[0.2, 0, 0], [0.3, 0.1, 0.1], [0, 0, 0.3]])
    expected_perm = np.array([[0, 0.1, 0.1], [0.5, 0, 0], [0, 0, 0.3]])
    ot.northwest_corner(a, b)  # warm
    t0 = time.perf_counter()
    P = ot.northwest_corner(a, b)
    P2 = ot.northwest_corner(a, b, sigma=[2, 0, 1], sigma_prime=[2, 1, 0])
    elapsed = time.perf_counter() - t0
    # ``exactly'' up to the rounding of the decimal inputs (1e-15 absolute)
    assert np.abs(P.matrix - expected).max() <= 1e-15
    assert np.array_equal(P.matrix > 0, expected > 0)
    assert np.abs(P2.matrix - expected_perm).max() <= 1e-15
    assert np.array_equal(P2.matrix > 0, expected_perm > 0)
    assert elapsed < 1e-3
    _report(1, f"NW tables reproduced, runtime {elapsed * 1e3:.3f} ms < 1 ms")


def test_criterion_02_exact_solver_cross_agreement():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    auction_checked = 0
    for k in range(200):
        if k % 2 == 0:
            n = m = int(rng.integers(2, 13))
            a = ot.Histogram(np.full(n, 1.0 / n))
            b = ot.Histogram(np.full(m, 1.0 / m))
        else:
            n, m = rng.integers(2, 13, size=2)
            a = _rand_hist(rng, n)
            b = _rand_hist(rng, m)
        C = ot.CostMatrix(rng.integers(0, 101, size=(n, m)).astype(float))
        vs, plan_s, duals_s, _ = ot.network_simplex(a, b, C)
        va, duals_a, plan_a = ot.dual_ascent(a, b, C)
        assert abs(vs - va) <= 1e-6
        assert ot.certify_optimality(plan_s, duals_s, a, b, C).optimal
        assert ot.certify_optimality(plan_a, duals_a, a, b, C).optimal
        if k % 2 == 0:
            eps = 1e-6
            sigma, prices, cost = ot.auction_scaled(C, eps)
            assert cost / n <= vs + eps + 1e-12
            assert cost / n >= vs - 1e-9
            auction_checked += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _report(2, f"200 instances agree ({auction_checked} auction runs), "
               f"{elapsed:.1f} s < 10 s")


def test_criterion_03_assignment_tightness():
    rng = np.random.default_rng(303)
    for n in range(2, 7):
        for _ in range(4):
            C = ot.CostMatrix(rng.integers(0, 50, size=(n, n)).astype(float))
            uniform = ot.Histogram(np.full(n, 1.0 / n))
            vs, _, _, _ = ot.network_simplex(uniform, uniform, C)
            brute = min(
                sum(C.entries[i, p[i]] for i in range(n))
                for p in permutations(range(n))
            ) / n
            assert abs(vs - brute) <= 1e-12
    _report(3, "network simplex equals exhaustive permutation minimum, n <= 6")


def test_criterion_04_sinkhorn_limits():
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    n = 48
    uniform = ot.Histogram(np.full(n, 1.0 / n))
    C = ot.CostMatrix(rng.random((n, n)))
    _, plan, _ = ot.sinkhorn(uniform, uniform, C, epsilon=1e3 * C.max_abs,
                             tol=1e-12)
    dev = np.abs(plan.matrix - np.outer(uniform.weights, uniform.weights)).max()
    assert dev <= 1e-6

    a = _rand_hist(rng, 20)
    b = _rand_hist(rng, 20)
    C20 = ot.CostMatrix(rng.random((20, 20)) * 3.0)
    tau = 0.05 * C20.max_abs
    cost, rounded = ot.sinkhorn_rounded(a, b, C20, tau)
    lp, _, _, _ = ot.network_simplex(a, b, C20)
    assert cost <= lp + tau
    rep = ot.validate_plan(rounded, a, b)
    assert rep.total <= 1e-11
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(4, f"product limit dev {dev:.1e} <= 1e-6; schedule within tau; "
               f"{elapsed:.1f} s < 5 s")


@pytest.mark.xfail(
    strict=True,
    reason="spec defect: the printed identity gap = eps*(H+1) contradicts the "
           "derivation it cites, which gives gap = eps*(H-1) under the stated "
           "entropy convention; see notes/decisions.md",
)
def test_criterion_05_gap_identity_as_printed():
    rng = np.random.default_rng(505)
    a = _rand_hist(rng, 10)
    b = _rand_hist(rng, 12)
    C = ot.CostMatrix(rng.random((10, 12)))
    eps = 0.1
    _, plan, rep = ot.sinkhorn_log(a, b, C, eps, tol=1e-13)
    gap = rep.primal_divergence - rep.dual_divergence
    printed = eps * (plan_entropy(plan.matrix) + 1.0)
    assert gap == pytest.approx(printed, rel=1e-6)


def test_criterion_05_gap_identity_corrected():
    rng = np.random.default_rng(505)
    for n, m, eps in ((10, 12, 0.1), (8, 8, 0.5), (15, 9, 0.02)):
        a = _rand_hist(rng, n)
        b = _rand_hist(rng, m)
        C = ot.CostMatrix(rng.random((n, m)))
        _, plan, rep = ot.sinkhorn_log(a, b, C, eps, tol=1e-13)
        assert rep.converged
        gap = rep.primal_divergence - rep.dual_divergence
        assert gap == pytest.approx(
            eps * (plan_entropy(plan.matrix) - 1.0), rel=1e-6
        )
    _report(5, "gap identity primal - dual = eps (H(P) - 1) at 1e-6 relative "
               "(printed '+1' variant xfails; spec defect, see ledger)")


def test_criterion_06_log_domain_equivalence():
    rng = np.random.default_rng(606)
    a = _rand_hist(rng, 14)
    b = _rand_hist(rng, 11)
    C = ot.CostMatrix(rng.random((14, 11)) * 5)
    for eps_rel in (0.05, 0.5):
        eps = eps_rel * C.max_abs
        _, p1, _ = ot.sinkhorn(a, b, C, eps, tol=1e-12)
        _, p2, _ = ot.sinkhorn_log(a, b, C, eps, tol=1e-12)
        assert np.abs(p1.matrix - p2.matrix).max() <= 1e-9
    eps_tiny = 1e-4 * C.max_abs
    with pytest.raises(ot.entropic.SinkhornUnderflowError):
        ot.sinkhorn(a, b, C, eps_tiny)
    _, _, rep = ot.sinkhorn_log(a, b, C, eps_tiny, tol=1e-7)
    assert rep.converged
    _report(6, "dense/log plans agree at 1e-9; log domain survives "
               "eps = 1e-4 ||C|| where dense underflows")


def test_criterion_07_hilbert_contraction():
    rng = np.random.default_rng(707)
    K = rng.random((10, 10)) + 0.05
    lam = ot.contraction_factor(K)
    for _ in range(100):
        v = rng.random(10) + 0.01
        vp = rng.random(10) + 0.01
        assert ot.hilbert_metric(K @ v, K @ vp) <= lam * ot.hilbert_metric(v, vp) + 1e-12

    # per-iteration dual contraction toward the fixed point
    a = _rand_hist(rng, 10)
    b = _rand_hist(rng, 10)
    C = ot.CostMatrix(rng.random((10, 10)))
    eps = 0.4
    Ks = np.exp(-C.entries / eps)
    lam2 = ot.contraction_factor(Ks) ** 2
    scal, _, _ = ot.sinkhorn(a, b, C, eps, tol=1e-14)
    u_star = scal.u
    u = np.ones(10)
    v = np.ones(10)
    prev = ot.hilbert_metric(u, u_star)
    for _ in range(40):
        u = a.weights / (Ks @ v)
        v = b.weights / (Ks.T @ u)
        cur = ot.hilbert_metric(u, u_star)
        if prev < 1e-12:
            break
        assert cur <= lam2 * prev + 1e-9
        prev = cur
    _report(7, f"contraction bound holds on 100 pairs; per-iteration dual "
               f"rate <= lambda^2 = {lam2:.4f}")


def test_criterion_08_one_dimensional_oracle_chain():
    rng = np.random.default_rng(808)
    for _ in range(100):
        n, m = rng.integers(5, 11, size=2)
        alpha = ot.DiscreteMeasure(np.sort(rng.normal(size=n))[:, None],
                                   _rand_hist(rng, n))
        beta = ot.DiscreteMeasure(np.sort(rng.normal(0.5, 1.2, size=m))[:, None],
                                  _rand_hist(rng, m))
        C = ot.build_cost(alpha, beta, 2.0)
        lp, _, _, _ = ot.network_simplex(alpha.weights, beta.weights, C)
        assert abs(ot.w_p_1d(alpha, beta, 2.0) ** 2 - lp) <= 1e-9
    # entropic chain on a subset (1% tolerance at eps = 1e-3 ||C||)
    for _ in range(10):
        n = 8
        alpha = ot.DiscreteMeasure(np.sort(rng.normal(size=n))[:, None],
                                   _rand_hist(rng, n))
        beta = ot.DiscreteMeasure(np.sort(rng.normal(0.5, 1.0, size=n))[:, None],
                                  _rand_hist(rng, n))
        C = ot.build_cost(alpha, beta, 2.0)
        lp, _, _, _ = ot.network_simplex(alpha.weights, beta.weights, C)
        _, plan, rep = ot.sinkhorn_log(alpha.weights, beta.weights, C,
                                       1e-3 * C.max_abs, tol=1e-10)
        rounded = ot.round_to_feasible(plan, alpha.weights, beta.weights)
        assert abs(rounded.cost(C) - lp) <= 0.01 * max(lp, 0.01 * C.max_abs)
    _report(8, "w_p_1d = LP within 1e-9 on 100 instances; Sinkhorn at "
               "1e-3 ||C|| within 1%")


def test_criterion_09_gaussian_oracle_chain():
    _, h0 = grid_gaussian(128, 0.3, 0.05)
    _, h1 = grid_gaussian(128, 0.7, 0.05)
    value, _ = ot.benamou_brenier(h0, h1, T=32)
    closed = ot.gaussian_w2(ot.Gaussian([0.3], [[0.05**2]]),
                            ot.Gaussian([0.7], [[0.05**2]]))
    assert abs(value - closed) / closed <= 0.05

    rng = np.random.default_rng(909)
    sigmas = rng.random(3) + 0.2
    lam = rng.random(3)
    lam /= lam.sum()
    g, _ = ot.gaussian_barycenter([np.zeros(1)] * 3,
                                  [np.array([[s**2]]) for s in sigmas], lam)
    assert abs(np.sqrt(g.cov[0, 0]) - lam @ sigmas) <= 1e-8
    _report(9, f"dynamic value {value:.4f} vs closed form {closed:.4f} "
               f"({abs(value-closed)/closed:.1%}); 1-D sigma* exact to 1e-8")


def test_criterion_10_non_hilbertianity():
    t0 = time.perf_counter()
    ev1 = ot.hilbertianity_counterexample(1.0)
    ev2 = ot.hilbertianity_counterexample(2.0)
    elapsed = time.perf_counter() - t0
    assert ev1 > 1e-8 and ev2 > 1e-8
    assert elapsed < 5.0
    _report(10, f"max eigenvalues {ev1:.3f} (p=1), {ev2:.3f} (p=2) > 1e-8; "
                f"{elapsed:.1f} s < 5 s")


def test_criterion_11_unbalanced_limits():
    rng = np.random.default_rng(1111)
    n = 12
    pts = ((np.arange(n) + 0.5) / n)[:, None]
    a = _rand_hist(rng, n)
    b = _rand_hist(rng, n)
    C = ot.build_cost(ot.DiscreteMeasure(pts, a), ot.DiscreteMeasure(pts, b), 2.0)

    eps = 0.1 * C.max_abs
    tau = 1e3 * eps
    F = MarginalPenalty.kl(a.weights, tau)
    G = MarginalPenalty.kl(b.weights, tau)
    _, plan, _ = ot.generalized_sinkhorn(F, G, C, eps, tol=1e-12)
    _, _, rep = ot.sinkhorn_log(a, b, C, eps, tol=1e-12)
    rel = abs(plan.cost(C) - rep.primal_divergence) / rep.primal_divergence
    assert rel <= 0.01

    tau_small = 1e-4
    F = MarginalPenalty.kl(a.weights, tau_small)
    G = MarginalPenalty.kl(b.weights, tau_small)
    _, plan2, _ = ot.generalized_sinkhorn(F, G, C, epsilon=tau_small * 1e-2,
                                          tol=1e-13)
    hell = np.sum((np.sqrt(a.weights) - np.sqrt(b.weights)) ** 2)
    mk = unbalanced_cost(plan2, C, F, G)
    assert abs(mk / tau_small - hell) / hell <= 0.02
    _report(11, f"tau = 1e3 eps within {rel:.2%} of balanced; "
                f"MK^tau/tau -> Hellinger^2 within 2%")


def test_criterion_12_barycenter_consistency():
    from otkit.barycenter import BarycenterProblem, barycenter_1d, entropic_barycenter

    n = 64
    x = (np.arange(n) + 0.5) / n
    C = ot.CostMatrix((x[:, None] - x[None, :]) ** 2)
    _, b1 = grid_gaussian(n, 0.25, 0.05)
    b2 = np.roll(b1, 24)
    prob = BarycenterProblem([(ot.Histogram(b1), C), (ot.Histogram(b2), C)],
                             weights=[0.5, 0.5], epsilon=1e-4)
    a, _, rep = entropic_barycenter(prob)
    assert rep.converged
    m1 = ot.DiscreteMeasure(x[:, None], ot.Histogram(b1))
    m2 = ot.DiscreteMeasure(x[:, None], ot.Histogram(b2))
    oracle = barycenter_1d([m1, m2])
    ref = linear_bin(oracle.points[:, 0], oracle.weights.weights, n)
    err = np.abs(a.weights - ref).sum()
    assert err <= 3.0 / n

    single = BarycenterProblem([(ot.Histogram(b1), C)], epsilon=1e-4)
    a1, _, _ = entropic_barycenter(single)
    err1 = np.abs(a1.weights - b1).sum()
    assert err1 <= 3.0 / n
    _report(12, f"two-input barycenter within {err:.4f} <= 3 cells of the 1-D "
                f"oracle; S=1 within {err1:.4f}")


def test_criterion_13_gromov_wasserstein_isometry():
    rng = np.random.default_rng(1313)
    pts = rng.random((12, 2))
    theta = 0.9
    R = np.array([[np.cos(theta), -np.sin(theta)],
                  [np.sin(theta), np.cos(theta)]])
    moved = (pts @ R.T + np.array([2.0, -1.0]))[rng.permutation(12)]
    X = MetricMeasureSpace.from_points(ot.DiscreteMeasure.uniform(pts))
    Y = MetricMeasureSpace.from_points(ot.DiscreteMeasure.uniform(moved))
    e_iso, _ = ot.entropic_gw(X, Y, epsilon=1e-3)
    assert e_iso <= 1e-6

    r = np.random.default_rng(0)  # fixed representative instance
    Xs = MetricMeasureSpace.from_points(ot.DiscreteMeasure.uniform(r.random((4, 2))))
    Ys = MetricMeasureSpace.from_points(
        ot.DiscreteMeasure.uniform(r.random((4, 2)) * 2.0)
    )
    brute = min(
        gw_energy(Xs.distances, Ys.distances, np.eye(4)[list(p)].T * 0.25)
        for p in permutations(range(4))
    )
    e4, _ = ot.entropic_gw(Xs, Ys, epsilon=1e-3)
    assert abs(e4 - brute) <= 1e-6
    _report(13, f"isometry energy {e_iso:.2e} <= 1e-6; n=4 within "
                f"{abs(e4-brute):.2e} of exhaustive minimum")


def test_criterion_14_gradient_checks():
    rng = np.random.default_rng(1414)
    h = 1e-5
    # weights gradient: 50 instances, directional finite differences
    for _ in range(50):
        n, m = rng.integers(4, 8, size=2)
        a = _rand_hist(rng, n)
        b = _rand_hist(rng, m)
        C = ot.CostMatrix(rng.random((n, m)))
        eps = 0.1
        duals = ot.grad_wrt_weights(a, b, C, eps, tol=1e-12)
        delta = rng.random(n)
        delta -= delta.mean()

        def value(weights):
            _, _, rep = ot.sinkhorn_log(
                ot.Histogram(weights, normalize=True), b, C, eps, tol=1e-12
            )
            return rep.regularized_cost

        num = (value(a.weights + h * delta) - value(a.weights - h * delta)) / (2 * h)
        ana = duals.f @ delta
        assert abs(ana - num) <= 1e-4 * max(abs(num), 1e-6)

    # positions gradient: 50 instances
    for _ in range(50):
        n = int(rng.integers(4, 7))
        x = rng.random((n, 2))
        y = rng.random((n, 2))
        bt = ot.Histogram(np.full(n, 1.0 / n))
        eps = 0.1
        grad, _ = ot.grad_wrt_positions(x, bt, y, epsilon=eps, tol=1e-12)
        direction = rng.normal(size=(n, 2))

        def value_pts(pts):
            src = ot.DiscreteMeasure.uniform(pts)
            C = ot.build_cost(src, ot.DiscreteMeasure(y, bt), 2.0)
            _, _, rep = ot.sinkhorn_log(src.weights, bt, C, eps, tol=1e-12)
            return rep.regularized_cost

        num = (value_pts(x + h * direction) - value_pts(x - h * direction)) / (2 * h)
        ana = float(np.sum(grad * direction))
        assert abs(ana - num) <= 1e-4 * max(abs(num), 1e-6)

    # sliced gradient at fixed seed
    x = rng.random((8, 2))
    beta = ot.DiscreteMeasure.uniform(rng.random((8, 2)))
    dirs = sample_directions(2, 64, seed=14)
    grad = ot.sliced_w_gradient(x, beta, directions=dirs)
    fd = np.zeros_like(x)
    for i in range(8):
        for k in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, k] += h
            xm[i, k] -= h
            fd[i, k] = (sliced_energy(xp, beta, dirs)
                        - sliced_energy(xm, beta, dirs)) / (2 * h)
    assert np.abs(grad - fd).max() <= 1e-4 * np.abs(fd).max()
    _report(14, "all gradients match central differences at 1e-4 relative")


def test_criterion_15_graph_duality():
    from otkit.graph import WeightedGraph

    rng = np.random.default_rng(1515)
    for _ in range(50):
        n = int(rng.integers(4, 31))
        order = rng.permutation(n)
        edges = [(order[k], order[rng.integers(0, k)]) for k in range(1, n)]
        have = {tuple(sorted(e)) for e in edges}
        for _ in range(n):
            i, j = rng.integers(0, n, size=2)
            if i != j and tuple(sorted((i, j))) not in have:
                edges.append((i, j))
                have.add(tuple(sorted((i, j))))
        G = WeightedGraph(n, np.array(edges), rng.random(len(edges)) + 0.2)
        avec = rng.normal(size=n)
        avec -= avec.mean()
        v_flow, flow = ot.w1_graph_flow(avec, G)
        v_pot, f = ot.w1_graph_potential(avec, G)
        assert abs(v_flow - v_pot) <= 1e-8
        # independent recomputations: flow value from the edge array, and
        # the LP value over the geodesic matrix
        assert abs(float(G.lengths @ flow.sum(axis=1)) - v_flow) <= 1e-8
        D = ot.geodesic_matrix(G)
        pos, neg = np.flatnonzero(avec > 0), np.flatnonzero(avec < 0)
        mass = avec[pos].sum()
        lp, _, _, _ = ot.network_simplex(
            ot.Histogram(avec[pos] / mass),
            ot.Histogram(-avec[neg] / mass),
            ot.CostMatrix(D[np.ix_(pos, neg)]),
        )
        assert abs(lp * mass - v_flow) <= 1e-8
    _report(15, "flow = potential = geodesic LP within 1e-8 on 50 graphs")


def test_criterion_16_cli_determinism(tmp_path):
    a = [0.2, 0.5, 0.3]
    b = [0.5, 0.1, 0.4]
    C = [[0.0, 2.0, 1.0], [3.0, 0.0, 5.0], [4.0, 2.0, 0.0]]
    outputs = []
    for run in ("one", "two"):
        d = tmp_path / run
        d.mkdir()
        (d / "a.csv").write_text("\n".join(repr(v) for v in a) + "\n")
        (d / "b.csv").write_text("\n".join(repr(v) for v in b) + "\n")
        (d / "C.csv").write_text(
            "\n".join(",".join(repr(v) for v in row) for row in C) + "\n"
        )
        res = subprocess.run(
            [sys.executable, "-m", "otkit.cli", "dist", "--method", "sinkhorn",
             "--cost", "C.csv", "--a", "a.csv", "--b", "b.csv",
             "--epsilon", "0.25", "--seed", "11", "--output", "run.json",
             "--emit-plan"],
            capture_output=True, text=True, cwd=d,
        )
        assert res.returncode == 0
        outputs.append(
            ((d / "run.json").read_bytes(), (d / "run.plan.csv").read_bytes())
        )
    assert outputs[0] == outputs[1]
    _report(16, "fixed seed CLI runs emit byte-identical files")


def test_separable_kernel_equivalence_note():
    # stands in for the paper's large-scale GPU figures per the spec's note
    rng = np.random.default_rng(1717)
    g = (np.arange(16) + 0.5) / 16
    K1 = np.exp(-((g[:, None] - g[None, :]) ** 2) / 0.05)
    K2 = np.exp(-((g[:, None] - g[None, :]) ** 2) / 0.09)
    u = rng.random((16, 16))
    dense = np.kron(K1, K2) @ u.ravel()
    fast = ot.apply_separable_kernel([K1, K2], u)
    assert np.abs(dense - fast.ravel()).max() <= 1e-10
    _report(0, "separable kernel equals dense product at 1e-10 on 16x16")
