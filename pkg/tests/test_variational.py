import numpy as np
import pytest

import otkit as ot
from otkit.variational import (
    FitProblem,
    congestion_potential,
    fit_eulerian,
    grad_wrt_positions,
    grad_wrt_weights,
    jko_step,
    linear_potential,
    neg_entropy_functional,
)
from conftest import grid_gaussian, random_histogram


def entropic_value(a, b, C, eps, tol=1e-11):
    _, _, rep = ot.sinkhorn_log(a, b, C, eps, tol=tol)
    return rep.regularized_cost


# --- gradient in the weights ---------------------------------------------------


def test_grad_weights_matches_finite_differences(rng):
    n, m = 7, 6
    a = random_histogram(rng, n)
    b = random_histogram(rng, m)
    C = ot.CostMatrix(rng.random((n, m)))
    eps = 0.1
    duals = grad_wrt_weights(a, b, C, eps)
    h = 1e-5
    for _ in range(5):
        delta = rng.random(n)
        delta -= delta.mean()
        num = (
            entropic_value(ot.Histogram(a.weights + h * delta, normalize=True), b, C, eps)
            - entropic_value(ot.Histogram(a.weights - h * delta, normalize=True), b, C, eps)
        ) / (2 * h)
        assert duals.f @ delta == pytest.approx(num, rel=1e-4, abs=1e-9)


def test_grad_weights_b_side(rng):
    n = 6
    a = random_histogram(rng, n)
    b = random_histogram(rng, n)
    C = ot.CostMatrix(rng.random((n, n)))
    eps = 0.2
    duals = grad_wrt_weights(a, b, C, eps)
    h = 1e-5
    delta = rng.random(n)
    delta -= delta.mean()
    num = (
        entropic_value(a, ot.Histogram(b.weights + h * delta, normalize=True), C, eps)
        - entropic_value(a, ot.Histogram(b.weights - h * delta, normalize=True), C, eps)
    ) / (2 * h)
    assert duals.g @ delta == pytest.approx(num, rel=1e-4, abs=1e-9)


def test_grad_weights_symmetric_instance(rng):
    n = 6
    a = random_histogram(rng, n)
    Ce = rng.random((n, n))
    Ce = 0.5 * (Ce + Ce.T)
    np.fill_diagonal(Ce, 0.0)
    C = ot.CostMatrix(Ce)
    duals = grad_wrt_weights(a, a, C, 0.1)
    # symmetric self-transport: both potentials coincide after centering
    assert np.abs(duals.f - (duals.g - duals.g.mean())).max() < 1e-7
    assert abs(duals.f.sum()) < 1e-9


def test_grad_weights_centered_and_feasible_across_eps(rng):
    a = random_histogram(rng, 5)
    b = random_histogram(rng, 5)
    C = ot.CostMatrix(rng.random((5, 5)))
    for eps in (0.05, 0.5):
        duals = grad_wrt_weights(a, b, C, eps)
        assert abs(duals.f.sum()) < 1e-9
        assert duals.is_feasible(C, tol=1e-9)


def test_grad_weights_convexity_probe(rng):
    n = 6
    b = random_histogram(rng, n)
    C = ot.CostMatrix(rng.random((n, n)))
    eps = 0.1
    for _ in range(5):
        a1 = random_histogram(rng, n)
        a2 = random_histogram(rng, n)
        mid = ot.Histogram(0.5 * (a1.weights + a2.weights))
        lhs = entropic_value(mid, b, C, eps)
        rhs = 0.5 * entropic_value(a1, b, C, eps) + 0.5 * entropic_value(a2, b, C, eps)
        assert lhs <= rhs + 1e-10


# --- gradient in the positions ---------------------------------------------------


def test_grad_positions_identical_clouds_eps0(rng):
    pts = rng.random((6, 2))
    b = ot.Histogram(np.full(6, 1 / 6))
    grad, sub = grad_wrt_positions(pts, b, pts, epsilon=0.0)
    assert sub
    assert np.abs(grad).max() < 1e-12


def test_grad_positions_single_pair():
    x = np.array([[0.3, 0.4]])
    y = np.array([[1.0, -0.2]])
    grad, _ = grad_wrt_positions(x, ot.Histogram([1.0]), y, epsilon=0.05)
    assert np.allclose(grad[0], 2 * (x[0] - y[0]), atol=1e-9)


def test_grad_positions_finite_differences(rng):
    n = 6
    x = rng.random((n, 2))
    y = rng.random((n, 2))
    b = ot.Histogram(np.full(n, 1 / n))
    eps = 0.05
    grad, sub = grad_wrt_positions(x, b, y, epsilon=eps)
    assert not sub

    def loss(pts):
        src = ot.DiscreteMeasure.uniform(pts)
        C = ot.build_cost(src, ot.DiscreteMeasure(y, b), 2.0)
        return entropic_value(src.weights, b, C, eps)

    h = 1e-5
    fd = np.zeros_like(x)
    for i in range(n):
        for k in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, k] += h
            xm[i, k] -= h
            fd[i, k] = (loss(xp) - loss(xm)) / (2 * h)
    assert np.abs(grad - fd).max() / np.abs(fd).max() < 1e-4


def test_grad_positions_is_barycentric_gap(rng):
    n = 5
    x = rng.random((n, 2))
    y = rng.random((n, 2))
    b = ot.Histogram(np.full(n, 1 / n))
    a = ot.Histogram(np.full(n, 1 / n))
    eps = 0.1
    grad, _ = grad_wrt_positions(x, b, y, a=a, epsilon=eps)
    src = ot.DiscreteMeasure.uniform(x)
    C = ot.build_cost(src, ot.DiscreteMeasure(y, b), 2.0)
    _, plan, _ = ot.sinkhorn_log(a, b, C, eps, tol=1e-12)
    expected = 2 * (a.weights[:, None] * x - plan.matrix @ y)
    assert np.abs(grad - expected).max() < 1e-9


# --- Eulerian fitting -------------------------------------------------------------


def test_fit_eulerian_direct_parameterization(rng):
    n = 12
    x = (np.arange(n) + 0.5) / n
    _, b_weights = grid_gaussian(n, 0.6, 0.15)
    b = ot.Histogram(b_weights)
    C = ot.CostMatrix((x[:, None] - x[None, :]) ** 2)

    def softmax(t):
        e = np.exp(t - t.max())
        return e / e.sum()

    def jac(t):
        p = softmax(t)
        return np.diag(p) - np.outer(p, p)

    problem = FitProblem(softmax, jac, b, C, epsilon=5e-3)
    traj = fit_eulerian(problem, np.zeros(n), steps=60, learning_rate=2.0,
                        tol=1e-10)
    final = softmax(traj[-1])
    # the simplex minimum of a -> MK_eps(a, b) is the self-transport value
    loss_final = entropic_value(ot.Histogram(final), b, C, 5e-3)
    loss_self = entropic_value(b, b, C, 5e-3)
    assert loss_final <= loss_self + 1e-6


def test_fit_eulerian_mixture_weight_recovery(rng):
    # theta mixes two fixed atoms; the optimum matches the target's mixture
    n = 30
    x, b1 = grid_gaussian(n, 0.25, 0.06)
    _, b2 = grid_gaussian(n, 0.75, 0.06)
    true_lam = 0.35
    target = ot.Histogram(true_lam * b1 + (1 - true_lam) * b2)
    C = ot.CostMatrix((x[:, None] - x[None, :]) ** 2)

    def weights_of(t):
        lam = 1 / (1 + np.exp(-t[0]))
        return lam * b1 + (1 - lam) * b2

    def jac(t):
        lam = 1 / (1 + np.exp(-t[0]))
        return ((b1 - b2) * lam * (1 - lam))[:, None]

    problem = FitProblem(weights_of, jac, target, C, epsilon=1e-2)
    traj = fit_eulerian(problem, np.array([1.0]), steps=12, learning_rate=5.0,
                        tol=1e-9)
    lam_hat = 1 / (1 + np.exp(-traj[-1][0]))
    assert abs(lam_hat - true_lam) < 1e-3


def test_fit_eulerian_zero_steps(rng):
    n = 5
    b = random_histogram(rng, n)
    C = ot.CostMatrix(rng.random((n, n)))
    problem = FitProblem(
        lambda t: t, lambda t: np.eye(n), b, C, epsilon=0.1
    )
    traj = fit_eulerian(problem, random_histogram(rng, n).weights, steps=0)
    assert len(traj) == 1


def test_fit_eulerian_loss_never_increases(rng):
    n = 10
    b = random_histogram(rng, n)
    C = ot.CostMatrix(rng.random((n, n)))

    def softmax(t):
        e = np.exp(t - t.max())
        return e / e.sum()

    def jac(t):
        p = softmax(t)
        return np.diag(p) - np.outer(p, p)

    problem = FitProblem(softmax, jac, b, C, epsilon=0.1)
    traj = fit_eulerian(problem, rng.normal(size=n), steps=25)
    losses = [
        entropic_value(ot.Histogram(softmax(t)), b, C, 0.1) for t in traj
    ]
    assert all(l1 >= l2 - 1e-12 for l1, l2 in zip(losses, losses[1:]))


# --- JKO stepping ------------------------------------------------------------------


def _grid_setup(n):
    x = (np.arange(n) + 0.5) / n
    C = ot.CostMatrix((x[:, None] - x[None, :]) ** 2)
    return x, C


def test_jko_zero_tau_is_identity(rng):
    n = 20
    x, C = _grid_setup(n)
    a0 = random_histogram(rng, n)
    out = jko_step(a0, linear_potential(x), tau=0.0, epsilon=1e-3, C=C)
    assert out is a0


def test_jko_linear_drift_downhill():
    n = 40
    x, C = _grid_setup(n)
    _, h = grid_gaussian(n, 0.3, 0.08)
    a = ot.Histogram(h)
    V = (x - 0.85) ** 2
    means = [a.weights @ x]
    for _ in range(6):
        a = jko_step(a, linear_potential(V), tau=0.02, epsilon=5e-4, C=C)
        means.append(a.weights @ x)
    assert all(m2 > m1 for m1, m2 in zip(means, means[1:]))
    assert means[-1] > means[0] + 0.05


def test_jko_mass_and_nonnegativity(rng):
    n = 25
    x, C = _grid_setup(n)
    a0 = random_histogram(rng, n)
    out = jko_step(a0, linear_potential(x**2), tau=0.05, epsilon=1e-3, C=C)
    assert np.all(out.weights >= 0)
    assert out.total_mass == pytest.approx(1.0, abs=1e-9)


def test_jko_neg_entropy_contracts_to_uniform():
    n = 48
    x, C = _grid_setup(n)
    _, h = grid_gaussian(n, 0.4, 0.1)
    a0 = ot.Histogram(h)
    a1 = jko_step(a0, neg_entropy_functional(), tau=0.01, epsilon=5e-4, C=C)
    uni = np.full(n, 1.0 / n)
    assert np.abs(a1.weights - uni).sum() < np.abs(a0.weights - uni).sum()


def test_jko_neg_entropy_matches_heat_flow():
    # one step of argmin W2^2 + tau F approximates heat diffusion with
    # effective time tau / 2 (no 1/(2 tau) normalization in the objective);
    # tau must sit above the grid-locking scale dx^2 for mass to move at all
    n = 48
    x, C = _grid_setup(n)
    _, h = grid_gaussian(n, 0.5, 0.12)
    tau = 5e-3
    assert tau > 2.0 / n**2
    a1 = jko_step(ot.Histogram(h), neg_entropy_functional(), tau=tau,
                  epsilon=2e-4, C=C)
    dx = 1.0 / n
    lap = np.zeros(n)
    lap[1:-1] = (h[2:] - 2 * h[1:-1] + h[:-2]) / dx**2
    lap[0] = (h[1] - h[0]) / dx**2  # no-flux ends
    lap[-1] = (h[-2] - h[-1]) / dx**2
    step = (a1.weights - h)[3:-3]
    ref = (0.5 * tau * lap)[3:-3]
    cos = step @ ref / (np.linalg.norm(step) * np.linalg.norm(ref))
    assert cos > 0.99
    assert 0.6 < np.linalg.norm(step) / np.linalg.norm(ref) < 1.1
    assert np.linalg.norm(step - ref) < 0.35 * np.linalg.norm(ref)


def test_jko_congestion_caps_density():
    n = 40
    x, C = _grid_setup(n)
    _, h = grid_gaussian(n, 0.5, 0.05)
    kappa = 0.8 * h.max()
    a = ot.Histogram(h)
    for _ in range(4):
        a = jko_step(a, congestion_potential(np.zeros(n), kappa), tau=0.05,
                     epsilon=1e-3, C=C)
    assert a.weights.max() <= kappa * (1 + 1e-6)
    assert a.total_mass == pytest.approx(1.0, abs=1e-9)


def test_jko_rejects_unknown_functional(rng):
    from otkit.variational import _Functional

    n = 10
    x, C = _grid_setup(n)
    with pytest.raises(ValueError):
        jko_step(random_histogram(rng, n), _Functional("mystery"), 0.1, 1e-3, C)
