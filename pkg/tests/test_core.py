import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import otkit as ot
from conftest import random_histogram


def test_histogram_validation():
    with pytest.raises(ValueError):
        ot.Histogram([0.5, 0.4])  # does not sum to 1
    with pytest.raises(ValueError):
        ot.Histogram([-0.1, 1.1])
    with pytest.raises(ValueError):
        ot.Histogram([])
    h = ot.Histogram([2.0, 3.0], normalize=True)
    assert np.allclose(h.weights, [0.4, 0.6])
    m = ot.Histogram([2.0, 3.0], mode="mass")
    assert m.total_mass == 5.0


def test_histogram_immutable():
    h = ot.Histogram([0.5, 0.5])
    with pytest.raises(ValueError):
        h.weights[0] = 1.0


def test_discrete_measure_rejects_zero_atoms():
    with pytest.raises(ValueError):
        ot.DiscreteMeasure([[0.0], [1.0]], ot.Histogram([0.0, 1.0]))
    m = ot.DiscreteMeasure.drop_zero_atoms(
        np.array([[0.0], [1.0], [2.0]]), ot.Histogram([0.0, 0.25, 0.75])
    )
    assert m.n == 2
    assert np.allclose(m.weights.weights, [0.25, 0.75])


def test_build_cost_values():
    one = ot.DiscreteMeasure([[1.0, 2.0]], ot.Histogram([1.0]))
    assert ot.build_cost(one, one, 2.0).entries[0, 0] == 0.0

    src = ot.DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], ot.Histogram([0.5, 0.5]))
    tgt = ot.DiscreteMeasure([[0.0, 1.0]], ot.Histogram([1.0]))
    C = ot.build_cost(src, tgt, 2.0)
    assert np.allclose(C.entries, [[1.0], [2.0]])

    corners = ot.DiscreteMeasure.uniform(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    )
    D = ot.build_cost(corners, corners, 1.0).entries
    assert np.allclose(D, D.T)
    assert np.allclose(np.diag(D), 0.0)
    off = D[~np.eye(4, dtype=bool)]
    assert set(np.round(off, 12)) == {1.0, np.round(np.sqrt(2.0), 12)}


def test_build_cost_dimension_mismatch():
    a = ot.DiscreteMeasure([[0.0]], ot.Histogram([1.0]))
    b = ot.DiscreteMeasure([[0.0, 0.0]], ot.Histogram([1.0]))
    with pytest.raises(ValueError):
        ot.build_cost(a, b)


def test_build_cost_transpose_symmetry(rng):
    src = ot.DiscreteMeasure.uniform(rng.random((5, 3)))
    tgt = ot.DiscreteMeasure.uniform(rng.random((4, 3)))
    C1 = ot.build_cost(src, tgt, 1.7)
    C2 = ot.build_cost(tgt, src, 1.7)
    assert np.array_equal(C1.entries, C2.entries.T)


def test_validate_plan_cases(rng):
    a = random_histogram(rng, 4)
    b = random_histogram(rng, 6)
    prod = ot.TransportPlan(np.outer(a.weights, b.weights))
    rep = ot.validate_plan(prod, a, b)
    assert rep.row_error < 1e-14 and rep.col_error < 1e-14

    diag = ot.TransportPlan(np.diag(a.weights))
    rep = ot.validate_plan(diag, a, a)
    assert rep.total < 1e-14

    zero = ot.TransportPlan(np.zeros((4, 6)))
    rep = ot.validate_plan(zero, a, b)
    assert rep.row_error == pytest.approx(1.0)
    assert rep.col_error == pytest.approx(1.0)

    with pytest.raises(ValueError):
        ot.validate_plan(zero, b, a)


def test_validate_plan_permutation_invariance(rng):
    a = random_histogram(rng, 5)
    b = random_histogram(rng, 5)
    P = np.outer(a.weights, b.weights)
    perm = rng.permutation(5)
    rep1 = ot.validate_plan(ot.TransportPlan(P), a, b)
    rep2 = ot.validate_plan(
        ot.TransportPlan(P[perm]), ot.Histogram(a.weights[perm]), b
    )
    assert rep1.row_error == pytest.approx(rep2.row_error)
    assert rep1.col_error == pytest.approx(rep2.col_error)


def test_barycentric_projection(rng):
    n = 4
    targets = ot.DiscreteMeasure.uniform(rng.random((n, 2)))
    a = ot.Histogram(np.full(n, 1.0 / n))
    perm = rng.permutation(n)
    P = ot.TransportPlan(np.eye(n)[perm].T / n)
    mapped = ot.barycentric_projection(P, a, targets)
    assert np.allclose(mapped, targets.points[perm])

    b = random_histogram(rng, 6)
    beta = ot.DiscreteMeasure.uniform(rng.random((6, 2)))
    prod = ot.TransportPlan(np.outer(a.weights, np.full(6, 1 / 6)))
    mapped = ot.barycentric_projection(prod, a, beta)
    assert np.allclose(mapped, beta.points.mean(axis=0)[None, :].repeat(n, 0))


def test_barycentric_projection_monotone_1d(rng):
    # optimal 1-D plan maps sorted sources to monotone targets
    xs = np.sort(rng.normal(size=8))
    ys = np.sort(rng.normal(size=8))
    alpha = ot.DiscreteMeasure.uniform(xs[:, None])
    beta = ot.DiscreteMeasure.uniform(ys[:, None])
    plan = ot.monge_plan_1d(alpha, beta)
    mapped = ot.barycentric_projection(plan, alpha.weights, beta)
    assert np.all(np.diff(mapped[:, 0]) >= -1e-12)
    assert np.allclose(mapped[:, 0], ys)


def test_push_forward():
    m = ot.DiscreteMeasure([[0.0, 0.0], [1.0, 1.0]], ot.Histogram([0.3, 0.7]))
    same = ot.push_forward(m, lambda p: p)
    assert np.allclose(same.points, m.points)

    shifted = ot.push_forward(m, lambda p: p + np.array([2.0, -1.0]))
    assert np.allclose(shifted.points - m.points, [2.0, -1.0])
    assert np.array_equal(shifted.weights.weights, m.weights.weights)

    collapsed = ot.push_forward(m, lambda p: np.zeros(2))
    assert collapsed.n == 2  # atoms are kept separate, no merging


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=8), st.integers(0, 10**6))
def test_push_forward_preserves_mass(weights, seed):
    w = np.asarray(weights)
    h = ot.Histogram(w, mode="mass")
    pts = np.random.default_rng(seed).random((len(weights), 2))
    m = ot.DiscreteMeasure(pts, h)
    out = ot.push_forward(m, lambda p: 3.0 * p - 1.0)
    assert out.weights.total_mass == pytest.approx(m.weights.total_mass, abs=0)


def test_dual_pair_centering_and_feasibility(rng):
    C = ot.CostMatrix(rng.random((3, 4)) + 1.0)
    d = ot.DualPair(rng.random(3), rng.random(4) - 2.0)
    c = d.centered()
    assert abs(c.f.sum()) < 1e-12
    # centering preserves f_i + g_j
    assert np.allclose(
        c.f[:, None] + c.g[None, :], d.f[:, None] + d.g[None, :]
    )
    assert d.is_feasible(C) == c.is_feasible(C)


def test_scalings_to_duals():
    s = ot.Scalings([1.0, np.e], [np.e**2], epsilon=0.5)
    d = s.to_duals()
    assert np.allclose(d.f, [0.0, 0.5])
    assert np.allclose(d.g, [1.0])
    with pytest.raises(ValueError):
        ot.Scalings([0.0, 1.0], [1.0], 1.0)
