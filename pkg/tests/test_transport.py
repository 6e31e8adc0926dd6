import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgldstab.bounds import lipschitz_constants
from sgldstab.harness.experiments import check_convexity
from sgldstab.transport import (GFunction, SemimetricParams, brute_force_assignment,
                                check_semimetric_lemmas, estimate_w_upper, eval_g,
                                exact_cost_assignment, exact_w1_sorted_1d, exact_wp_assignment,
                                lyapunov_v, rho, rho_g, weak_triangle_coefficient)


def test_eval_g_examples():
    g = GFunction(2.0)
    assert eval_g(g, 0.0) == 0.0
    assert eval_g(g, 1.0) == 1.0
    assert eval_g(g, 4.0) == 2.0
    with pytest.raises(ValueError):
        eval_g(g, -0.1)
    with pytest.raises(ValueError):
        GFunction(0.0)
    with pytest.raises(ValueError):
        GFunction(1.0, phi=1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 1), st.floats(0.1, 10))
def test_cap_is_concave_non_decreasing(r1, r2, w, R):
    g = GFunction(R)
    lo, hi = min(r1, r2), max(r1, r2)
    assert eval_g(g, lo) <= eval_g(g, hi)
    assert eval_g(g, w * r1 + (1 - w) * r2) >= w * eval_g(g, r1) + (1 - w) * eval_g(g, r2) - 1e-12
    assert eval_g(g, lo) <= lo


def test_rho_examples():
    p = SemimetricParams(GFunction(2.0), 0.5)
    assert rho([0.0], [1.0], p) == pytest.approx(2.5)
    assert rho([0.3, 0.2], [0.3, 0.2], p) == 0.0
    # beyond the plateau only the weight keeps growing
    assert rho([-5.0], [5.0], p) == pytest.approx(2.0 * (1 + 1 + 12.5 + 12.5))
    with pytest.raises(ValueError):
        rho([0.0], [0.0, 1.0], p)
    with pytest.raises(ValueError):
        SemimetricParams(GFunction(1.0), 0.0)


def test_lyapunov_v():
    assert lyapunov_v([3.0, 4.0]) == 26.0
    np.testing.assert_array_equal(lyapunov_v(np.zeros((3, 2))), [1.0, 1.0, 1.0])


def test_rho_g_triangle_inequality():
    rng = np.random.default_rng(0)
    x, y, z = 3 * rng.standard_normal((3, 10_000, 3))
    g = GFunction(2.0)
    assert np.all(rho_g(x, y, g) <= rho_g(x, z, g) + rho_g(z, y, g) + 1e-12)
    assert rho_g([1.0], [1.0], g) == 0.0


def test_rho_g_sandwich_against_w1():
    c1 = lipschitz_constants(1.0, 2.0, 1.0, 2.0).c1
    g = GFunction(3.0)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5000, 2))
    y = x + rng.uniform(0, 3.0, (5000, 1)) * np.array([0.6, 0.8])
    r = np.linalg.norm(x - y, axis=1)
    rg = rho_g(x, y, g)
    assert np.all(r / (2 * max(c1, 1)) <= rg) and np.all(rg <= r + 1e-12)


def test_estimate_w_upper_examples():
    x = np.zeros((10, 1))
    zero = estimate_w_upper(x, x)
    assert (zero.value, zero.sem, zero.estimator) == (0.0, 0.0, "coupling_mean")
    one = estimate_w_upper(np.zeros((10, 1)), np.ones((10, 1)))
    assert (one.value, one.sem) == (1.0, 0.0)
    sq = estimate_w_upper(np.zeros((4, 2)), np.full((4, 2), 1.0), cost="w2sq")
    assert sq.value == pytest.approx(2.0)
    with pytest.raises(ValueError):
        estimate_w_upper(np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        estimate_w_upper(x, x, cost="kl")


def test_exact_w1_sorted_examples():
    assert exact_w1_sorted_1d([0, 1], [0, 1]).value == 0.0
    assert exact_w1_sorted_1d([0], [2]).value == 2.0
    assert exact_w1_sorted_1d([0, 2], [1, 3]).value == 1.0
    with pytest.raises(ValueError):
        exact_w1_sorted_1d([0, 1], [0])


def test_assignment_examples_and_caps():
    a = np.random.default_rng(2).standard_normal((5, 2))
    assert exact_wp_assignment(a, a[::-1]).value == 0.0
    cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    assert exact_cost_assignment(cost) == brute_force_assignment(cost) == pytest.approx(5.0 / 3)
    with pytest.raises(ValueError):
        exact_wp_assignment(np.zeros((257, 1)), np.zeros((257, 1)))
    with pytest.raises(ValueError):
        exact_wp_assignment(np.zeros((3, 1)), np.zeros((4, 1)))
    with pytest.raises(ValueError):
        exact_wp_assignment(a, a, p=3)
    with pytest.raises(ValueError):
        brute_force_assignment(np.zeros((9, 9)))


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(3)
    for i in range(100):
        N = 1 + i % 7
        c = rng.exponential(size=(N, N))
        assert exact_cost_assignment(c) == pytest.approx(brute_force_assignment(c), rel=1e-12)


def test_assignment_matches_sorted_1d():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b = rng.standard_normal(40), 2 * rng.standard_normal(40) + 0.5
        assert exact_wp_assignment(a, b).value == pytest.approx(exact_w1_sorted_1d(a, b).value,
                                                                rel=1e-12)


def test_coupling_estimate_dominates_exact():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.standard_normal((64, 3))
        b = a + rng.standard_normal((64, 3))
        b = b[rng.permutation(64)]
        for p, cost in ((1, "w1"), (2, "w2sq")):
            exact = exact_wp_assignment(a, b, p).value ** p
            assert estimate_w_upper(a, b, cost).value >= exact - 1e-12


def test_brute_force_is_permutation_minimum():
    c = np.arange(16, dtype=float).reshape(4, 4) % 5
    manual = min(sum(c[i, s[i]] for i in range(4)) for s in itertools.permutations(range(4))) / 4
    assert brute_force_assignment(c) == manual


def test_weak_triangle_coefficient():
    assert weak_triangle_coefficient(SemimetricParams(GFunction(2.0), 0.25)) == 2 * (1 + 2 * 1)
    assert weak_triangle_coefficient(SemimetricParams(GFunction(2.0), 1.0)) == 2 * (1 + 2 * 2)


@pytest.mark.parametrize("d", [1, 4, 8])
def test_semimetric_lemmas_hold(d):
    rep = check_semimetric_lemmas(SemimetricParams(GFunction(1.0), 0.5),
                                  np.random.default_rng(d), 20_000, d=d)
    assert rep.passed, [(s.assumption_id, s.worst_violation) for s in rep.details]
    names = {s.assumption_id for s in rep.details}
    assert names >= {"weak_triangle", "symmetry", "perturbation"}


def test_semimetric_degenerate_probes():
    p = SemimetricParams(GFunction(1.0), 0.5)
    x = np.array([[0.3, -0.2]])
    coef = weak_triangle_coefficient(p)
    assert rho(x, x, p)[0] <= rho(x, x, p)[0] + coef * rho(x, x, p)[0]
    X = np.random.default_rng(0).standard_normal((32, 2))
    Y = X + 0.1
    assert rho(X + 0, Y + 0, p).mean() <= rho(X, Y, p).mean()


def test_wasserstein_convexity_on_mixtures():
    res = check_convexity(np.random.default_rng(6), d=2, size=32, instances=20)
    assert res["passed"], res
