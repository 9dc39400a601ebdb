import math

import numpy as np
import pytest

from liouville_mc.errors import DomainError
from liouville_mc.verify.inequalities import (KahaneMode, block_product_functional, decorrelation_covariances,
                                              girsanov_check, kahane_check, mixed_partial, psd_factor,
                                              random_correlation, run_inequality_suite,
                                              tanh_pairs_functional)


# ---------------------------------------------------------------------------
# helpers

def test_psd_factor_reproduces_covariance():
    gen = np.random.default_rng(0)
    g = gen.standard_normal((4, 2))
    c = g @ g.T                                  # rank 2, singular
    f = psd_factor(c)
    np.testing.assert_allclose(f @ f.T, c, atol=1e-12)
    with pytest.raises(DomainError):
        psd_factor([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DomainError):
        psd_factor([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(DomainError):
        psd_factor(np.ones(3))


def test_mixed_partial_on_polynomial():
    fn = lambda x: x[:, 0] ** 2 * x[:, 1] + 3 * x[:, 1] ** 3
    pts = np.array([[0.5, -1.0], [2.0, 0.3]])
    np.testing.assert_allclose(mixed_partial(fn, pts, 0, 1), 2 * pts[:, 0], rtol=1e-6)
    np.testing.assert_allclose(mixed_partial(fn, pts, 1, 1), 18 * pts[:, 1], rtol=1e-5)
    np.testing.assert_allclose(mixed_partial(fn, pts, 0, 0), 2 * pts[:, 1], rtol=1e-6)


def test_tanh_pairs_partials_follow_coefficients():
    c = np.array([[0, 1.0, -1.0], [0, 0, 0.0], [0, 0, 0]])
    fn = tanh_pairs_functional(c)
    pts = np.random.default_rng(1).standard_normal((50, 3))
    assert np.all(mixed_partial(fn, pts, 0, 1) > 0)
    assert np.all(mixed_partial(fn, pts, 0, 2) < 0)
    np.testing.assert_allclose(mixed_partial(fn, pts, 1, 2), 0, atol=1e-6)


def test_block_product_has_nonnegative_partials():
    fn = block_product_functional([0.5, 1.0, 0.3], [[0, 1], [2]], [1.0, 0.5, 0.2])
    pts = np.random.default_rng(2).standard_normal((50, 3))
    for i in range(3):
        for j in range(i, 3):
            assert np.all(mixed_partial(fn, pts, i, j) >= -1e-6)
    x = np.zeros((1, 3))
    expected = (0.5 * math.exp(-0.5) + 1.0 * math.exp(-0.25)) * 0.3 * math.exp(-0.1)
    assert fn(x)[0] == pytest.approx(expected)


def test_decorrelation_covariances_structure():
    gen = np.random.default_rng(3)
    cx, cy, blocks = decorrelation_covariances(gen, [2, 1, 2])
    labels = np.repeat([0, 1, 2], [2, 1, 2])
    same = labels[:, None] == labels[None, :]
    np.testing.assert_allclose(cx[same], cy[same])
    assert np.all(cx[~same] <= cy[~same] + 1e-12)
    assert blocks == [[0, 1], [2], [3, 4]]
    psd_factor(cx), psd_factor(cy)


# ---------------------------------------------------------------------------
# Girsanov

def test_girsanov_one_dimensional_examples():
    # E[e^{X - 1/2}] = 1 and E[e^{X-1/2} X] = 1 = E[X + 1]
    rep = girsanov_check([[1.0]], [1.0], "one", 200_000, seed=0)
    assert rep.rhs == 1.0 and rep.passed
    assert abs(rep.lhs - 1.0) <= 3 * rep.se
    rep = girsanov_check([[1.0]], [1.0], "tanh_first", 200_000, seed=1)
    exact = np.mean(np.tanh(np.random.default_rng(5).standard_normal(2_000_000) + 1.0))
    assert abs(rep.rhs - exact) < 5e-3 and rep.passed


def test_girsanov_detects_a_wrong_shift():
    # a doubled shift X + 2Cy would move the capped linear mean by sum(Cy), far beyond 3 SE
    c, y = np.array([[1.0, 0.3], [0.3, 0.5]]), np.array([0.6, -0.4])
    rep = girsanov_check(c, y, "capped_linear", 100_000, seed=2)
    shift = c @ y
    assert rep.rhs == pytest.approx(rep.lhs, abs=3 * rep.se)
    assert abs(rep.rhs + shift.sum() - rep.lhs) > 3 * rep.se


def test_girsanov_guards():
    with pytest.raises(DomainError):
        girsanov_check(np.eye(2), [1.0], "one", 10, 0)
    with pytest.raises(DomainError):
        girsanov_check(np.eye(2), [1.0, 0.0], "nope", 10, 0)
    with pytest.raises(DomainError):
        girsanov_check(np.eye(9), np.zeros(9), "one", 10, 0)


# ---------------------------------------------------------------------------
# Kahane

def test_kahane_convexity_square_exact():
    # E[(sum p_i e^{X_i - v_i/2})^2] = sum p_i p_j e^{C_ij}
    cx = np.array([[0.5, 0.1], [0.1, 0.4]])
    cy = cx + 0.2
    p = np.array([0.7, 0.3])
    rep = kahane_check(cx, cy, p, "Convexity", functional="square", n_samples=200_000, seed=3)
    assert rep.lhs == pytest.approx(p @ np.exp(cx) @ p, rel=0.02)
    assert rep.rhs == pytest.approx(p @ np.exp(cy) @ p, rel=0.02)
    assert rep.passed and rep.kind == "KahaneConvexity"


def test_kahane_identity_functional_is_equality():
    cx = np.array([[0.5, 0.1], [0.1, 0.4]])
    rep = kahane_check(cx, cx + 0.3, [1.0, 1.0], KahaneMode.CONVEXITY, functional="identity",
                       n_samples=100_000, seed=4)
    assert abs(rep.lhs - 2.0) < 0.02 and abs(rep.rhs - 2.0) < 0.05


def test_kahane_reversed_covariances_fail_the_inequality():
    # swapping the roles makes E[F(X)] > E[F(Y)] by far more than 3 SE for a strictly convex F
    cx = np.array([[0.5, 0.1], [0.1, 0.4]])
    cy = cx + 0.5
    rep = kahane_check(cx, cy, [1.0, 1.0], "Convexity", functional="square", n_samples=50_000, seed=5)
    assert rep.difference > 10 * rep.se


def test_kahane_guards():
    cx = np.array([[0.5, 0.1], [0.1, 0.4]])
    with pytest.raises(DomainError):
        kahane_check(cx + 0.2, cx, [1, 1], "Convexity")
    with pytest.raises(DomainError):
        kahane_check(cx, cx, [1, -1], "Convexity")
    with pytest.raises(DomainError):
        kahane_check(cx, cx, [1, 1, 1], "Convexity")
    with pytest.raises(DomainError):
        kahane_check(cx, cx + 0.1, [1, 1], "Convexity", functional="nope")
    with pytest.raises(ValueError):
        kahane_check(cx, cx, [1, 1], "Sideways")
    cy = cx.copy()
    cy[0, 1] = cy[1, 0] = 0.3
    # pair (0,1) increases, so it must be in A
    with pytest.raises(DomainError):
        kahane_check(cx, cy, [1, 1], "Diagonal", partition=([], [(0, 1)]), functional="tanh_pairs")
    with pytest.raises(DomainError):
        kahane_check(cx, cy, [1, 1], "Diagonal", partition=([], []), functional="tanh_pairs")
    # a functional with the wrong partial sign is rejected before sampling the comparison
    with pytest.raises(DomainError):
        kahane_check(cx, cy, [1, 1], "Diagonal", functional=lambda x: -x[:, 0] * x[:, 1])
    with pytest.raises(DomainError):
        kahane_check(cx, cy, [1, 1], "Diagonal", functional="square")


def test_kahane_diagonal_inferred_partition():
    gen = np.random.default_rng(6)
    cx, cy = random_correlation(gen, 4), random_correlation(gen, 4)
    rep = kahane_check(cx, cy, np.ones(4), "Diagonal", functional="tanh_pairs", n_samples=50_000, seed=6)
    assert rep.passed and rep.kind == "KahaneDiagonal"


def test_kahane_diagonal_with_callable():
    cx = np.eye(2)
    cy = np.array([[1.0, 0.5], [0.5, 1.0]])
    fn = lambda x: x[:, 0] * x[:, 1]                 # E = covariance: 0 vs 0.5
    rep = kahane_check(cx, cy, [1, 1], "Diagonal", functional=fn, n_samples=100_000, seed=7)
    assert abs(rep.lhs) < 0.02 and rep.rhs == pytest.approx(0.5, abs=0.02)
    assert rep.functional == "<lambda>"


# ---------------------------------------------------------------------------
# suites

@pytest.mark.parametrize("name", ["Girsanov", "KahaneConvexity", "KahaneDiagonal"])
def test_suites_pass_and_are_deterministic(name):
    a = run_inequality_suite(name, n_instances=12, seed=9, n_samples=5000)
    b = run_inequality_suite(name, n_instances=12, seed=9, n_samples=5000)
    assert a == b
    assert all(r.passed for r in a)


def test_unknown_suite():
    with pytest.raises(DomainError):
        run_inequality_suite("nope")
